"""Relations, hash indexes, expansion, UDFs, the brute-force oracle and generators."""
from __future__ import annotations

import csv
import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .lattice import Embedding, FD, Query, QueryError, closure

ORACLE_BUDGET = 10**8


class UnexpandableError(RuntimeError):
    """An FD needed on a closure path has neither a guard nor a UDF."""


class OracleOverflow(RuntimeError):
    pass


class LoadError(ValueError):
    """Instance does not satisfy the declared query (guarded FD or degree bound)."""


@dataclass
class OpCounter:
    probes: int = 0
    emitted: int = 0

    @property
    def total(self) -> int:
        return self.probes + self.emitted


class Relation:
    """Immutable set of rows over an ordered schema, with cached hash indexes."""

    __slots__ = ("schema", "rows", "_pos", "_idx")

    def __init__(self, schema: Sequence[str], rows: Iterable[tuple] = ()):
        self.schema = tuple(schema)
        if len(set(self.schema)) != len(self.schema):
            raise ValueError(f"repeated attribute in schema {self.schema}")
        self.rows = frozenset(tuple(r) for r in rows)
        k = len(self.schema)
        for r in self.rows:
            if len(r) != k:
                raise ValueError(f"row {r} does not match schema {self.schema}")
        self._pos = {a: i for i, a in enumerate(self.schema)}
        self._idx: dict[tuple[str, ...], dict] = {}

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        if not isinstance(other, Relation):
            return NotImplemented
        if set(self.schema) != set(other.schema):
            return False
        return self.rows == other.reorder(self.schema).rows

    def __hash__(self):
        return hash((frozenset(self.schema), len(self.rows)))

    def __repr__(self):
        return f"Relation({','.join(self.schema)}; {len(self.rows)} rows)"

    def positions(self, attrs: Sequence[str]) -> tuple[int, ...]:
        return tuple(self._pos[a] for a in attrs)

    def getter(self, attrs: Sequence[str]) -> Callable[[tuple], tuple]:
        ps = self.positions(attrs)
        return lambda r: tuple(r[p] for p in ps)

    def index(self, attrs: Sequence[str]) -> dict[tuple, list[tuple]]:
        """Hash index: key over ``attrs`` -> rows. Built once per attribute order."""
        attrs = tuple(attrs)
        idx = self._idx.get(attrs)
        if idx is None:
            ps = self.positions(attrs)
            idx = {}
            for r in self.rows:
                idx.setdefault(tuple(r[p] for p in ps), []).append(r)
            self._idx[attrs] = idx
        return idx

    def project(self, attrs: Sequence[str]) -> Relation:
        ps = self.positions(attrs)
        return Relation(attrs, {tuple(r[p] for p in ps) for r in self.rows})

    def reorder(self, attrs: Sequence[str]) -> Relation:
        if tuple(attrs) == self.schema:
            return self
        return self.project(attrs)

    def degree(self, z_attrs: Sequence[str], v: tuple) -> int:
        return len(self.index(tuple(z_attrs)).get(tuple(v), ()))

    def max_degree(self, z_attrs: Sequence[str]) -> int:
        idx = self.index(tuple(z_attrs))
        return max((len(v) for v in idx.values()), default=0)

    def semijoin(self, other: Relation) -> Relation:
        common = [a for a in self.schema if a in other._pos]
        keys = other.index(tuple(common)).keys()
        g = self.getter(common)
        return Relation(self.schema, [r for r in self.rows if g(r) in keys])

    def join(self, other: Relation, counter: OpCounter | None = None) -> Relation:
        common = tuple(a for a in self.schema if a in other._pos)
        extra = [a for a in other.schema if a not in self._pos]
        ep = other.positions(extra)
        idx = other.index(common)
        g = self.getter(common)
        out = []
        for r in self.rows:
            if counter:
                counter.probes += 1
            for s in idx.get(g(r), ()):
                out.append(r + tuple(s[p] for p in ep))
        if counter:
            counter.emitted += len(out)
        return Relation(self.schema + tuple(extra), out)

    def union(self, other: Relation) -> Relation:
        return Relation(self.schema, self.rows | other.reorder(self.schema).rows)

    def intersect(self, other: Relation) -> Relation:
        return Relation(self.schema, self.rows & other.reorder(self.schema).rows)

    def select(self, pred: Callable[[tuple], bool]) -> Relation:
        return Relation(self.schema, [r for r in self.rows if pred(r)])

    def as_dicts(self) -> list[dict]:
        return [dict(zip(self.schema, r)) for r in self.rows]


def relation_from_dicts(schema: Sequence[str], rows: Iterable[Mapping]) -> Relation:
    return Relation(schema, [tuple(r[a] for a in schema) for r in rows])


def degree(rel: Relation, z_attrs: Sequence[str], v: tuple) -> int:
    return rel.degree(z_attrs, v)


# UDFs ----------------------------------------------------------------------

class UdfMiss(KeyError):
    pass


class TableUdf:
    """Finite lookup table; a missing key is an error."""

    def __init__(self, table: Mapping[tuple, tuple]):
        self.table = dict(table)

    def __call__(self, *args):
        try:
            return self.table[args]
        except KeyError:
            raise UdfMiss(f"lookup table has no entry for {args}") from None


def _parse_value(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def load_table(path: str | Path, n_keys: int) -> TableUdf:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    body = rows[1:]
    return TableUdf({tuple(map(_parse_value, r[:n_keys])): tuple(map(_parse_value, r[n_keys:])) for r in body})


_CALL = re.compile(r"^(\w+)(?:\((.*)\))?$")


class UdfRegistry:
    """Name -> function from lhs values to rhs values (a tuple, or a scalar for one rhs)."""

    def __init__(self, funcs: Mapping[str, Callable] | None = None, base_dir: str | Path = "."):
        self.funcs: dict[str, Callable] = dict(funcs or {})
        self.base_dir = Path(base_dir)

    def register(self, name: str, fn: Callable):
        self.funcs[name] = fn

    def resolve(self, spec: str, fd: FD) -> Callable:
        if spec in self.funcs:
            return self.funcs[spec]
        m = _CALL.match(spec.strip())
        if not m:
            raise QueryError(f"bad udf reference {spec!r}")
        name, arg = m.group(1), m.group(2)
        if name == "concat":
            return lambda *a: "|".join(map(str, a))
        if name == "proj":
            i = int(arg)
            return lambda *a: a[i]
        if name == "sum_mod":
            mod = int(arg)
            return lambda *a: sum(a) % mod
        if name == "neg_sum_mod":
            mod = int(arg)
            return lambda *a: (-sum(a)) % mod
        if name == "const":
            v = _parse_value(arg)
            return lambda *a: v
        if name == "table":
            tab = load_table(self.base_dir / arg, len(fd.lhs))
            self.funcs[spec] = tab
            return tab
        raise QueryError(f"unknown udf {spec!r}")


def _as_tuple(v, k):
    if k == 1 and not isinstance(v, tuple):
        return (v,)
    return tuple(v)


# database ------------------------------------------------------------------

class Database:
    def __init__(self, query: Query, relations: Mapping[str, Relation], udfs: UdfRegistry | None = None,
                 validate: bool = True):
        self.query = query
        self.udfs = udfs or UdfRegistry()
        self.relations: dict[str, Relation] = {}
        for spec in query.relations:
            if spec.name not in relations:
                raise LoadError(f"no data for relation {spec.name}")
            self.relations[spec.name] = relations[spec.name].reorder(spec.attrs)
        self._udf_cache: dict[int, Callable] = {}
        if validate:
            self.validate()

    def __getitem__(self, name: str) -> Relation:
        return self.relations[name]

    def udf(self, fd: FD) -> Callable:
        key = id(fd)
        fn = self._udf_cache.get(key)
        if fn is None:
            if fd.udf is None:
                raise UnexpandableError(f"fd {''.join(fd.lhs)}->{''.join(fd.rhs)} has no guard or udf")
            fn = self.udfs.resolve(fd.udf, fd)
            self._udf_cache[key] = fn
        return fn

    def degree_bound_guard(self, db) -> Relation:
        if db.guard is not None:
            return self.relations[db.guard]
        for spec in self.query.relations:
            if set(db.of) <= set(spec.attrs):
                return self.relations[spec.name]
        raise QueryError(f"degree bound on {db.of} has no guard relation")

    def validate(self):
        for fd in self.query.fds:
            if fd.guard is None:
                continue
            g = self.relations[fd.guard]
            idx = g.index(fd.lhs)
            get = g.getter(fd.rhs)
            for key, rows in idx.items():
                if len({get(r) for r in rows}) > 1:
                    raise LoadError(f"fd {fd} violated in guard {fd.guard} at {key}")
        for db in self.query.degree_bounds:
            g = self.degree_bound_guard(db).project(db.of)
            if g.max_degree(db.given) > db.bound:
                raise LoadError(f"degree bound {db.of}|{db.given} <= {db.bound} violated")

    def check_fds(self, rel: Relation) -> Relation:
        """Keep rows satisfying every FD (guard membership or UDF recomputation)."""
        fds = [fd for fd in self.query.fds if set(fd.lhs) | set(fd.rhs) <= set(rel.schema)]
        if not fds:
            return rel
        checks = []
        for fd in fds:
            lg, rg = rel.getter(fd.lhs), rel.getter(fd.rhs)
            if fd.guard is not None:
                idx = self.relations[fd.guard].index(fd.lhs)
                gg = self.relations[fd.guard].getter(fd.rhs)
                checks.append(lambda r, lg=lg, rg=rg, idx=idx, gg=gg: any(gg(s) == rg(r) for s in idx.get(lg(r), ())))
            elif fd.udf is not None:
                fn, k = self.udf(fd), len(fd.rhs)
                checks.append(lambda r, lg=lg, rg=rg, fn=fn, k=k: _safe_call(fn, lg(r), k) == rg(r))
        return rel.select(lambda r: all(c(r) for c in checks))


def _safe_call(fn, args, k):
    try:
        return _as_tuple(fn(*args), k)
    except UdfMiss:
        return None


def expand(rel: Relation, db: Database, query: Query | None = None,
           counter: OpCounter | None = None) -> Relation:
    """Fill in the closure of ``rel``'s schema by FD application.

    Guarded FDs are applied by a lookup join with the guard (rows with no
    partner are dropped); UDF-backed FDs are evaluated. Values already present
    must agree with the derived ones, otherwise the row is dropped.
    """
    query = query or db.query
    target = closure(rel.schema, query)
    cur = rel
    while set(cur.schema) != target:
        have = set(cur.schema)
        pick = None
        blocked = None
        for fd in query.fds:
            if set(fd.lhs) <= have and not set(fd.rhs) <= have:
                if fd.guard is None and fd.udf is None:
                    blocked = blocked or fd
                    continue
                pick = fd
                break
        if pick is None:
            raise UnexpandableError(f"cannot expand {cur.schema}: fd {blocked} has no guard or udf")
        cur = _apply_fd(cur, pick, db, counter)
    return cur


def _apply_fd(cur: Relation, fd: FD, db: Database, counter: OpCounter | None) -> Relation:
    new = tuple(a for a in fd.rhs if a not in cur.schema)
    old = tuple(a for a in fd.rhs if a in cur.schema)
    lg = cur.getter(fd.lhs)
    og = cur.getter(old)
    rhs_pos = {a: i for i, a in enumerate(fd.rhs)}
    new_i = [rhs_pos[a] for a in new]
    old_i = [rhs_pos[a] for a in old]
    out = []
    if fd.guard is not None:
        g = db.relations[fd.guard]
        idx = g.index(fd.lhs)
        rg = g.getter(fd.rhs)
        for r in cur.rows:
            hits = idx.get(lg(r))
            if counter:
                counter.probes += 1
            if not hits:
                continue
            vals = rg(hits[0])
            if all(vals[i] == v for i, v in zip(old_i, og(r))):
                out.append(r + tuple(vals[i] for i in new_i))
    else:
        fn, k = db.udf(fd), len(fd.rhs)
        for r in cur.rows:
            if counter:
                counter.probes += 1
            vals = _safe_call(fn, lg(r), k)
            if vals is None:
                continue
            if all(vals[i] == v for i, v in zip(old_i, og(r))):
                out.append(r + tuple(vals[i] for i in new_i))
    if counter:
        counter.emitted += len(out)
    return Relation(cur.schema + new, out)


class Expander:
    """Tuple-at-a-time expansion with cached FD application plans."""

    def __init__(self, db: Database, query: Query | None = None):
        self.db = db
        self.query = query or db.query
        self._plans: dict[frozenset, list] = {}

    def plan(self, attrs: Iterable[str]) -> list:
        key = frozenset(attrs)
        p = self._plans.get(key)
        if p is not None:
            return p
        target = closure(key, self.query)
        have = set(key)
        steps = []
        while have != target:
            pick, blocked = None, None
            for fd in self.query.fds:
                if set(fd.lhs) <= have and not set(fd.rhs) <= have:
                    if fd.guard is None and fd.udf is None:
                        blocked = blocked or fd
                        continue
                    pick = fd
                    break
            if pick is None:
                raise UnexpandableError(f"cannot expand {sorted(key)}: fd {blocked} has no guard or udf")
            if pick.guard is not None:
                g = self.db.relations[pick.guard]
                fn = ("guard", g.index(pick.lhs), g.getter(pick.rhs))
            else:
                fn = ("udf", self.db.udf(pick), len(pick.rhs))
            steps.append((pick, fn))
            have |= set(pick.rhs)
        self._plans[key] = steps
        return steps

    def row(self, values: dict, counter: OpCounter | None = None) -> dict | None:
        """Extend ``values`` (attr -> value) to its closure.

        None on a guard or UDF miss, or when a derived value contradicts a given one.
        FDs whose right side is already bound are not rechecked; callers finish with check_fds.
        """
        for fd, fn in self.plan(values.keys()):
            args = tuple(values[a] for a in fd.lhs)
            if counter:
                counter.probes += 1
            if fn[0] == "guard":
                hits = fn[1].get(args)
                if not hits:
                    return None
                vals = fn[2](hits[0])
            else:
                vals = _safe_call(fn[1], args, fn[2])
                if vals is None:
                    return None
            for a, v in zip(fd.rhs, vals):
                old = values.get(a, _MISSING)
                if old is _MISSING:
                    values[a] = v
                elif old != v:
                    return None
        return values


_MISSING = object()


# oracle --------------------------------------------------------------------

def brute_force_join(query: Query, db: Database, budget: int = ORACLE_BUDGET,
                     counter: OpCounter | None = None) -> Relation:
    """Q^D by backtracking over variables in query order.

    Variables occurring in some relation are bound first, each from the
    intersection of the values allowed by every relation containing it given
    the variables bound so far. Remaining variables are computed by UDFs.
    Every FD is checked as soon as its variables are bound.
    """
    rel_vars = [v for v in query.vars if any(v in r.attrs for r in query.relations)]
    order = list(rel_vars)
    bound = set(order)
    rest = [v for v in query.vars if v not in bound]
    udf_steps = []
    while rest:
        for fd in query.fds:
            if fd.udf is not None and set(fd.lhs) <= bound and not set(fd.rhs) <= bound:
                udf_steps.append(fd)
                bound |= set(fd.rhs)
                rest = [v for v in rest if v not in bound]
                break
        else:
            raise OracleOverflow(f"variables {rest} have no finite active domain")
    pos = {v: i for i, v in enumerate(order)}
    for fd in udf_steps:
        for a in fd.rhs:
            if a not in pos:
                pos[a] = len(pos)
    nvars = len(pos)

    # per-depth candidate generators
    gens = []
    for d, v in enumerate(order):
        srcs = []
        for spec in query.relations:
            if v not in spec.attrs:
                continue
            prior = tuple(a for a in spec.attrs if a in pos and pos[a] < d)
            rel = db.relations[spec.name]
            table: dict[tuple, set] = {}
            pg, vp = rel.getter(prior), rel.positions([v])[0]
            for r in rel.rows:
                table.setdefault(pg(r), set()).add(r[vp])
            srcs.append((tuple(pos[a] for a in prior), table))
        gens.append(srcs)

    # FD checks, attached to the depth where their last variable gets bound
    checks: list[list] = [[] for _ in range(nvars + 1)]
    for fd in query.fds:
        if fd.guard is not None:
            continue  # implied by guard membership
        last = max(pos[a] for a in fd.lhs + fd.rhs)
        fn, k = db.udf(fd), len(fd.rhs)
        checks[last + 1].append((tuple(pos[a] for a in fd.lhs), tuple(pos[a] for a in fd.rhs), fn, k))

    out = []
    steps = 0
    assign = [None] * nvars
    n_rel = len(order)

    def ok(depth):
        for lp, rp, fn, k in checks[depth]:
            vals = _safe_call(fn, tuple(assign[p] for p in lp), k)
            if vals is None or any(vals[i] != assign[p] for i, p in enumerate(rp)):
                return False
        return True

    def finish():
        for fd in udf_steps:
            lp = [pos[a] for a in fd.lhs]
            vals = _safe_call(db.udf(fd), tuple(assign[p] for p in lp), len(fd.rhs))
            if vals is None:
                return
            for a, val in zip(fd.rhs, vals):
                p = pos[a]
                if p >= n_rel and assign[p] is None:
                    assign[p] = val
                elif assign[p] != val:
                    return
        for d in range(n_rel + 1, nvars + 1):
            if not ok(d):
                return
        out.append(tuple(assign[pos[v]] for v in query.vars))

    def rec(depth):
        nonlocal steps
        if depth == n_rel:
            for p in range(n_rel, nvars):
                assign[p] = None
            finish()
            return
        sets = []
        for kp, table in gens[depth]:
            s = table.get(tuple(assign[p] for p in kp))
            if not s:
                return
            sets.append(s)
        cands = min(sets, key=len)
        for val in cands:
            steps += 1
            if steps > budget:
                raise OracleOverflow(f"oracle exceeded {budget} extension steps")
            if any(val not in s for s in sets if s is not cands):
                continue
            assign[depth] = val
            if ok(depth + 1):
                rec(depth + 1)
        assign[depth] = None

    if all(len(db.relations[r.name]) > 0 for r in query.relations):
        if n_rel == 0:
            finish()
        else:
            rec(0)
    if counter is not None:
        counter.probes += steps
        counter.emitted += len(out)
    return Relation(query.vars, out)


# generators ----------------------------------------------------------------

def gen_product(query: Query, sizes: Mapping[str, int]) -> Database:
    """Product instance: every relation is the product of its attribute domains."""
    rels = {}
    for spec in query.relations:
        doms = [range(sizes[a]) for a in spec.attrs]
        rels[spec.name] = Relation(spec.attrs, itertools.product(*doms))
    return Database(query, rels)


def quasi_product_worlds(emb: Embedding, atom_sizes: Sequence[int] | int = 2):
    """Full tuples of the pullback of the product instance over the target atoms.

    A variable x carries the coordinates of the atoms outside f(x+); its value
    is their mixed-radix encoding.
    """
    T, L = emb.target, emb.source
    if isinstance(atom_sizes, int):
        atom_sizes = [atom_sizes] * T.size
    carried = {}
    for v in L.vars:
        m = T.bottom & ~emb(L.var_element(v))
        carried[v] = [i for i in range(T.size) if m >> i & 1]
    worlds = []
    for w in itertools.product(*[range(s) for s in atom_sizes]):
        t = []
        for v in L.vars:
            val = 0
            for i in carried[v]:
                val = val * atom_sizes[i] + w[i]
            t.append(val)
        worlds.append(tuple(t))
    return Relation(L.vars, worlds)


def gen_quasi_product(emb: Embedding, atom_sizes: Sequence[int] | int = 2,
                      udfs: UdfRegistry | None = None) -> Database:
    L = emb.source
    full = quasi_product_worlds(emb, atom_sizes)
    rels = {spec.name: full.project(spec.attrs) for spec in L.query.relations}
    return Database(L.query, rels, udfs)


# TSV I/O -------------------------------------------------------------------

def read_tsv(path: str | Path) -> Relation:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise LoadError(f"{path}: empty file, header row required")
    return Relation(rows[0], [tuple(map(_parse_value, r)) for r in rows[1:] if r])


def write_tsv(rel: Relation, path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(rel.schema)
        for r in sorted(rel.rows, key=_sort_key):
            w.writerow(r)


def _sort_key(r):
    return tuple((0, x) if isinstance(x, int) else (1, str(x)) for x in r)


def sorted_rows(rel: Relation) -> list[tuple]:
    return sorted(rel.rows, key=_sort_key)
