"""Conditional submodularity: CSM proof sequences from dual CLLP certificates, and their execution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .bounds import LOG_DENOMINATOR, CPair, DualCertificate, is_dual_feasible, log2_leq, log2_up, pair_key, solve_cllp
from .lattice import Lattice, Query
from .relational import Database, Expander, OpCounter, Relation, expand

MAX_RESTARTS = 1000
MAX_LOG_DENOMINATOR = 2**64


class CsmError(RuntimeError):
    pass


class InvariantError(AssertionError):
    pass


# proof sequences -----------------------------------------------------------

Term = tuple[int, int]  # (X, Y) stands for h(Y|X); X = 0̂ gives h(Y)


@dataclass(frozen=True)
class Rule:
    """CD (X,Y): h(Y) -> h(Y|X) + h(X).  CC (X,Y): h(X) + h(Y|X) -> h(Y).
    SM (A,B): h(A) + h(B|A∧B) -> h(A∨B)."""
    kind: str
    a: int
    b: int
    t: int = 1

    def lhs(self, lat: Lattice) -> list[Term]:
        z = lat.hat0
        if self.kind == "CD":
            return [(z, self.b)]
        if self.kind == "CC":
            return [(z, self.a), (self.a, self.b)]
        return [(z, self.a), (lat.meet(self.a, self.b), self.b)]

    def rhs(self, lat: Lattice) -> list[Term]:
        z = lat.hat0
        if self.kind == "CD":
            return [(self.a, self.b), (z, self.a)]
        if self.kind == "CC":
            return [(z, self.b)]
        return [(z, lat.join(self.a, self.b))]

    def show(self, lat: Lattice) -> str:
        def h(term):
            x, y = term
            return f"h({lat.label(y)})" if x == lat.hat0 else f"h({lat.label(y)}|{lat.label(x)})"
        return f"{self.t}x {self.kind}: {' + '.join(map(h, self.lhs(lat)))} -> {' + '.join(map(h, self.rhs(lat)))}"


@dataclass
class CsmSequence:
    rules: list[Rule]
    D: int
    cert: DualCertificate
    order: list[tuple[int, str]] = field(default_factory=list)  # elements in the order they joined K

    @property
    def cd_count(self) -> int:
        return sum(1 for r in self.rules if r.kind == "CD")


def _positive_c(cert: DualCertificate) -> dict[Term, Fraction]:
    return {k: v for k, v in cert.c.items() if v > 0}


def conditional_closure(lat: Lattice, K: Iterable[int], cert: DualCertificate,
                        reasons: dict | None = None) -> set[int]:
    """Close K under going down (CD) and along pairs with positive c (CC)."""
    out = set(K)
    if lat.hat0 not in out:
        raise CsmError("closure needs the bottom element")
    cc = sorted(_positive_c(cert))
    queue = sorted(out)
    while queue:
        v = queue.pop(0)
        for x, y in cc:
            if x == v and y not in out:
                out.add(y)
                queue.append(y)
                if reasons is not None:
                    reasons.setdefault(y, ("CC", x))
        for x in lat.below(v):
            if x not in out:
                out.add(x)
                queue.append(x)
                if reasons is not None:
                    reasons.setdefault(x, ("CD", v))
    return out


def find_violating_pair(lat: Lattice, Kbar: set[int], cert: DualCertificate) -> tuple[int, int]:
    """A pair with s > 0 inside Kbar whose join leaves it; highest pair first, then by key."""
    height = lat.height()
    cands = [(a, b) for (a, b), v in cert.s.items() if v > 0 and a in Kbar and b in Kbar
             and lat.join(a, b) not in Kbar]
    if not cands:
        raise CsmError("no submodularity pair leaves the closure: certificate is not dual feasible")
    return min(cands, key=lambda p: (-(height[p[0]] + height[p[1]]), p))


def build_csm_sequence(lat: Lattice, cert: DualCertificate) -> CsmSequence:
    """Grow K from the bottom by closure and SM pairs until the top is reached, emitting
    only the rules needed to produce h(top); multiplicities are then fixed backwards."""
    z = lat.hat0
    reasons: dict[int, tuple] = {}
    K = conditional_closure(lat, {z}, cert, reasons)
    order = [(x, reasons[x][0]) for x in sorted(K, key=lambda x: lat.height()[x]) if x in reasons]
    while lat.hat1 not in K:
        a, b = find_violating_pair(lat, K, cert)
        j = lat.join(a, b)
        reasons[j] = ("SM", (a, b))
        order.append((j, "SM"))
        before = set(K) | {j}
        K = conditional_closure(lat, before, cert, reasons)
        order += [(x, reasons[x][0]) for x in sorted(K - before, key=lambda x: lat.height()[x])]

    def produce(v, present: set, rules: list):
        if v == z or (z, v) in present:
            return

        def emit(r: Rule):
            rules.append(r)
            present.update(r.rhs(lat))

        kind, arg = reasons[v]
        if kind == "CD":
            produce(arg, present, rules)
            emit(Rule("CD", v, arg))
        elif kind == "CC":
            produce(arg, present, rules)
            emit(Rule("CC", arg, v))
        else:
            # orientation needing fewer new rules, the pair key order on ties
            best = None
            for A, B in (arg, arg[::-1]):
                p2, r2 = set(present), []
                sm_step(A, B, p2, r2)
                if best is None or len(r2) < len(best[1]):
                    best = (p2, r2)
            present.update(best[0])
            rules.extend(best[1])

    def sm_step(A, B, present, rules):
        m = lat.meet(A, B)
        produce(A, present, rules)
        if (m, B) not in present:
            produce(B, present, rules)
            rules.append(Rule("CD", m, B))
            present.update(rules[-1].rhs(lat))
        rules.append(Rule("SM", A, B))
        present.update(rules[-1].rhs(lat))

    rules: list[Rule] = []
    produce(lat.hat1, set(_positive_c(cert)), rules)
    rules, D = _multiplicities(lat, rules, cert)
    return CsmSequence(rules, D, cert, order)


def _multiplicities(lat: Lattice, rules: list[Rule], cert: DualCertificate) -> tuple[list[Rule], int]:
    """Backward pass: each rule runs as often as its outputs are needed downstream."""
    need: dict[Term, int] = {(lat.hat0, lat.hat1): 1}
    ts = [0] * len(rules)
    for i in range(len(rules) - 1, -1, -1):
        r = rules[i]
        t = max([1] + [need.get(term, 0) for term in r.rhs(lat)])
        ts[i] = t
        for term in r.rhs(lat):
            need[term] = max(need.get(term, 0) - t, 0)
        for term in r.lhs(lat):
            if term[0] != term[1]:
                need[term] = need.get(term, 0) + t
    need = {k: v for k, v in need.items() if v}
    c = _positive_c(cert)
    if any(k not in c for k in need):
        raise CsmError("sequence consumes a term that is never produced")
    d = 1
    for v in list(cert.c.values()) + list(cert.s.values()):
        d = d * v.denominator // math.gcd(d, v.denominator)
    scale = 1
    for k, v in need.items():
        scale = max(scale, -(-v // int(c[k] * d)))
    sm_use: dict[tuple[int, int], int] = {}
    for r, t in zip(rules, ts):
        if r.kind == "SM":
            key = pair_key(r.a, r.b)
            sm_use[key] = sm_use.get(key, 0) + t
    for key, t in sm_use.items():
        scale = max(scale, -(-t // int(cert.s[key] * d)))
    return [Rule(r.kind, r.a, r.b, t) for r, t in zip(rules, ts)], d * scale


# degree partitioning -----------------------------------------------------------

@dataclass
class Part:
    rel: Relation
    n_cond: Fraction  # bound on log max degree of X-values
    n_x: Fraction     # bound on log |Π_X|


def _split_bounds(k: int, M: int, n_y: Fraction) -> tuple[Fraction, Fraction] | None:
    """Rational (n_cond, n_x) with log2 M <= n_cond, log2 k <= n_x, n_cond + n_x <= n_y."""
    nc, nx = log2_up(M), log2_up(k)
    if nc + nx <= n_y:
        return nc, nx
    den = 2**24
    while den <= MAX_LOG_DENOMINATOR:
        nc = log2_up(M, den)
        if log2_leq(k, n_y - nc):
            return nc, n_y - nc
        den *= 2**8
    return None


def partition_by_degree(rel: Relation, x_attrs: Sequence[str], n_y: Fraction,
                        counter: OpCounter | None = None) -> list[Part]:
    """Split rel so that each part satisfies n_cond + n_x <= n_y."""
    if not log2_leq(len(rel), n_y):
        raise InvariantError(f"table of size {len(rel)} exceeds its bound 2^{n_y}")
    if counter:
        counter.probes += len(rel)
    idx = rel.index(tuple(x_attrs))
    if not idx:
        return []
    whole = _split_bounds(len(idx), max(len(v) for v in idx.values()), n_y)
    if whole is not None:
        return [Part(rel, *whole)]
    buckets: dict[int, list] = {}
    for key, rows in idx.items():
        buckets.setdefault(len(rows).bit_length() - 1, []).append(key)
    parts = []
    for j in sorted(buckets):
        keys = sorted(buckets[j], key=lambda k: (-len(idx[k]), repr(k)))
        groups = [keys]
        if _split_bounds(len(keys), len(idx[keys[0]]), n_y) is None:
            # the half holding the largest degree gets ceil(c/2) values
            half = (len(keys) + 1) // 2
            groups = [keys[:half], keys[half:]]
        for g in groups:
            if not g:
                continue
            b = _split_bounds(len(g), max(len(idx[k]) for k in g), n_y)
            if b is None:
                raise InvariantError("degree bucket violates the partition inequality")
            parts.append(Part(Relation(rel.schema, [r for k in g for r in idx[k]]), *b))
    return parts


# execution -----------------------------------------------------------------

@dataclass
class Entry:
    guard: Relation
    n: Fraction
    c: Fraction


@dataclass
class BranchState:
    entries: dict[Term, Entry]
    s: dict[tuple[int, int], Fraction]
    m: dict[tuple[int, int], Fraction]
    opt: Fraction
    seq: CsmSequence
    theta: Fraction
    path: tuple = ()

    def copy(self) -> BranchState:
        return BranchState({k: Entry(e.guard, e.n, e.c) for k, e in self.entries.items()},
                           dict(self.s), dict(self.m), self.opt, self.seq, self.theta, self.path)

    def obj(self) -> Fraction:
        return sum((e.c * e.n for e in self.entries.values()), Fraction(0))


@dataclass
class CsmaRun:
    output: Relation
    counter: OpCounter
    opt: Fraction
    sequence: CsmSequence
    ell: int
    theta: Fraction
    leaves: int = 0
    restarts: int = 0
    restart_drops: list[tuple[Fraction, Fraction]] = field(default_factory=list)
    max_excess: Fraction | None = None  # largest cost - OPT seen at a CC or SM rule
    trace: list[dict] = field(default_factory=list)


def default_theta(lat: Lattice, D: int, ell: int) -> Fraction:
    return (D - 1) * (len(lat) ** 2 * log2_up(max(ell, 1)) + 1)


def initial_entries(query: Query, db: Database, lat: Lattice, counter: OpCounter | None = None,
                    denominator: int = LOG_DENOMINATOR) -> dict[Term, Entry]:
    """Cardinality pairs guarded by the expanded inputs plus one pair per degree bound."""
    z = lat.hat0
    entries: dict[Term, Entry] = {}
    for r in query.relations:
        y = lat.element(r.attrs)
        if y != z:
            g = expand(db[r.name], db, query, counter)
            _merge(entries, (z, y), g.reorder(lat.attrs(y)), log2_up(len(db[r.name]), denominator), Fraction(0))
    for b in query.degree_bounds:
        x, y = lat.element(b.given), lat.element(b.of)
        if x != y:
            g = expand(db.degree_bound_guard(b).project(b.of), db, query, counter)
            n = log2_up(b.bound, denominator)
            _merge(entries, (x, y), g.reorder(lat.attrs(y)), n, Fraction(0))
    return entries


def _merge(entries: dict[Term, Entry], key: Term, guard: Relation, n: Fraction, c: Fraction):
    old = entries.get(key)
    if old is None:
        entries[key] = Entry(guard, n, c)
    else:
        entries[key] = Entry(old.guard.intersect(guard), min(old.n, n), old.c + c)


def run_csma(query: Query, db: Database, lat: Lattice, theta: Fraction | None = None, ell: int | None = None,
             counter: OpCounter | None = None, check: bool = True, max_restarts: int = MAX_RESTARTS,
             trace: bool = False, denominator: int = LOG_DENOMINATOR) -> CsmaRun:
    counter = counter or OpCounter()
    names = [r.name for r in query.relations]
    N = max((len(db[nm]) for nm in names), default=0)
    ell = ell if ell is not None else max(2, 2 * math.ceil(math.log2(N + 1)))
    if any(len(db[nm]) == 0 for nm in names):
        empty = CsmSequence([], 1, DualCertificate())
        return CsmaRun(Relation(query.vars, []), counter, Fraction(0), empty, ell, Fraction(0))
    entries = initial_entries(query, db, lat, counter, denominator)
    state = _fresh_state(lat, entries, theta, ell, ())
    run = CsmaRun(Relation(query.vars, []), counter, state.opt, state.seq, ell, state.theta)
    ex = Expander(db, query)
    tops: list[Relation] = []
    _exec(lat, state, 0, run, ex, tops, theta, check, max_restarts, trace)
    out = Relation(query.vars, [])
    for t in tops:
        out = out.union(t.reorder(query.vars))
    for nm in names:
        counter.probes += len(out)
        out = out.semijoin(db[nm])
    out = db.check_fds(out)
    counter.emitted += len(out)
    run.output = out
    return run


def _fresh_state(lat: Lattice, entries: dict[Term, Entry], theta, ell, path) -> BranchState:
    pairs = [CPair(x, y, e.n) for (x, y), e in entries.items()]
    res = solve_cllp(lat, pairs)
    for k, e in entries.items():
        e.c = res.cert.c.get(k, Fraction(0))
    seq = build_csm_sequence(lat, res.cert)
    th = Fraction(theta) if theta is not None else default_theta(lat, seq.D, ell)
    return BranchState(entries, dict(res.cert.s), dict(res.cert.m), res.opt, seq, th, path)


def _check_invariants(lat: Lattice, st: BranchState):
    for (x, y), e in st.entries.items():
        deg = e.guard.max_degree(lat.attrs(x)) if len(e.guard) else 0
        if not log2_leq(deg, e.n):
            raise InvariantError(f"Inv1: guard of h({lat.label(y)}|{lat.label(x)}) has degree {deg} > 2^{e.n}")
    c = {k: e.c for k, e in st.entries.items() if e.c}
    cert = DualCertificate(c=c, s={k: v for k, v in st.s.items() if v}, m={k: v for k, v in st.m.items() if v})
    if any(v < 0 for v in list(c.values()) + list(st.s.values()) + list(st.m.values())):
        raise InvariantError("Inv2: negative dual weight")
    if not is_dual_feasible(lat, cert, skip_bottom=True):
        raise InvariantError("Inv2: adjusted certificate is not dual feasible")
    if st.obj() > st.opt:
        raise InvariantError(f"Inv2: objective {st.obj()} exceeds OPT {st.opt}")


def _take(st: BranchState, key: Term, amount: Fraction) -> Entry:
    e = st.entries.get(key)
    if e is None or e.c < amount:
        raise InvariantError(f"Inv2: term {key} has weight {e.c if e else 0} < {amount}")
    e.c -= amount
    return e


def _exec(lat, st: BranchState, i: int, run: CsmaRun, ex: Expander, tops: list, theta, check, max_restarts, trace):
    counter = run.counter
    if check:
        _check_invariants(lat, st)
    rules = st.seq.rules
    z = lat.hat0
    while i < len(rules):
        r = rules[i]
        eps = Fraction(r.t, st.seq.D)
        if r.kind == "CD":
            x, y = r.a, r.b
            src = st.entries[(z, y)]
            parts = partition_by_degree(src.guard, lat.attrs(x), src.n, counter)
            if trace:
                run.trace.append({"path": st.path, "rule": i, "kind": "CD", "parts": len(parts)})
            for k, part in enumerate(parts):
                child = st.copy()
                child.path = st.path + (k,)
                e = _take(child, (z, y), eps)
                e.guard = part.rel
                if e.c == 0:
                    del child.entries[(z, y)]
                _merge(child.entries, (x, y), part.rel, part.n_cond, eps)
                _merge(child.entries, (z, x), part.rel.project(lat.attrs(x)), part.n_x, eps)
                _exec(lat, child, i + 1, run, ex, tops, theta, check, max_restarts, trace)
            return
        if r.kind == "CC":
            x, y = r.a, r.b
            big, small = st.entries[(x, y)], st.entries[(z, x)]
            target, cost = y, big.n + small.n
        else:
            x, y = r.a, r.b
            m = lat.meet(x, y)
            small, big = st.entries[(z, x)], st.entries[(m, y)]
            target, cost = lat.join(x, y), small.n + big.n
        if run.max_excess is None or cost - st.opt > run.max_excess:
            run.max_excess = cost - st.opt
        if cost > st.opt + st.theta:
            _restart(lat, st, eps, run, ex, tops, theta, check, max_restarts, trace)
            return
        if r.kind == "CC":
            joined = small.guard.join(big.guard, counter)
            table = joined.reorder(lat.attrs(target))
            _take(st, (x, y), eps)
            _take(st, (z, x), eps)
        else:
            joined = small.guard.join(big.guard, counter)
            ta = lat.attrs(target)
            rows = []
            for row in joined:
                vals = ex.row(dict(zip(joined.schema, row)), counter)
                if vals is not None:
                    rows.append(tuple(vals[a] for a in ta))
            table = Relation(ta, rows)
            _take(st, (z, x), eps)
            _take(st, (lat.meet(x, y), y), eps)
            key = pair_key(x, y)
            if st.s.get(key, 0) < eps:
                raise InvariantError(f"Inv2: submodularity weight on {key} below {eps}")
            st.s[key] -= eps
        if trace:
            run.trace.append({"path": st.path, "rule": i, "kind": r.kind, "rows": len(table)})
        _merge(st.entries, (z, target), table, cost, eps)
        if check:
            _check_invariants(lat, st)
        i += 1
    top = st.entries.get((z, lat.hat1))
    if top is None:
        raise CsmError("sequence ended without producing the top element")
    run.leaves += 1
    tops.append(top.guard)


def _restart(lat, st: BranchState, eps: Fraction, run: CsmaRun, ex, tops, theta, check, max_restarts, trace):
    run.restarts += 1
    if run.restarts > max_restarts:
        raise CsmError(f"more than {max_restarts} restarts")
    obj = st.obj()
    entries = {k: Entry(e.guard, e.n, Fraction(0)) for k, e in st.entries.items()}
    fresh = _fresh_state(lat, entries, theta, run.ell, st.path + ("r",))
    drop = eps * st.theta / (1 - eps) if eps < 1 else st.theta
    if not fresh.opt < obj - drop and not (eps >= 1 and fresh.opt < obj):
        raise InvariantError(f"restart optimum {fresh.opt} not below {obj} - {drop}")
    run.restart_drops.append((obj, fresh.opt))
    if trace:
        run.trace.append({"path": st.path, "restart": True, "obj": str(obj), "opt": str(fresh.opt)})
    _exec(lat, fresh, 0, run, ex, tops, theta, check, max_restarts, trace)
