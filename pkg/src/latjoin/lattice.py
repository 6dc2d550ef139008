"""Lattice of FD-closed attribute sets.

Closed sets are bitsets over the query's variable order. Element ids follow a
canonical order (popcount, then the sorted tuple of variable positions), so every
run over the same query produces identical ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

VAR_CAP = 20


class QueryError(ValueError):
    """Malformed query (unknown attribute, duplicate relation, bad bound...)."""


@dataclass(frozen=True)
class FD:
    lhs: tuple[str, ...]
    rhs: tuple[str, ...]
    guard: str | None = None
    udf: str | None = None

    def __str__(self):
        return f"{''.join(self.lhs) if self.lhs else '{}'}->{''.join(self.rhs)}"


@dataclass(frozen=True)
class RelationSpec:
    name: str
    attrs: tuple[str, ...]
    cardinality: int | None = None
    file: str | None = None


@dataclass(frozen=True)
class DegreeBound:
    """|sigma_{given=v} Pi_of(guard)| <= bound for every v."""
    of: tuple[str, ...]
    given: tuple[str, ...]
    bound: int
    guard: str | None = None


@dataclass(frozen=True)
class Query:
    vars: tuple[str, ...]
    relations: tuple[RelationSpec, ...]
    fds: tuple[FD, ...] = ()
    degree_bounds: tuple[DegreeBound, ...] = ()

    def __post_init__(self):
        known = set(self.vars)
        if len(known) != len(self.vars):
            raise QueryError("duplicate variable name")
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise QueryError("relation names must be unique")
        for r in self.relations:
            _check_attrs(r.attrs, known, f"relation {r.name}")
            if r.cardinality is not None and r.cardinality < 1:
                raise QueryError(f"relation {r.name}: cardinality must be >= 1")
        for fd in self.fds:
            _check_attrs(fd.lhs, known, f"fd {fd}")
            _check_attrs(fd.rhs, known, f"fd {fd}")
            if fd.guard is not None:
                if fd.guard not in names:
                    raise QueryError(f"fd {fd}: unknown guard relation {fd.guard}")
                g = self.relation(fd.guard)
                if not set(fd.lhs) | set(fd.rhs) <= set(g.attrs):
                    raise QueryError(f"fd {fd}: guard {fd.guard} lacks its attributes")
        for db in self.degree_bounds:
            _check_attrs(db.of, known, "degree bound")
            _check_attrs(db.given, known, "degree bound")
            if not set(db.given) < set(db.of):
                raise QueryError("degree bound needs given strictly inside of")
            if db.bound < 1:
                raise QueryError("degree bound must be >= 1")
            if db.guard is not None and db.guard not in names:
                raise QueryError(f"degree bound: unknown guard {db.guard}")

    def relation(self, name: str) -> RelationSpec:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(name)

    def mask(self, attrs: Iterable[str]) -> int:
        pos = {v: i for i, v in enumerate(self.vars)}
        m = 0
        for a in attrs:
            if a not in pos:
                raise QueryError(f"unknown attribute {a!r}")
            m |= 1 << pos[a]
        return m

    def attrs(self, mask: int) -> tuple[str, ...]:
        return tuple(v for i, v in enumerate(self.vars) if mask >> i & 1)


def _check_attrs(attrs, known, where):
    for a in attrs:
        if a not in known:
            raise QueryError(f"{where}: unknown attribute {a!r}")
    if len(set(attrs)) != len(attrs):
        raise QueryError(f"{where}: repeated attribute")


def closure_mask(mask: int, fds: Sequence[tuple[int, int]]) -> int:
    changed = True
    while changed:
        changed = False
        for lhs, rhs in fds:
            if lhs & mask == lhs and rhs & ~mask:
                mask |= rhs
                changed = True
    return mask


def closure(attrs: Iterable[str], query: Query) -> frozenset[str]:
    m = closure_mask(query.mask(attrs), _fd_masks(query))
    return frozenset(query.attrs(m))


def _fd_masks(query: Query):
    return [(query.mask(f.lhs), query.mask(f.rhs)) for f in query.fds]


def _popcount(m: int) -> int:
    return bin(m).count("1")


def _canon_key(m: int):
    return (_popcount(m), tuple(i for i in range(m.bit_length()) if m >> i & 1))


class Lattice:
    """Closed-set lattice of a query. Immutable after construction."""

    def __init__(self, query: Query, var_cap: int = VAR_CAP):
        if len(query.vars) > var_cap:
            raise QueryError(f"{len(query.vars)} variables exceeds cap {var_cap}")
        self.query = query
        self.vars = query.vars
        self._fds = _fd_masks(query)
        k = len(query.vars)
        top = (1 << k) - 1
        start = self.close(0)
        seen = {start}
        frontier = [start]
        while frontier:
            nxt = []
            for c in frontier:
                for i in range(k):
                    if not c >> i & 1:
                        d = self.close(c | 1 << i)
                        if d not in seen:
                            seen.add(d)
                            nxt.append(d)
            frontier = nxt
        self.masks: list[int] = sorted(seen, key=_canon_key)
        self.id_of: dict[int, int] = {m: i for i, m in enumerate(self.masks)}
        n = len(self.masks)
        self.hat0 = self.id_of[start]
        self.hat1 = self.id_of[self.close(top)]
        ms = self.masks
        self.meet_table = [[self.id_of[ms[a] & ms[b]] for b in range(n)] for a in range(n)]
        self.join_table = [[self.id_of[self.close(ms[a] | ms[b])] for b in range(n)] for a in range(n)]
        self._leq = [[ms[a] & ms[b] == ms[a] for b in range(n)] for a in range(n)]
        self.upper_covers: list[list[int]] = [[] for _ in range(n)]
        self.lower_covers: list[list[int]] = [[] for _ in range(n)]
        for a in range(n):
            above = [b for b in range(n) if b != a and self._leq[a][b]]
            for b in above:
                if not any(c != b and self._leq[c][b] for c in above):
                    self.upper_covers[a].append(b)
                    self.lower_covers[b].append(a)
        self.covers = [(a, b) for a in range(n) for b in self.upper_covers[a]]
        self.join_irreducibles = [x for x in range(n) if len(self.lower_covers[x]) == 1]
        self.meet_irreducibles = [x for x in range(n) if len(self.upper_covers[x]) == 1]
        self.atoms = list(self.upper_covers[self.hat0]) if n > 1 else []
        self.coatoms = list(self.lower_covers[self.hat1]) if n > 1 else []

    # basic access

    def __len__(self):
        return len(self.masks)

    def __iter__(self):
        return iter(range(len(self.masks)))

    def close(self, mask: int) -> int:
        return closure_mask(mask, self._fds)

    def element(self, attrs: Iterable[str]) -> int:
        """Id of the closure of ``attrs``."""
        return self.id_of[self.close(self.query.mask(attrs))]

    def attrs(self, x: int) -> tuple[str, ...]:
        return self.query.attrs(self.masks[x])

    def label(self, x: int) -> str:
        a = self.attrs(x)
        if all(len(v) == 1 for v in self.vars):
            return "".join(a) if a else "{}"
        return "{" + ",".join(a) + "}"

    def leq(self, a: int, b: int) -> bool:
        return self._leq[a][b]

    def lt(self, a: int, b: int) -> bool:
        return a != b and self._leq[a][b]

    def comparable(self, a: int, b: int) -> bool:
        return self._leq[a][b] or self._leq[b][a]

    def meet(self, a: int, b: int) -> int:
        return self.meet_table[a][b]

    def join(self, a: int, b: int) -> int:
        return self.join_table[a][b]

    def join_all(self, xs: Iterable[int]) -> int:
        r = self.hat0
        for x in xs:
            r = self.join_table[r][x]
        return r

    def meet_all(self, xs: Iterable[int]) -> int:
        r = self.hat1
        for x in xs:
            r = self.meet_table[r][x]
        return r

    def above(self, x: int) -> list[int]:
        return [y for y in self if self._leq[x][y]]

    def below(self, x: int) -> list[int]:
        return [y for y in self if self._leq[y][x]]

    def incomparable_pairs(self) -> list[tuple[int, int]]:
        return [(a, b) for a, b in combinations(range(len(self)), 2) if not self.comparable(a, b)]

    def relation_elements(self) -> list[int]:
        return [self.element(r.attrs) for r in self.query.relations]

    def height(self) -> list[int]:
        """Length of the longest chain from 0̂ to each element."""
        h = [0] * len(self)
        for x in sorted(self, key=lambda e: _popcount(self.masks[e])):
            for y in self.upper_covers[x]:
                h[y] = max(h[y], h[x] + 1)
        return h

    # structure

    def redundant_vars(self) -> list[str]:
        """Variables x with x <-> Y for some Y not containing x."""
        out = []
        for i, v in enumerate(self.vars):
            cl = self.close(1 << i)
            rest = cl & ~(1 << i)
            if self.close(rest) >> i & 1:
                out.append(v)
        return out

    def var_element(self, v: str) -> int:
        return self.element([v])

    def is_distributive(self) -> bool:
        n = len(self)
        J, M = self.join_table, self.meet_table
        for x in range(n):
            for y in range(n):
                for z in range(n):
                    if M[x][J[y][z]] != J[M[x][y]][M[x][z]]:
                        return False
        return True

    def mobius(self, x: int, y: int) -> int:
        if not hasattr(self, "_mu"):
            self._mu = {}
        key = (x, y)
        if key in self._mu:
            return self._mu[key]
        if not self._leq[x][y]:
            val = 0
        elif x == y:
            val = 1
        else:
            val = -sum(self.mobius(x, z) for z in self if z != y and self._leq[x][z] and self._leq[z][y])
        self._mu[key] = val
        return val

    def topdown(self) -> list[int]:
        return sorted(self, key=lambda e: -_popcount(self.masks[e]))

    def find_m3(self):
        """Some (bottom, a, b, c, top) forming an M3 sublattice, or None."""
        n = len(self)
        J, M = self.join_table, self.meet_table
        for a, b, c in combinations(range(n), 3):
            j, m = J[a][b], M[a][b]
            if j == a or j == b:
                continue
            if J[a][c] == j and J[b][c] == j and M[a][c] == m and M[b][c] == m and c not in (j, m):
                return (m, a, b, c, j)
        return None


def build_lattice(query: Query, var_cap: int = VAR_CAP) -> Lattice:
    return Lattice(query, var_cap)


# lattice functions ---------------------------------------------------------

LatticeFunction = list  # list[Fraction] indexed by element id


def mobius_invert(lat: Lattice, h: Sequence) -> list[Fraction]:
    """g with h(X) = sum_{Y >= X} g(Y)."""
    g = [Fraction(0)] * len(lat)
    for x in lat.topdown():
        g[x] = Fraction(h[x]) - sum((g[y] for y in lat if y != x and lat.leq(x, y)), Fraction(0))
    return g


def mobius_apply(lat: Lattice, g: Sequence) -> list[Fraction]:
    return [sum((Fraction(g[y]) for y in lat if lat.leq(x, y)), Fraction(0)) for x in lat]


def step_function(lat: Lattice, z: int) -> list[Fraction]:
    """h_Z(X) = 1 if X is not below Z, else 0."""
    return [Fraction(0 if lat.leq(x, z) else 1) for x in lat]


def is_submodular(lat: Lattice, h: Sequence) -> bool:
    return all(h[lat.meet(a, b)] + h[lat.join(a, b)] <= h[a] + h[b] for a, b in lat.incomparable_pairs())


def is_monotone(lat: Lattice, h: Sequence) -> bool:
    return all(h[a] <= h[b] for a, b in lat.covers)


def is_polymatroid(lat: Lattice, h: Sequence) -> bool:
    return (h[lat.hat0] == 0 and all(v >= 0 for v in h)
            and is_monotone(lat, h) and is_submodular(lat, h))


def coatom_count_c(lat: Lattice, z: int, s: Iterable[int]) -> int:
    """Number of members of the multiset ``s`` lying below ``z``."""
    return sum(1 for u in s if lat.leq(u, z))


# embeddings ----------------------------------------------------------------

@dataclass
class BooleanTarget:
    """Upside-down Boolean algebra on ``size`` atoms: order is reverse inclusion."""
    size: int
    atom_names: list[str] = field(default_factory=list)

    @property
    def top(self) -> int:
        return 0

    @property
    def bottom(self) -> int:
        return (1 << self.size) - 1

    def leq(self, a: int, b: int) -> bool:
        return a & b == b

    def join(self, a: int, b: int) -> int:
        return a & b


@dataclass
class Embedding:
    source: Lattice
    target: BooleanTarget
    map: list[int]

    def __call__(self, x: int) -> int:
        return self.map[x]

    def right_adjoint(self, y: int) -> int:
        """Largest X with f(X) <= y in the target order."""
        xs = [x for x in self.source if self.target.leq(self.map[x], y)]
        return self.source.join_all(xs)

    def is_valid(self) -> bool:
        L, T, f = self.source, self.target, self.map
        if f[L.hat0] != T.bottom or f[L.hat1] != T.top:
            return False
        for a in L:
            for b in L:
                if f[L.join(a, b)] != T.join(f[a], f[b]):
                    return False
        for x in L:
            for y in range(1 << T.size) if T.size <= 10 else []:
                if T.leq(f[x], y) != L.leq(x, self.right_adjoint(y)):
                    return False
        return True

    def renaming(self) -> dict[str, frozenset[str]]:
        """Atoms carried by each variable: complement of f(x+)."""
        L, T = self.source, self.target
        out = {}
        for v in L.vars:
            m = T.bottom & ~self.map[L.var_element(v)]
            out[v] = frozenset(T.atom_names[i] for i in range(T.size) if m >> i & 1)
        return out


class NotNormalError(ValueError):
    pass


def canonical_embedding(lat: Lattice, h: Sequence) -> Embedding:
    """Embed into the upside-down Boolean algebra on -g(X) atoms per X != 1̂."""
    g = mobius_invert(lat, h)
    if any(v.denominator != 1 for v in map(Fraction, h)):
        raise NotNormalError("h must be integer valued")
    if any(g[x] > 0 for x in lat if x != lat.hat1) or Fraction(h[lat.hat0]) != 0:
        raise NotNormalError("h is not normal")
    owner: dict[int, int] = {}
    names: list[str] = []
    blocks: dict[int, int] = {}
    for x in lat:
        if x == lat.hat1:
            continue
        k = int(-g[x])
        m = 0
        for i in range(k):
            idx = len(names)
            names.append(f"{lat.label(x)}.{i}" if k > 1 else lat.label(x))
            owner[idx] = x
            m |= 1 << idx
        blocks[x] = m
    f = []
    for x in lat:
        m = 0
        for z, bm in blocks.items():
            if lat.leq(x, z):
                m |= bm
        f.append(m)
    return Embedding(lat, BooleanTarget(len(names), names), f)
