"""Chain selection, chain hypergraphs and bounds, and the level-by-level chain join."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .lattice import Lattice, Query
from .normality import CoverResult, Hypergraph, fractional_edge_cover
from .relational import Database, Expander, OpCounter, Relation, expand

CHAIN_ENUM_CAP = 100_000


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class Chain:
    elements: tuple[int, ...]

    def __post_init__(self):
        if len(self.elements) < 2:
            raise ChainError("a chain needs at least the two endpoints")

    @property
    def k(self) -> int:
        return len(self.elements) - 1

    def __getitem__(self, i: int) -> int:
        return self.elements[i]

    def validate(self, lat: Lattice):
        c = self.elements
        if c[0] != lat.hat0 or c[-1] != lat.hat1:
            raise ChainError("chain must run from bottom to top")
        for a, b in zip(c, c[1:]):
            if not lat.lt(a, b):
                raise ChainError(f"{lat.label(a)} is not strictly below {lat.label(b)}")

    def labels(self, lat: Lattice) -> list[str]:
        return [lat.label(x) for x in self.elements]


def footprint(lat: Lattice, chain: Chain, x: int) -> frozenset[int]:
    """Levels i where x meets C_i differently than C_(i-1)."""
    c = chain.elements
    return frozenset(i for i in range(1, len(c)) if lat.meet(x, c[i]) != lat.meet(x, c[i - 1]))


def chain_hypergraph(lat: Lattice, chain: Chain, relations: Sequence[int],
                     names: Sequence[str] | None = None) -> Hypergraph:
    edges = [footprint(lat, chain, r) for r in relations]
    return Hypergraph(list(range(1, chain.k + 1)), edges,
                      list(names) if names else [str(j) for j in range(len(relations))])


def _level_good(lat: Lattice, lo: int, hi: int, r: int) -> bool:
    a, b = lat.meet(r, hi), lat.meet(r, lo)
    return a == b or lat.join(lo, a) == hi


def is_good_chain(lat: Lattice, chain: Chain, relations: Sequence[int]) -> tuple[bool, tuple[int, int] | None]:
    """Returns (good, first violating (j, i))."""
    c = chain.elements
    for i in range(1, len(c)):
        for j, r in enumerate(relations):
            if not _level_good(lat, c[i - 1], c[i], r):
                return False, (j, i)
    return True, None


def chain_bound(lat: Lattice, chain: Chain, relations: Sequence[int], n: Sequence) -> CoverResult:
    return fractional_edge_cover(chain_hypergraph(lat, chain, relations), n)


# selection -----------------------------------------------------------------

def select_chain_shearer(lat: Lattice, relations: Sequence[int]) -> Chain:
    """Greedy over join-irreducibles below the inputs, taking a minimal next join each time."""
    pool = [x for x in lat.join_irreducibles if any(lat.leq(x, r) for r in relations)]
    y, out, used = lat.hat0, [lat.hat0], set()
    while y != lat.hat1:
        cands = [(lat.join(y, x), x) for x in pool if x not in used and lat.lt(y, lat.join(y, x))]
        if not cands:
            raise ChainError("inputs do not join to the top element")
        tops = {z for z, _ in cands}
        minimal = [(z, x) for z, x in cands if not any(lat.lt(o, z) for o in tops)]
        z, x = min(minimal, key=lambda p: (p[1], p[0]))
        used.add(x)
        y = z
        out.append(y)
    return Chain(tuple(out))


def select_chain_dual(lat: Lattice, relations: Sequence[int]) -> Chain:
    """Top-down mirror over meet-irreducibles.

    Each step Y -> Y ∧ X must be good and covered by some input; candidates are
    tried largest meet first, lowest id on ties, backtracking on dead ends.
    """
    mis = list(lat.meet_irreducibles)
    dead: set[int] = set()

    def step_ok(lo, hi):
        covered = False
        for r in relations:
            if lat.meet(r, hi) != lat.meet(r, lo):
                covered = True
                if lat.join(lo, lat.meet(r, hi)) != hi:
                    return False
        return covered

    def rec(y, path):
        if y == lat.hat0:
            return path
        if y in dead:
            return None
        nxt = {lat.meet(y, x) for x in mis if lat.lt(lat.meet(y, x), y)}
        nxt = [z for z in nxt if step_ok(z, y)]
        nxt.sort(key=lambda z: (-len(lat.below(z)), z))
        for z in nxt:
            got = rec(z, path + [z])
            if got:
                return got
        dead.add(y)
        return None

    got = rec(lat.hat1, [lat.hat1])
    if got is None:
        raise ChainError("no covered good chain through meet-irreducibles")
    return Chain(tuple(reversed(got)))


def good_chains(lat: Lattice, relations: Sequence[int], cap: int = CHAIN_ENUM_CAP):
    """All good chains whose hypergraph has no isolated vertex."""
    ok = {}
    for lo in lat:
        for hi in lat.above(lo):
            if hi == lo:
                continue
            good = all(_level_good(lat, lo, hi, r) for r in relations)
            cov = any(lat.meet(r, hi) != lat.meet(r, lo) for r in relations)
            if good and cov:
                ok.setdefault(lo, []).append(hi)
    count = 0

    def rec(path):
        nonlocal count
        y = path[-1]
        if y == lat.hat1:
            count += 1
            if count > cap:
                raise ChainError(f"more than {cap} good chains")
            yield Chain(tuple(path))
            return
        for z in ok.get(y, ()):
            yield from rec(path + [z])

    yield from rec([lat.hat0])


def best_chain(lat: Lattice, relations: Sequence[int], n: Sequence, cap: int = CHAIN_ENUM_CAP) -> tuple[Chain, CoverResult]:
    best = None
    for ch in good_chains(lat, relations, cap):
        res = chain_bound(lat, ch, relations, n)
        if best is None or res.value < best[1].value:
            best = (ch, res)
    if best is None:
        raise ChainError("no good chain without isolated vertices")
    return best


def select_chain(lat: Lattice, relations: Sequence[int], n: Sequence, mode: str = "shearer") -> tuple[Chain, CoverResult]:
    if mode == "shearer":
        ch = select_chain_shearer(lat, relations)
    elif mode == "dual":
        ch = select_chain_dual(lat, relations)
    elif mode == "exhaustive":
        return best_chain(lat, relations, n)
    else:
        raise ChainError(f"unknown chain mode {mode!r}")
    return ch, chain_bound(lat, ch, relations, n)


# tightness --------------------------------------------------------------------

@dataclass
class Tightness:
    tight: bool
    reason: str = ""


def chain_tightness_check(lat: Lattice, chain: Chain) -> Tightness:
    """Sufficient footprint condition e(X ∨ Y) ⊆ e(X) ∪ e(Y) for a tight chain bound."""
    ok, bad = is_good_chain(lat, chain, list(lat))
    if not ok:
        return Tightness(False, f"chain not good for {lat.label(bad[0])} at level {bad[1]}")
    e = [footprint(lat, chain, x) for x in lat]
    for x in lat:
        for y in lat.above(x):
            if not e[x] <= e[y]:
                raise AssertionError(f"footprints not monotone at {lat.label(x)} <= {lat.label(y)}")
    for x in lat:
        for y in lat:
            if y > x and not e[lat.join(x, y)] <= e[x] | e[y]:
                return Tightness(False, f"e({lat.label(lat.join(x, y))}) not covered by "
                                        f"e({lat.label(x)}) and e({lat.label(y)})")
    return Tightness(True)


# execution ------------------------------------------------------------------

@dataclass
class ChainRun:
    output: Relation
    counter: OpCounter
    level_sizes: list[int]


def run_chain(query: Query, db: Database, lat: Lattice, chain: Chain,
              counter: OpCounter | None = None) -> ChainRun:
    chain.validate(lat)
    counter = counter or OpCounter()
    names = [r.name for r in query.relations]
    relations = [lat.element(r.attrs) for r in query.relations]
    ok, bad = is_good_chain(lat, chain, relations)
    if not ok:
        raise ChainError(f"chain is not good for {names[bad[0]]} at level {bad[1]}")
    hg = chain_hypergraph(lat, chain, relations)
    if hg.isolated():
        raise ChainError(f"levels {hg.isolated()} are covered by no relation")
    full = {nm: expand(db[nm], db, query, counter) for nm in names}
    ex = Expander(db, query)
    c = chain.elements
    cur_attrs: tuple[str, ...] = ()
    cur: list[tuple] = [()]
    sizes = [1]
    for i in range(1, len(c)):
        new_attrs = lat.attrs(c[i])
        order = cur_attrs + tuple(a for a in new_attrs if a not in cur_attrs)
        covering = []
        for j, nm in enumerate(names):
            if i not in hg.edges[j]:
                continue
            key = tuple(a for a in lat.attrs(lat.meet(relations[j], c[i - 1])))
            proj = tuple(lat.attrs(lat.meet(relations[j], c[i])))
            p = full[nm].project(proj)
            covering.append((j, key, proj, p.index(key), set(p.rows), p.getter(key)))
        key_pos = [tuple(cur_attrs.index(a) for a in key) for _, key, _, _, _, _ in covering]
        nxt = []
        for t in cur:
            lists = []
            for (j, key, proj, idx, rows, _), kp in zip(covering, key_pos):
                counter.probes += 1
                lists.append(idx.get(tuple(t[p] for p in kp), ()))
            best = min(range(len(covering)), key=lambda q: (len(lists[q]), q))
            if not lists[best]:
                continue
            base = dict(zip(cur_attrs, t))
            _, _, proj_b, _, _, _ = covering[best]
            for row in lists[best]:
                vals = dict(base)
                vals.update(zip(proj_b, row))
                vals = ex.row(vals, counter)
                if vals is None:
                    continue
                if _verify(ex, base, vals, covering, best, counter):
                    counter.emitted += 1
                    nxt.append(tuple(vals[a] for a in order))
        cur, cur_attrs = nxt, order
        sizes.append(len(cur))
        if not cur:
            break
    out = Relation(cur_attrs if cur else query.vars, cur)
    if cur:
        out = db.check_fds(out.reorder(query.vars))
    return ChainRun(out, counter, sizes)


def _verify(ex: Expander, base: dict, vals: dict, covering, best: int, counter: OpCounter) -> bool:
    for q, (j, key, proj, idx, rows, _) in enumerate(covering):
        if q == best:
            continue
        counter.probes += 1
        if tuple(vals[a] for a in proj) not in rows:
            return False
        again = dict(base)
        again.update((a, vals[a]) for a in proj)
        again = ex.row(again, counter)
        if again != vals:
            return False
    return True
