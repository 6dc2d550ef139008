"""SM-proof sequences, goodness labeling, the SM bound and the submodularity join algorithm."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .bounds import LOG_DENOMINATOR, check_output_inequality, log2_leq, log2_up, solve_llp
from .lattice import Lattice, Query
from .normality import coatomic_hypergraph, cover_polytope_vertices
from .relational import Database, Expander, OpCounter, Relation, expand

SEARCH_BUDGET = 1_000_000


class ProofError(RuntimeError):
    pass


class CacheBoundError(AssertionError):
    pass


@dataclass
class SmProof:
    """Copies 0..len(initial)-1 hold the initial multiset; step t consumes two live
    copies and creates copies len(initial)+2t (the meet) and len(initial)+2t+1 (the join)."""
    initial: list[int]
    steps: list[tuple[int, int]]
    d: int = 1
    elements: list[int] = field(default_factory=list)  # element per copy, filled by replay

    def replay(self, lat: Lattice) -> list[int]:
        elems = list(self.initial)
        live = set(range(len(elems)))
        for a, b in self.steps:
            if a not in live or b not in live or a == b:
                raise ProofError(f"step ({a},{b}) uses a copy that is not live")
            x, y = elems[a], elems[b]
            if lat.comparable(x, y):
                raise ProofError(f"step on comparable {lat.label(x)}, {lat.label(y)}")
            live -= {a, b}
            live |= {len(elems), len(elems) + 1}
            elems += [lat.meet(x, y), lat.join(x, y)]
        self.elements = elems
        return sorted(live)

    def final(self, lat: Lattice) -> list[int]:
        return sorted(self.elements[i] for i in self.replay(lat))

    def is_valid(self, lat: Lattice) -> bool:
        try:
            fin = self.final(lat)
        except ProofError:
            return False
        chain = all(lat.comparable(a, b) for a in fin for b in fin)
        return chain and fin.count(lat.hat1) >= self.d

    def element_steps(self, lat: Lattice) -> list[tuple[int, int]]:
        self.replay(lat)
        return [(self.elements[a], self.elements[b]) for a, b in self.steps]


def from_element_steps(lat: Lattice, initial: Sequence[int], moves: Sequence[tuple[int, int]], d: int = 1) -> SmProof:
    """Turn element-level steps into copy-level steps, consuming the lowest live copy."""
    elems = list(initial)
    live: list[int] = list(range(len(elems)))
    steps = []
    for x, y in moves:
        a = next((i for i in live if elems[i] == x), None)
        b = next((i for i in live if elems[i] == y and i != a), None)
        if a is None or b is None:
            raise ProofError(f"{lat.label(x)} or {lat.label(y)} not present")
        steps.append((a, b))
        live = [i for i in live if i not in (a, b)] + [len(elems), len(elems) + 1]
        elems += [lat.meet(x, y), lat.join(x, y)]
    return SmProof(list(initial), steps, d)


def multiset_from_weights(relations: Sequence[int], w: Sequence) -> tuple[list[int], int, list[int]]:
    """w_j = q_j/d: returns (initial elements, d, source relation of each copy)."""
    w = [Fraction(x) for x in w]
    d = 1
    for x in w:
        d = d * x.denominator // math.gcd(d, x.denominator)
    init, src = [], []
    for j, (r, x) in enumerate(zip(relations, w)):
        q = int(x * d)
        init += [r] * q
        src += [j] * q
    return init, d, src


# labeling -----------------------------------------------------------------

@dataclass
class LabelTrace:
    good: bool
    labels: list[set[int]]
    intersections: list[frozenset[int]]
    all_labels: set[int]
    reason: str = ""
    history: list[list[frozenset[int]]] = field(default_factory=list)  # labels per copy after each step

    def top_labels(self, elements: Sequence[int], top: int) -> set[int]:
        out: set[int] = set()
        for i, x in enumerate(elements):
            if x == top:
                out |= self.labels[i]
        return out


def check_goodness(lat: Lattice, proof: SmProof) -> LabelTrace:
    proof.replay(lat)
    n0 = len(proof.initial)
    labels: list[set[int]] = [{1} for _ in range(n0)]
    fresh = 2
    all_labels = {1}
    inters = []
    reason = ""
    history = [[frozenset(s) for s in labels]]
    for t, (a, b) in enumerate(proof.steps):
        A = frozenset(labels[a] & labels[b])
        inters.append(A)
        if not A and not reason:
            reason = f"empty label intersection at step {t}"
        meet_el = proof.elements[n0 + 2 * t]
        f = {}
        if meet_el != lat.hat0:
            for j in sorted(A):
                f[j] = fresh
                all_labels.add(fresh)
                fresh += 1
        for s in labels:
            s |= {f[j] for j in s & A if j in f}
        labels.append(set(f.values()))
        labels.append(set(A))
        history.append([frozenset(s) for s in labels])
    trace = LabelTrace(False, labels, inters, all_labels, reason, history)
    tl = trace.top_labels(proof.elements, lat.hat1)
    if not reason and tl != all_labels:
        reason = f"labels {sorted(all_labels - tl)} never reach the top"
    trace.good, trace.reason = not reason, reason
    return trace


# proof search ----------------------------------------------------------------

def coatom_sets(lat: Lattice) -> list[frozenset[int]]:
    return [frozenset(z for z in lat.coatoms if not lat.leq(x, z)) for x in lat]


def progress(lat: Lattice, e: Sequence[frozenset], x: int, y: int) -> int:
    return len(e[lat.meet(x, y)]) ** 2 + len(e[lat.join(x, y)]) ** 2 - len(e[x]) ** 2 - len(e[y]) ** 2


def min_coatom_cover(lat: Lattice, multiset: Sequence[int]) -> int:
    e = coatom_sets(lat)
    if not lat.coatoms:
        return 0
    return min(sum(1 for x in multiset if z in e[x]) for z in lat.coatoms)


@dataclass
class SearchResult:
    status: str  # found | nonexistent | budget
    proof: SmProof | None = None
    nodes: int = 0


def _moves(lat: Lattice, state: tuple[int, ...], e):
    distinct = sorted(set(state))
    out = []
    for i, x in enumerate(distinct):
        for y in distinct[i + 1:]:
            if not lat.comparable(x, y):
                out.append((x, y))
    out.sort(key=lambda p: (-progress(lat, e, *p), p))
    return out


def _apply(lat, state, x, y):
    s = list(state)
    s.remove(x)
    s.remove(y)
    s += [lat.meet(x, y), lat.join(x, y)]
    return tuple(sorted(s))


def _done(lat, state, d):
    return not any(not lat.comparable(a, b) for a in state for b in state) and state.count(lat.hat1) >= d


def find_sm_proof(lat: Lattice, initial: Sequence[int], d: int = 1, mode: str = "auto",
                  budget: int = SEARCH_BUDGET, require_good: bool = False) -> SearchResult:
    """Search for an SM-proof of sum h(initial) >= d h(top).

    ``greedy`` applies the best-progress step until the multiset is a chain
    (complete on distributive lattices); ``search`` is an exhaustive search over
    multiset states. ``auto`` picks greedy on distributive lattices.
    """
    if mode == "auto":
        mode = "greedy" if lat.is_distributive() else "search"
    e = coatom_sets(lat)
    start = tuple(sorted(initial))
    if mode == "greedy":
        state, moves, nodes = start, [], 0
        while True:
            ms = _moves(lat, state, e)
            if not ms:
                break
            nodes += 1
            if nodes > budget:
                return SearchResult("budget", None, nodes)
            moves.append(ms[0])
            state = _apply(lat, state, *ms[0])
        if state.count(lat.hat1) < d:
            return SearchResult("nonexistent", None, nodes)
        res = SearchResult("found", from_element_steps(lat, initial, moves, d), nodes)
    elif mode == "search":
        res = _search(lat, start, list(initial), d, e, budget)
    else:
        raise ValueError(f"unknown search mode {mode!r}")
    if require_good and res.status == "found" and not check_goodness(lat, res.proof).good:
        res = _search_good(lat, list(initial), d, e, budget)
    return res


def _search(lat, start, initial, d, e, budget) -> SearchResult:
    seen = set()
    nodes = 0
    path: list[tuple[int, int]] = []

    def rec(state):
        nonlocal nodes
        if _done(lat, state, d):
            return True
        if state in seen:
            return False
        seen.add(state)
        nodes += 1
        if nodes > budget:
            raise _Budget
        for x, y in _moves(lat, state, e):
            path.append((x, y))
            if rec(_apply(lat, state, x, y)):
                return True
            path.pop()
        return False

    try:
        ok = rec(start)
    except _Budget:
        return SearchResult("budget", None, nodes)
    if not ok:
        return SearchResult("nonexistent", None, nodes)
    return SearchResult("found", from_element_steps(lat, initial, path, d), nodes)


class _Budget(Exception):
    pass


def _search_good(lat, initial, d, e, budget) -> SearchResult:
    """Exhaustive search over copy-level proofs, keeping only good ones."""
    nodes = 0
    seen = set()

    def key(elems, live, labels, all_labels):
        return (tuple(sorted((elems[i], frozenset(labels[i])) for i in live)), frozenset(all_labels))

    def rec(elems, live, labels, steps, all_labels, fresh):
        nonlocal nodes
        state = tuple(sorted(elems[i] for i in live))
        if _done(lat, state, d):
            tl = set().union(*[labels[i] for i in live if elems[i] == lat.hat1])
            if tl == all_labels:
                return steps
        k = key(elems, live, labels, all_labels)
        if k in seen:
            return None
        seen.add(k)
        nodes += 1
        if nodes > budget:
            raise _Budget
        cands = []
        for i in live:
            for j in live:
                if i < j and not lat.comparable(elems[i], elems[j]) and labels[i] & labels[j]:
                    cands.append((-progress(lat, e, elems[i], elems[j]), elems[i], elems[j], i, j))
        cands.sort()
        for _, x, y, i, j in cands:
            A = labels[i] & labels[j]
            meet, join = lat.meet(x, y), lat.join(x, y)
            f = {}
            nf = fresh
            if meet != lat.hat0:
                for lab in sorted(A):
                    f[lab] = nf
                    nf += 1
            new_labels = [s | {f[lab] for lab in s & A if lab in f} for s in labels]
            new_labels += [set(f.values()), set(A)]
            n = len(elems)
            got = rec(elems + [meet, join], [c for c in live if c not in (i, j)] + [n, n + 1],
                      new_labels, steps + [(i, j)], all_labels | set(f.values()), nf)
            if got is not None:
                return got
        return None

    try:
        steps = rec(list(initial), list(range(len(initial))), [{1} for _ in initial], [], {1}, 2)
    except _Budget:
        return SearchResult("budget", None, nodes)
    if steps is None:
        return SearchResult("nonexistent", None, nodes)
    return SearchResult("found", SmProof(list(initial), steps, d), nodes)


# SM bound ------------------------------------------------------------------

@dataclass
class SmBound:
    value: Fraction | None
    w: tuple[Fraction, ...] | None
    proof: SmProof | None
    llp: Fraction
    tried: list[tuple[tuple[Fraction, ...], str]]


def sm_bound(lat: Lattice, relations: Sequence[int], n: Sequence, budget: int = SEARCH_BUDGET) -> SmBound:
    """Least sum w_j n_j over candidate valid inequalities that admit an SM-proof.

    Candidates: the LLP dual weights and every vertex of the co-atomic cover polytope.
    """
    n = [Fraction(v) for v in n]
    llp = solve_llp(lat, relations, n)
    cands = [tuple(llp.cert.w.get(j, Fraction(0)) for j in range(len(relations)))]
    cands += cover_polytope_vertices(coatomic_hypergraph(lat, relations))
    seen, tried = set(), []
    best = None
    for w in sorted(set(cands), key=lambda w: (sum(a * b for a, b in zip(w, n)), w)):
        if w in seen:
            continue
        seen.add(w)
        val = sum((a * b for a, b in zip(w, n)), Fraction(0))
        if best is not None and val >= best[0]:
            break
        if not check_output_inequality(lat, relations, w)[0]:
            tried.append((w, "invalid"))
            continue
        init, d, _ = multiset_from_weights(relations, w)
        res = find_sm_proof(lat, init, d, budget=budget)
        tried.append((w, res.status))
        if res.status == "found":
            best = (val, w, res.proof)
    if best is None:
        return SmBound(None, None, None, llp.opt, tried)
    return SmBound(best[0], best[1], best[2], llp.opt, tried)


# the algorithm ---------------------------------------------------------------

@dataclass
class SmaPlan:
    h: list[Fraction]
    w: tuple[Fraction, ...]
    proof: SmProof
    sources: list[int]  # relation index per initial copy
    n: list[Fraction]


def plan_sma(query: Query, lat: Lattice, n: Sequence, budget: int = SEARCH_BUDGET) -> SmaPlan:
    relations = [lat.element(r.attrs) for r in query.relations]
    n = [Fraction(v) for v in n]
    llp = solve_llp(lat, relations, n)
    w = tuple(llp.cert.w.get(j, Fraction(0)) for j in range(len(relations)))
    init, d, src = multiset_from_weights(relations, w)
    res = find_sm_proof(lat, init, d, budget=budget, require_good=True)
    if res.status != "found":
        raise ProofError(f"no good SM-proof for the optimal dual weights ({res.status})")
    plan = SmaPlan(llp.h, w, res.proof, src, n)
    check_plan(lat, plan)
    return plan


def check_plan(lat: Lattice, plan: SmaPlan):
    proof = plan.proof
    if not proof.is_valid(lat):
        raise ProofError("not a valid SM-proof")
    trace = check_goodness(lat, proof)
    if not trace.good:
        raise ProofError(f"SM-proof is not good: {trace.reason}")
    h = plan.h
    for x, y in proof.element_steps(lat):
        if h[y] - h[lat.meet(x, y)] != h[lat.join(x, y)] - h[x]:
            raise ProofError(f"step ({lat.label(x)},{lat.label(y)}) is not tight for h*")


def sma_n(db: Database, denominator: int = LOG_DENOMINATOR) -> list[Fraction]:
    return [log2_up(max(len(db[r.name]), 1), denominator) for r in db.query.relations]


@dataclass
class SmaRun:
    output: Relation
    counter: OpCounter
    sizes: list[int]  # |T| per copy
    labels: LabelTrace


def run_sma(query: Query, db: Database, lat: Lattice, plan: SmaPlan, counter: OpCounter | None = None,
            invariant_check: Relation | None = None) -> SmaRun:
    """Replays the proof as submodularity joins. With ``invariant_check`` set to the true
    output, verifies after every step that each output tuple survives in some label subquery."""
    check_plan(lat, plan)
    counter = counter or OpCounter()
    proof = plan.proof
    proof.replay(lat)
    labels = check_goodness(lat, proof)
    h = plan.h
    names = [r.name for r in query.relations]
    if any(len(db[nm]) == 0 for nm in names):
        return SmaRun(Relation(query.vars, []), counter, [], labels)
    full = {nm: expand(db[nm], db, query, counter) for nm in names}
    ex = Expander(db, query)
    T: list[Relation] = []
    for i, j in enumerate(plan.sources):
        T.append(full[names[j]].reorder(lat.attrs(proof.initial[i])))
        _cache_bound(lat, h, proof.initial[i], T[-1])
    for t, (a, b) in enumerate(proof.steps):
        x, y = proof.elements[a], proof.elements[b]
        z = lat.meet(x, y)
        za = lat.attrs(z)
        gap = h[y] - h[z]
        TX, TY = T[a], T[b]
        counter.probes += len(TY)
        yidx = TY.index(za)
        lite = {v for v, rows in yidx.items() if log2_leq(len(rows), gap)}
        heavy = set(yidx) - lite
        xz = TX.index(za)
        meet_rows = [v for v in heavy if v in xz]
        counter.probes += len(heavy)
        t_meet = Relation(za, meet_rows)
        joined = TX.join(TY.select(lambda r, g=TY.getter(za): g(r) in lite), counter)
        target = lat.attrs(lat.join(x, y))
        rows = []
        for r in joined:
            vals = ex.row(dict(zip(joined.schema, r)), counter)
            if vals is not None:
                rows.append(tuple(vals[v] for v in target))
        t_join = Relation(target, rows)
        _cache_bound(lat, h, z, t_meet)
        _cache_bound(lat, h, lat.join(x, y), t_join)
        T += [t_meet, t_join]
        if invariant_check is not None:
            _check_invariant(labels.history[t + 1], T, invariant_check)
    out = Relation(query.vars, [])
    for i in proof.replay(lat):
        if proof.elements[i] == lat.hat1:
            out = out.union(T[i].reorder(query.vars))
    for nm in names:
        counter.probes += len(out)
        out = out.semijoin(db[nm])
    out = db.check_fds(out)
    counter.emitted += len(out)
    return SmaRun(out, counter, [len(r) for r in T], labels)


def _cache_bound(lat: Lattice, h, x: int, rel: Relation):
    if not log2_leq(len(rel), h[x]):
        raise CacheBoundError(f"|T({lat.label(x)})| = {len(rel)} exceeds 2^{h[x]}")


def _check_invariant(labels: Sequence[frozenset[int]], T: Sequence[Relation], truth: Relation):
    """Every true output tuple lies in the join of the tables carrying some common label."""
    members: dict[int, list[int]] = {}
    for i, ls in enumerate(labels):
        for lab in ls:
            members.setdefault(lab, []).append(i)
    tpos = {v: k for k, v in enumerate(truth.schema)}
    projs = [tuple(tpos[v] for v in T[i].schema) for i in range(len(labels))]
    for row in truth:
        if not any(all(tuple(row[p] for p in projs[i]) in T[i].rows for i in mem) for mem in members.values()):
            raise AssertionError(f"output tuple {row} lost by every label subquery")
