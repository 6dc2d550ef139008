"""Bundled example queries and instance generators used by the tests and the CLI."""
from __future__ import annotations

import itertools
import random
from typing import Mapping, Sequence

from .lattice import FD, Lattice, Query, RelationSpec, build_lattice
from .relational import Database, Relation, TableUdf, UdfRegistry


def _rel(name, attrs, card=None):
    return RelationSpec(name, tuple(attrs), card)


def _fd(lhs, rhs, guard=None, udf=None):
    return FD(tuple(lhs), tuple(rhs), guard, udf)


def triangle(N: int | None = None) -> Query:
    return Query(("x", "y", "z"), (_rel("R", "xy", N), _rel("S", "yz", N), _rel("T", "zx", N)))


def boolean(k: int, relations: Sequence[str] | None = None) -> Query:
    vs = tuple("abcdefghijklmnop"[:k])
    rels = relations or [v for v in vs]
    return Query(vs, tuple(_rel(f"R{i}", r) for i, r in enumerate(rels)))


def fd_path(N: int | None = None) -> Query:
    """R(x,y), S(y,z), T(z,u) with xz->u (u = x) and yu->x (x = u)."""
    return Query(("x", "y", "z", "u"),
                 (_rel("R", "xy", N), _rel("S", "yz", N), _rel("T", "zu", N)),
                 (_fd("xz", "u", udf="proj(0)"), _fd("yu", "x", udf="proj(1)")))


def maximal_no_good() -> Query:
    return Query(("x", "y", "z"), (_rel("R", "x"), _rel("S", "y")),
                 (_fd("xy", "z", udf="concat"),))


def m3(N: int = 8) -> Query:
    """R(x),S(y),T(z) where any two variables determine the third: x+y+z = 0 mod N."""
    u = f"neg_sum_mod({N})"
    return Query(("x", "y", "z"), (_rel("R", "x", N), _rel("S", "y", N), _rel("T", "z", N)),
                 (_fd("xy", "z", udf=u), _fd("xz", "y", udf=u), _fd("yz", "x", udf=u)))


def m3_instance(N: int) -> Database:
    q = m3(N)
    rng = range(N)
    return Database(q, {"R": Relation("x", [(i,) for i in rng]), "S": Relation("y", [(i,) for i in rng]),
                        "T": Relation("z", [(i,) for i in rng])})


def simple_chain() -> Query:
    """Simple FDs a->b, b->c: a distributive lattice."""
    return Query(("a", "b", "c"), (_rel("R", "a"), _rel("S", "b"), _rel("T", "c")),
                 (_fd("a", "b"), _fd("b", "c")))


def fd_path_adversarial(N: int) -> Database:
    """R=S=T={(1,i)} u {(i,1)}, i in [N/2]."""
    half = range(1, N // 2 + 1)
    rows = {(1, i) for i in half} | {(i, 1) for i in half}
    q = fd_path()
    return Database(q, {"R": Relation("xy", rows), "S": Relation("yz", rows), "T": Relation("zu", rows)})


# lattices given by their Hasse diagram ---------------------------------------

def query_from_poset(upper: Mapping[str, Sequence[str]], relations: Sequence[str]) -> tuple[Query, dict[str, int]]:
    """FD query whose closed-set lattice is the given finite lattice.

    Variables are the join-irreducible elements; an element X corresponds to
    the set of join-irreducibles below it. FDs: j -> (join-irreducibles below j)
    and J(a) u J(b) -> J(a v b) for every pair.
    Returns the query and a map from element name to lattice element id.
    """
    names = set(upper)
    for vs in upper.values():
        names |= set(vs)
    names = sorted(names)
    up = {n: set() for n in names}
    for a, vs in upper.items():
        up[a] |= set(vs)
    changed = True
    while changed:
        changed = False
        for a in names:
            extra = set().union(*[up[b] for b in up[a]]) - up[a] if up[a] else set()
            if extra:
                up[a] |= extra
                changed = True
    leq = {(a, b) for a in names for b in names if a == b or b in up[a]}

    def join(a, b):
        ubs = [c for c in names if (a, c) in leq and (b, c) in leq]
        least = [c for c in ubs if all((c, d) in leq for d in ubs)]
        if len(least) != 1:
            raise ValueError(f"{a},{b} have no unique join")
        return least[0]

    lower_covers = {n: [a for a in names if (a, n) in leq and a != n
                        and not any(c not in (a, n) and (a, c) in leq and (c, n) in leq for c in names)]
                    for n in names}
    jis = [n for n in names if len(lower_covers[n]) == 1]
    J = {n: tuple(j for j in jis if (j, n) in leq) for n in names}
    fds = [FD((j,), J[j]) for j in jis if len(J[j]) > 1]
    for a, b in itertools.combinations(names, 2):
        lhs = tuple(sorted(set(J[a]) | set(J[b]), key=jis.index))
        rhs = J[join(a, b)]
        if set(rhs) - set(lhs):
            fds.append(FD(lhs, rhs))
    rels = tuple(RelationSpec(r, J[r]) for r in relations)
    q = Query(tuple(jis), rels, tuple(fds))
    lat = build_lattice(q)
    ids = {n: lat.element(J[n]) for n in names}
    if len(lat) != len(names) or len(set(ids.values())) != len(names):
        raise ValueError("poset is not a lattice")
    return q, ids


NON_TREE = {
    # 0 < C, B, U; C < X, Z; B < X, Y; U < D; Y < A, D; X < A; A, Z, D < 1
    "0": ["C", "B", "U"], "C": ["X", "Z"], "B": ["X", "Y"], "U": ["D"],
    "Y": ["A", "D"], "X": ["A"], "A": ["1"], "Z": ["1"], "D": ["1"],
}

BAD_SM_PROOF = {
    "0": ["A", "B"], "A": ["X", "Y"], "B": ["Z", "W"], "X": ["C"], "Y": ["C"],
    "Z": ["D"], "W": ["D"], "C": ["1"], "D": ["1"],
}


def non_tree():
    return query_from_poset(NON_TREE, ["X", "Y", "Z", "U"])


def bad_sm_proof():
    return query_from_poset(BAD_SM_PROOF, ["X", "Y", "Z", "W"])


def random_distributive(rng: random.Random, k: int = 5, p: float = 0.35, n_rel: int = 3) -> Query:
    """Order-ideal lattice of a random poset, written with simple FDs x -> (elements below x)."""
    vs = tuple("abcdefghij"[:k])
    below = {v: set() for v in vs}
    for i, j in itertools.combinations(range(k), 2):
        if rng.random() < p:
            below[vs[j]].add(vs[i])
    for v in vs:  # transitive closure
        stack = list(below[v])
        while stack:
            u = stack.pop()
            for w in below[u]:
                if w not in below[v]:
                    below[v].add(w)
                    stack.append(w)
    fds = tuple(FD((v,), tuple(sorted(below[v]))) for v in vs if below[v])
    rels = []
    for i in range(n_rel):
        size = rng.randint(1, k)
        rels.append(tuple(sorted(rng.sample(vs, size))))
    covered = set().union(*rels)
    missing = [v for v in vs if v not in covered]
    if missing:
        rels.append(tuple(missing))
    return Query(vs, tuple(RelationSpec(f"R{i}", r) for i, r in enumerate(rels)), fds)


# the query where no chain is tight -----------------------------------------
# R(abc), S(ade), T(bdf), U(cef); two variables of one relation determine its
# third, two variables sharing no relation determine everything.

_K = 1000


def _pair(u, v):
    return u * _K + v


def _hi(v):
    return v // _K


def _lo(v):
    return v % _K


def _bfc_af(a, f):  # a=(T,U), f=(R,S)
    return (_pair(_lo(f), _lo(a)), _pair(_lo(f), _hi(a)), _pair(_hi(f), _lo(a)), _pair(_hi(f), _hi(a)))


def _bfc_be(b, e):  # b=(S,U), e=(R,T)
    return (_pair(_lo(e), _lo(b)), _pair(_hi(b), _lo(e)), _pair(_hi(e), _lo(b)), _pair(_hi(e), _hi(b)))


def _bfc_cd(c, d):  # c=(S,T), d=(R,U)
    return (_pair(_lo(c), _lo(d)), _pair(_hi(c), _lo(d)), _pair(_hi(d), _lo(c)), _pair(_hi(d), _hi(c)))


def bad_for_chain(N: int | None = None) -> Query:
    fds = []
    for name, (x, y, z) in (("R", "abc"), ("S", "ade"), ("T", "bdf"), ("U", "cef")):
        fds += [_fd(x + y, z, name), _fd(x + z, y, name), _fd(y + z, x, name)]
    fds += [_fd("af", "bcde", udf="bfc_af"), _fd("be", "acdf", udf="bfc_be"), _fd("cd", "abef", udf="bfc_cd")]
    return Query(tuple("abcdef"), (_rel("R", "abc", N), _rel("S", "ade", N), _rel("T", "bdf", N),
                                   _rel("U", "cef", N)), tuple(fds))


def bad_for_chain_udfs() -> UdfRegistry:
    return UdfRegistry({"bfc_af": _bfc_af, "bfc_be": _bfc_be, "bfc_cd": _bfc_cd})


def _bfc_world(gR, gS, gT, gU):
    return (_pair(gT, gU), _pair(gS, gU), _pair(gS, gT), _pair(gR, gU), _pair(gR, gT), _pair(gR, gS))


def bad_for_chain_instance(M: int, rng: random.Random | None = None, fill: float = 1.0) -> Database:
    """Worlds (gR,gS,gT,gU) in [M]^4; a=(gT,gU), b=(gS,gU), c=(gS,gT), d=(gR,gU), e=(gR,gT), f=(gR,gS).

    With fill=1 every relation has M^3 rows and the output has M^4 = N^(4/3) rows.
    Otherwise each relation independently keeps a random fraction of its rows.
    """
    q = bad_for_chain()
    rels = {}
    for spec in q.relations:
        miss = {"R": 0, "S": 1, "T": 2, "U": 3}[spec.name]
        rows = set()
        for g in itertools.product(range(M), repeat=3):
            full = list(g)
            full.insert(miss, 0)
            w = dict(zip("abcdef", _bfc_world(*full)))
            if fill >= 1 or rng.random() < fill:
                rows.add(tuple(w[a] for a in spec.attrs))
        rels[spec.name] = Relation(spec.attrs, rows)
    return Database(q, rels, bad_for_chain_udfs())


def bad_for_chain_random(rng: random.Random, max_n: int = 64) -> Database:
    M = rng.choice([2, 3, 4])
    cap = max_n / M**3
    return bad_for_chain_instance(M, rng, fill=min(1.0, rng.uniform(0.3, 1.0) * cap))


# the lattice without an SM-proof -------------------------------------------
# Variables p,q,r,x,y,z,a,b,c; inputs R(x,p,q), S(y,p,r), T(z,q,r).
# Worlds (g1,g2,g3,p,q,r); x=(g2,g3,p,q), y=(g1,g3,p,r), z=(g1,g2,q,r),
# a=(g3,p,q,r), b=(g2,p,q,r), c=(g1,p,q,r). Values are base-16 digit strings
# packed into integers.

_B = 16


def _enc(*ds):
    v = 0
    for d in ds:
        v = v * _B + d
    return v


def _dec(v, k):
    out = []
    for _ in range(k):
        out.append(v % _B)
        v //= _B
    return tuple(reversed(out))


def _nosmp_world(g1, g2, g3, p, q, r):
    return {"p": p, "q": q, "r": r, "x": _enc(g2, g3, p, q), "y": _enc(g1, g3, p, r), "z": _enc(g1, g2, q, r),
            "a": _enc(g3, p, q, r), "b": _enc(g2, p, q, r), "c": _enc(g1, p, q, r)}


def _nosmp_rules():
    """FD name -> (lhs, rhs, guard, formula over decoded lhs values)."""
    D4 = lambda v: _dec(v, 4)  # noqa: E731

    def xr_ab(x, r):
        g2, g3, p, q = D4(x)
        return _enc(g3, p, q, r), _enc(g2, p, q, r)

    def yq_ac(y, q):
        g1, g3, p, r = D4(y)
        return _enc(g3, p, q, r), _enc(g1, p, q, r)

    def zp_bc(z, p):
        g1, g2, q, r = D4(z)
        return _enc(g2, p, q, r), _enc(g1, p, q, r)

    def ab_x(a, b):
        g3, p, q, _ = D4(a)
        return _enc(D4(b)[0], g3, p, q)

    def ac_y(a, c):
        g3, p, _, r = D4(a)
        return _enc(D4(c)[0], g3, p, r)

    def bc_z(b, c):
        g2, _, q, r = D4(b)
        return _enc(D4(c)[0], g2, q, r)

    def ax_b(a, x):
        return _enc(D4(x)[0], *D4(a)[1:])

    def bx_a(b, x):
        return _enc(D4(x)[1], *D4(b)[1:])

    def ay_c(a, y):
        return _enc(D4(y)[0], *D4(a)[1:])

    def cy_a(c, y):
        return _enc(D4(y)[1], *D4(c)[1:])

    def bz_c(b, z):
        return _enc(D4(z)[0], *D4(b)[1:])

    def cz_b(c, z):
        return _enc(D4(z)[1], *D4(c)[1:])

    pqr = lambda v: D4(v)[1:]  # noqa: E731
    return {
        "ns_a": ("a", "pqr", pqr), "ns_b": ("b", "pqr", pqr), "ns_c": ("c", "pqr", pqr),
        "ns_xr": ("xr", "ab", xr_ab), "ns_yq": ("yq", "ac", yq_ac), "ns_zp": ("zp", "bc", zp_bc),
        "ns_ab": ("ab", "x", ab_x), "ns_ac": ("ac", "y", ac_y), "ns_bc": ("bc", "z", bc_z),
        "ns_ax": ("ax", "b", ax_b), "ns_bx": ("bx", "a", bx_a), "ns_ay": ("ay", "c", ay_c),
        "ns_cy": ("cy", "a", cy_a), "ns_bz": ("bz", "c", bz_c), "ns_cz": ("cz", "b", cz_b),
    }


def no_smp(N: int | None = None) -> Query:
    fds = [_fd("x", "pq", "R"), _fd("y", "pr", "S"), _fd("z", "qr", "T")]
    for name, (lhs, rhs, _) in _nosmp_rules().items():
        fds.append(_fd(lhs, rhs, udf=name))
    return Query(tuple("pqrxyzabc"), (_rel("R", "xpq", N), _rel("S", "ypr", N), _rel("T", "zqr", N)), tuple(fds))


def no_smp_tables(M: int, k: int) -> UdfRegistry:
    """Lookup tables for every UDF-backed FD, total over all encodable values."""
    worlds = [_nosmp_world(*w) for w in itertools.product(range(M), range(M), range(M),
                                                          range(k), range(k), range(k))]
    dom = {v: sorted({w[v] for w in worlds}) for v in "pqrxyzabc"}
    reg = UdfRegistry()
    for name, (lhs, rhs, fn) in _nosmp_rules().items():
        table = {}
        for key in itertools.product(*[dom[v] for v in lhs]):
            val = fn(*key)
            table[key] = val if isinstance(val, tuple) else (val,)
        reg.register(name, TableUdf(table))
    return reg


def no_smp_instance(rng: random.Random, M: int = 4, k: int = 2, n_worlds: int = 24,
                    noise: int = 8, max_n: int = 64, tables: UdfRegistry | None = None) -> Database:
    """Projections of random worlds plus random extra rows, at most ``max_n`` rows per relation."""
    q = no_smp()
    universe = list(itertools.product(range(M), range(M), range(M), range(k), range(k), range(k)))
    chosen = [_nosmp_world(*w) for w in rng.sample(universe, min(n_worlds, len(universe)))]
    rels = {}
    for spec in q.relations:
        rows = {tuple(w[a] for a in spec.attrs) for w in chosen}
        for _ in range(noise):
            w = _nosmp_world(*rng.choice(universe))
            rows.add(tuple(w[a] for a in spec.attrs))
        rows = sorted(rows)
        if len(rows) > max_n:
            rows = rng.sample(rows, max_n)
        rels[spec.name] = Relation(spec.attrs, rows)
    return Database(q, rels, tables or no_smp_tables(M, k))


def no_smp_elements(lat: Lattice) -> dict[str, int]:
    names = ["p", "q", "r", "pq", "pr", "qr", "xpq", "ypr", "zqr", "pqr", "apqr", "bpqr", "cpqr",
             "abxpqr", "acypqr", "bczpqr"]
    out = {n: lat.element(n) for n in names}
    out["0"] = lat.hat0
    out["1"] = lat.hat1
    return out


QUERIES = {
    "triangle": triangle,
    "fd-path": fd_path,
    "m3": m3,
    "maximal-no-good": maximal_no_good,
    "simple-chain": simple_chain,
    "bad-for-chain": bad_for_chain,
    "no-smp": no_smp,
}


def default_udfs() -> UdfRegistry:
    reg = bad_for_chain_udfs()
    return reg
