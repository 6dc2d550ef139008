"""LLP / CLLP construction and exact solution, dual certificates, output inequalities."""
from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .lattice import Lattice, is_submodular
from .lp import EQ, GE, LE, LinearProgram, LPSolution, solve_exact

LOG_DENOMINATOR = 2**24


class UnboundedError(RuntimeError):
    """Some co-atom is not covered: the bound is infinite."""


def log2_up(N: int, denominator: int = LOG_DENOMINATOR) -> Fraction:
    """log2 N exactly for powers of two, else the dyadic upper approximation p/denominator."""
    if N < 1:
        raise ValueError("cardinality must be >= 1")
    if N & (N - 1) == 0:
        return Fraction(N.bit_length() - 1)
    with decimal.localcontext() as ctx:
        ctx.prec = 80
        val = decimal.Decimal(N).ln() / decimal.Decimal(2).ln() * denominator
        p = int(val.to_integral_value(rounding=decimal.ROUND_CEILING))
    return Fraction(p, denominator)


def log2_leq(k: int, q: Fraction) -> bool:
    """Exact test of log2 k <= q, i.e. k^b <= 2^a for q = a/b, without huge powers."""
    q = Fraction(q)
    if k <= 0:
        return True
    if k & (k - 1) == 0:
        return k.bit_length() - 1 <= q
    a, b = q.numerator, q.denominator
    if b <= 64:
        return k**b <= 2**a if a >= 0 else False
    # log2 k is irrational here, so refining the precision always separates it from q
    prec = 40
    while True:
        with decimal.localcontext() as ctx:
            ctx.prec = prec
            lg = decimal.Decimal(k).ln() / decimal.Decimal(2).ln()
            qd = decimal.Decimal(a) / decimal.Decimal(b)
            gap = lg - qd
            if abs(gap) > decimal.Decimal(10) ** (8 - prec):
                return gap < 0
        prec *= 2


def h_name(lat: Lattice, x: int) -> str:
    return f"h[{lat.label(x)}]"


def pair_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


# LLP -----------------------------------------------------------------------

def build_llp(lat: Lattice, relations: Sequence[int], n: Sequence) -> LinearProgram:
    lp = LinearProgram("max")
    for x in lat:
        lp.var(h_name(lat, x))
    for a, b in lat.incomparable_pairs():
        row = {}
        for e, c in ((lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)):
            row[h_name(lat, e)] = row.get(h_name(lat, e), 0) + c
        lp.add(row, LE, 0, f"sub[{a},{b}]")
    for j, (r, nj) in enumerate(zip(relations, n)):
        lp.add({h_name(lat, r): 1}, LE, nj, f"card[{j}]")
    lp.set_objective({h_name(lat, lat.hat1): 1})
    return lp


@dataclass
class DualCertificate:
    """Dual weights: w per relation, s per incomparable pair, c per conditional pair, m per cover."""
    w: dict[int, Fraction] = field(default_factory=dict)
    s: dict[tuple[int, int], Fraction] = field(default_factory=dict)
    c: dict[tuple[int, int], Fraction] = field(default_factory=dict)
    m: dict[tuple[int, int], Fraction] = field(default_factory=dict)
    objective: Fraction = Fraction(0)

    def denominator(self) -> int:
        d = 1
        for part in (self.w, self.s, self.c, self.m):
            for v in part.values():
                d = d * v.denominator // math.gcd(d, v.denominator)
        return d

    def support(self):
        return {k: v for part in (self.s, self.c, self.m) for k, v in part.items() if v}


def netflow(lat: Lattice, cert: DualCertificate, relations: Sequence[int] = ()) -> list[Fraction]:
    """Flow balance per element: inflow from conditional pairs, s-pairs and m-pairs, plus w on inputs."""
    f = [Fraction(0)] * len(lat)
    for j, v in cert.w.items():
        f[relations[j]] += v
    for (x, y), v in cert.c.items():
        f[y] += v
        f[x] -= v
    for (a, b), v in cert.s.items():
        f[lat.meet(a, b)] += v
        f[lat.join(a, b)] += v
        f[a] -= v
        f[b] -= v
    for (x, y), v in cert.m.items():
        f[x] += v
        f[y] -= v
    return f


def is_dual_feasible(lat: Lattice, cert: DualCertificate, relations: Sequence[int] = (),
                     skip_bottom: bool = False) -> bool:
    if any(v < 0 for part in (cert.w, cert.s, cert.c, cert.m) for v in part.values()):
        return False
    f = netflow(lat, cert, relations)
    for z in lat:
        if z == lat.hat0 and skip_bottom:
            continue
        if f[z] < (1 if z == lat.hat1 else 0):
            return False
    return True


@dataclass
class LLPResult:
    opt: Fraction
    h: list[Fraction]
    cert: DualCertificate
    solution: LPSolution


def solve_llp(lat: Lattice, relations: Sequence[int], n: Sequence) -> LLPResult:
    n = [Fraction(v) for v in n]
    lp = build_llp(lat, relations, n)
    sol = solve_exact(lp)
    if sol.status == "unbounded":
        raise UnboundedError("LLP is unbounded (uncovered co-atom)")
    h = [sol.primal[h_name(lat, x)] for x in lat]
    cert = DualCertificate(objective=sol.objective)
    for j in range(len(relations)):
        cert.w[j] = sol.dual[f"card[{j}]"]
    for a, b in lat.incomparable_pairs():
        v = sol.dual[f"sub[{a},{b}]"]
        if v:
            cert.s[(a, b)] = v
    return LLPResult(sol.objective, h, cert, sol)


def build_dual_llp(lat: Lattice, relations: Sequence[int], n: Sequence) -> LinearProgram:
    lp = LinearProgram("min")
    for j in range(len(relations)):
        lp.var(f"w[{j}]")
    pairs = lat.incomparable_pairs()
    for a, b in pairs:
        lp.var(f"s[{a},{b}]")
    rows: dict[int, dict[str, int]] = {z: {} for z in lat}
    for j, r in enumerate(relations):
        rows[r][f"w[{j}]"] = rows[r].get(f"w[{j}]", 0) + 1
    for a, b in pairs:
        nm = f"s[{a},{b}]"
        for e, c in ((lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)):
            rows[e][nm] = rows[e].get(nm, 0) + c
    for z in lat:
        lp.add(rows[z], GE, 1 if z == lat.hat1 else 0, f"flow[{z}]")
    lp.set_objective({f"w[{j}]": v for j, v in enumerate(n)})
    return lp


def refine_llp_certificate(lat: Lattice, relations: Sequence[int], n: Sequence, opt: Fraction) -> DualCertificate:
    """Among optimal dual solutions, one with the least total s weight."""
    lp = build_dual_llp(lat, relations, n)
    lp.add({f"w[{j}]": v for j, v in enumerate(n)}, EQ, opt, "opt")
    lp.set_objective({f"s[{a},{b}]": 1 for a, b in lat.incomparable_pairs()})
    sol = solve_exact(lp)
    cert = DualCertificate(objective=opt)
    for j in range(len(relations)):
        cert.w[j] = sol.primal[f"w[{j}]"]
    for a, b in lat.incomparable_pairs():
        v = sol.primal[f"s[{a},{b}]"]
        if v:
            cert.s[(a, b)] = v
    return cert


def glvv_bound(lat: Lattice, relations: Sequence[int], n: Sequence) -> Fraction:
    return solve_llp(lat, relations, n).opt


# output inequalities -------------------------------------------------------

def check_output_inequality(lat: Lattice, relations: Sequence[int], w: Sequence) -> tuple[bool, dict]:
    """Does sum_j w_j h(R_j) >= h(1̂) hold for all polymatroids? Returns the s-part if so."""
    lp = LinearProgram("min")
    pairs = lat.incomparable_pairs()
    for a, b in pairs:
        lp.var(f"s[{a},{b}]")
    base = [Fraction(0)] * len(lat)
    for j, r in enumerate(relations):
        base[r] += Fraction(w[j])
    rows: dict[int, dict[str, int]] = {z: {} for z in lat}
    for a, b in pairs:
        nm = f"s[{a},{b}]"
        for e, c in ((lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)):
            rows[e][nm] = rows[e].get(nm, 0) + c
    for z in lat:
        need = (1 if z == lat.hat1 else 0) - base[z]
        if not rows[z] and need <= 0:
            continue
        lp.add(rows[z], GE, need, f"flow[{z}]")
    lp.set_objective({f"s[{a},{b}]": 1 for a, b in pairs})
    if not lp.var_names:
        lp.var("dummy")
    sol = solve_exact(lp)
    if sol.status != "optimal":
        return False, {}
    s = {}
    for a, b in pairs:
        v = sol.primal[f"s[{a},{b}]"]
        if v:
            s[(a, b)] = v
    return True, s


def violating_polymatroid(lat: Lattice, relations: Sequence[int], w: Sequence) -> list[Fraction] | None:
    """A polymatroid with h(1̂) > sum_j w_j h(R_j), scaled to integers; None if none exists."""
    lp = LinearProgram("max")
    for x in lat:
        lp.var(h_name(lat, x))
    for a, b in lat.incomparable_pairs():
        row = {}
        for e, c in ((lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)):
            row[h_name(lat, e)] = row.get(h_name(lat, e), 0) + c
        lp.add(row, LE, 0, f"sub[{a},{b}]")
    lp.add({h_name(lat, lat.hat0): 1}, EQ, 0, "zero")
    lp.add({h_name(lat, lat.hat1): 1}, LE, 1, "norm")
    obj = {h_name(lat, lat.hat1): Fraction(1)}
    for j, r in enumerate(relations):
        obj[h_name(lat, r)] = obj.get(h_name(lat, r), 0) - Fraction(w[j])
    lp.set_objective(obj)
    sol = solve_exact(lp)
    if sol.objective <= 0:
        return None
    h = lovasz_monotonize(lat, [sol.primal[h_name(lat, x)] for x in lat])
    d = 1
    for v in h:
        d = d * v.denominator // math.gcd(d, v.denominator)
    return [v * d for v in h]


def lovasz_monotonize(lat: Lattice, h: Sequence) -> list[Fraction]:
    """h̄(0̂)=0 and h̄(X) = min over Y >= X of h(Y)."""
    h = [Fraction(v) for v in h]
    if any(v < 0 for v in h):
        raise ValueError("h must be nonnegative")
    if not is_submodular(lat, h):
        raise ValueError("h is not submodular")
    out = [min(h[y] for y in lat.above(x)) for x in lat]
    out[lat.hat0] = Fraction(0)
    return out


# CLLP ----------------------------------------------------------------------

@dataclass(frozen=True)
class CPair:
    """Conditional constraint h(Y) - h(X) <= n with X < Y."""
    x: int
    y: int
    n: Fraction


def check_pairs(lat: Lattice, pairs: Sequence[CPair]):
    for p in pairs:
        if not lat.lt(p.x, p.y):
            raise ValueError(f"pair ({lat.label(p.x)},{lat.label(p.y)}) is not strictly increasing")
        if p.n < 0:
            raise ValueError("log-degree bound must be nonnegative")


def build_cllp(lat: Lattice, pairs: Sequence[CPair]) -> LinearProgram:
    """h(0̂) is fixed to 0 by leaving it out of the program."""
    check_pairs(lat, pairs)
    lp = LinearProgram("max")
    z0 = lat.hat0

    def term(row, e, c):
        if e != z0:
            nm = h_name(lat, e)
            row[nm] = row.get(nm, 0) + c

    for x in lat:
        if x != z0:
            lp.var(h_name(lat, x))
    for k, p in enumerate(pairs):
        row = {}
        term(row, p.y, 1)
        term(row, p.x, -1)
        lp.add(row, LE, p.n, f"deg[{k}]")
    for a, b in lat.incomparable_pairs():
        row = {}
        for e, c in ((lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)):
            term(row, e, c)
        lp.add(row, LE, 0, f"sub[{a},{b}]")
    for x, y in lat.covers:
        row = {}
        term(row, x, 1)
        term(row, y, -1)
        lp.add(row, LE, 0, f"mono[{x},{y}]")
    lp.set_objective({h_name(lat, lat.hat1): 1})
    return lp


def build_dual_cllp(lat: Lattice, pairs: Sequence[CPair]) -> LinearProgram:
    """min sum n c  s.t.  netflow(1̂) >= 1, netflow(Z) >= 0 for 0̂ < Z < 1̂."""
    check_pairs(lat, pairs)
    lp = LinearProgram("min")
    rows: dict[int, dict[str, int]] = {z: {} for z in lat}

    def term(e, nm, c):
        rows[e][nm] = rows[e].get(nm, 0) + c

    for k, p in enumerate(pairs):
        nm = f"c[{k}]"
        lp.var(nm)
        term(p.y, nm, 1)
        term(p.x, nm, -1)
    for a, b in lat.incomparable_pairs():
        nm = f"s[{a},{b}]"
        lp.var(nm)
        for e, c in ((lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)):
            term(e, nm, c)
    for x, y in lat.covers:
        nm = f"m[{x},{y}]"
        lp.var(nm)
        term(x, nm, 1)
        term(y, nm, -1)
    for z in lat:
        if z != lat.hat0:
            lp.add(rows[z], GE, 1 if z == lat.hat1 else 0, f"flow[{z}]")
    lp.set_objective({f"c[{k}]": p.n for k, p in enumerate(pairs)})
    return lp


@dataclass
class CLLPResult:
    opt: Fraction
    h: list[Fraction]
    cert: DualCertificate
    pairs: list[CPair]


def solve_cllp(lat: Lattice, pairs: Sequence[CPair]) -> CLLPResult:
    pairs = list(pairs)
    lp = build_cllp(lat, pairs)
    sol = solve_exact(lp)
    if sol.status == "unbounded":
        raise UnboundedError("CLLP is unbounded")
    h = [Fraction(0) if x == lat.hat0 else sol.primal[h_name(lat, x)] for x in lat]
    cert = DualCertificate(objective=sol.objective)
    for k, p in enumerate(pairs):
        v = sol.dual[f"deg[{k}]"]
        if v:
            cert.c[(k,)] = v
    for a, b in lat.incomparable_pairs():
        v = sol.dual[f"sub[{a},{b}]"]
        if v:
            cert.s[(a, b)] = v
    for x, y in lat.covers:
        v = sol.dual[f"mono[{x},{y}]"]
        if v:
            cert.m[(x, y)] = v
    return CLLPResult(sol.objective, h, _index_c(cert, pairs), pairs)


def _index_c(cert: DualCertificate, pairs: Sequence[CPair]) -> DualCertificate:
    """Re-key c by (x, y) element pairs, summing duplicates."""
    c = {}
    for (k,), v in cert.c.items():
        key = (pairs[k].x, pairs[k].y)
        c[key] = c.get(key, Fraction(0)) + v
    return DualCertificate(cert.w, cert.s, c, cert.m, cert.objective)


def cllp_objective(cert: DualCertificate, pairs: Sequence[CPair]) -> Fraction:
    best = {}
    for p in pairs:
        key = (p.x, p.y)
        best[key] = min(best.get(key, p.n), p.n)
    return sum((v * best[k] for k, v in cert.c.items()), Fraction(0))


def llp_pairs(lat: Lattice, relations: Sequence[int], n: Sequence) -> list[CPair]:
    return [CPair(lat.hat0, r, Fraction(v)) for r, v in zip(relations, n) if r != lat.hat0]


def query_pairs(lat: Lattice, n: Mapping[str, Fraction], degree_logs: Sequence[Fraction] = ()) -> list[CPair]:
    """Cardinality pairs (0̂, R_j) plus one pair per declared degree bound."""
    q = lat.query
    out = [CPair(lat.hat0, lat.element(r.attrs), Fraction(n[r.name])) for r in q.relations]
    for db, v in zip(q.degree_bounds, degree_logs):
        x, y = lat.element(db.given), lat.element(db.of)
        if x != y:
            out.append(CPair(x, y, Fraction(v)))
    return [p for p in out if p.x != p.y]
