"""Co-atomic hypergraph, fractional edge covers, normal functions and lattices, materialization."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .bounds import check_output_inequality, violating_polymatroid
from .lattice import Embedding, Lattice, NotNormalError, canonical_embedding, mobius_invert
from .lp import GE, LE, LinearProgram, solve_exact
from .relational import Database, UdfRegistry, gen_quasi_product

VERTEX_CAP = 200_000


@dataclass
class Hypergraph:
    vertices: list
    edges: list[frozenset]
    names: list[str] = field(default_factory=list)

    def isolated(self) -> list:
        covered = set().union(*self.edges) if self.edges else set()
        return [v for v in self.vertices if v not in covered]


def coatomic_hypergraph(lat: Lattice, relations: Sequence[int], names: Sequence[str] | None = None) -> Hypergraph:
    """Vertices are the co-atoms; e_j holds the co-atoms not above R_j."""
    edges = [frozenset(z for z in lat.coatoms if not lat.leq(r, z)) for r in relations]
    return Hypergraph(list(lat.coatoms), edges, list(names) if names else [str(j) for j in range(len(relations))])


@dataclass
class CoverResult:
    value: Fraction | None  # None when some vertex is isolated
    weights: list[Fraction]

    @property
    def finite(self) -> bool:
        return self.value is not None


def fractional_edge_cover(hg: Hypergraph, n: Sequence) -> CoverResult:
    if hg.isolated():
        return CoverResult(None, [])
    lp = LinearProgram("min")
    for j in range(len(hg.edges)):
        lp.var(f"w[{j}]")
    for v in hg.vertices:
        lp.add({f"w[{j}]": 1 for j, e in enumerate(hg.edges) if v in e}, GE, 1, f"cover[{v}]")
    lp.set_objective({f"w[{j}]": Fraction(x) for j, x in enumerate(n)})
    sol = solve_exact(lp)
    return CoverResult(sol.objective, [sol.primal[f"w[{j}]"] for j in range(len(hg.edges))])


# normal functions ----------------------------------------------------------

@dataclass
class NormalReport:
    normal: bool
    strictly: bool
    g: list[Fraction]
    a: dict[int, Fraction]  # step-function coefficients a_Z = -g(Z)


def is_normal_function(lat: Lattice, h: Sequence) -> NormalReport:
    g = mobius_invert(lat, h)
    top = lat.hat1
    below = [z for z in lat if z != top]
    normal = all(g[z] <= 0 for z in below) and g[top] == -sum((g[z] for z in below), Fraction(0))
    strictly = normal and all(g[z] == 0 for z in below if z not in lat.coatoms)
    a = {z: -g[z] for z in below if g[z]} if normal else {}
    return NormalReport(normal, strictly, g, a)


def step_combination(lat: Lattice, a: dict[int, Fraction]) -> list[Fraction]:
    return [sum((v for z, v in a.items() if not lat.leq(x, z)), Fraction(0)) for x in lat]


# vertex enumeration ------------------------------------------------------------

def _solve_square(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction] | None:
    """Exact Gaussian elimination; None if singular."""
    k = len(A)
    M = [list(r) + [bv] for r, bv in zip(A, b)]
    for col in range(k):
        piv = next((r for r in range(col, k) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        pv = M[col][col]
        M[col] = [v / pv for v in M[col]]
        for r in range(k):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[r][k] for r in range(k)]


def cover_polytope_vertices(hg: Hypergraph, cap: int = VERTEX_CAP) -> list[tuple[Fraction, ...]]:
    """Vertices of {w >= 0 : every vertex of hg covered with weight >= 1}, by basis enumeration."""
    k = len(hg.edges)
    rows = []
    for v in hg.vertices:
        rows.append(([Fraction(1 if v in e else 0) for e in hg.edges], Fraction(1)))
    for j in range(k):
        rows.append(([Fraction(1 if i == j else 0) for i in range(k)], Fraction(0)))
    if math.comb(len(rows), k) > cap:
        raise ValueError(f"vertex enumeration over {math.comb(len(rows), k)} bases exceeds cap {cap}")
    out = set()
    for combo in itertools.combinations(range(len(rows)), k):
        w = _solve_square([rows[i][0] for i in combo], [rows[i][1] for i in combo])
        if w is None or any(x < 0 for x in w):
            continue
        if all(sum((a * x for a, x in zip(r, w)), Fraction(0)) >= rhs for r, rhs in rows):
            out.add(tuple(w))
    return sorted(out)


@dataclass
class LatticeNormality:
    normal: bool
    vertices: list[tuple[Fraction, ...]]
    witness_w: tuple[Fraction, ...] | None = None
    witness_h: list[Fraction] | None = None


def is_normal_lattice(lat: Lattice, relations: Sequence[int], cap: int = VERTEX_CAP) -> LatticeNormality:
    """Normal iff every vertex of the co-atomic cover polytope gives a valid output inequality."""
    hg = coatomic_hypergraph(lat, relations)
    verts = cover_polytope_vertices(hg, cap)
    for w in verts:
        ok, _ = check_output_inequality(lat, relations, w)
        if not ok:
            return LatticeNormality(False, verts, w, violating_polymatroid(lat, relations, w))
    return LatticeNormality(True, verts)


def normal_optimum(lat: Lattice, relations: Sequence[int], n: Sequence) -> list[Fraction]:
    """Best normal polymatroid: a fractional packing of co-atom step functions under the n_j."""
    hg = coatomic_hypergraph(lat, relations)
    lp = LinearProgram("max")
    for z in hg.vertices:
        lp.var(f"a[{z}]")
    for j, e in enumerate(hg.edges):
        lp.add({f"a[{z}]": 1 for z in e}, LE, Fraction(n[j]), f"card[{j}]")
    lp.set_objective({f"a[{z}]": 1 for z in hg.vertices})
    sol = solve_exact(lp)
    if sol.status == "unbounded":
        raise NotNormalError("packing is unbounded: some co-atom is uncovered")
    return step_combination(lat, {z: sol.primal[f"a[{z}]"] for z in hg.vertices if sol.primal[f"a[{z}]"]})


# materialization -------------------------------------------------------------

@dataclass
class Materialized:
    db: Database
    embedding: Embedding
    scale: int


def materialize_normal(lat: Lattice, h: Sequence, udfs: UdfRegistry | None = None,
                       scale: int | None = None) -> Materialized:
    """Quasi-product instance whose projection on each X has 2^(scale*h(X)) rows."""
    h = [Fraction(v) for v in h]
    if scale is None:
        scale = 1
        for v in h:
            scale = scale * v.denominator // math.gcd(scale, v.denominator)
    hs = [v * scale for v in h]
    if any(v.denominator != 1 for v in hs):
        raise NotNormalError("scaled h is not integral")
    if not is_normal_function(lat, hs).normal:
        raise NotNormalError("h is not normal")
    emb = canonical_embedding(lat, hs)
    return Materialized(gen_quasi_product(emb, 2, udfs), emb, scale)
