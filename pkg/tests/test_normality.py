import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latjoin import catalog
from latjoin.bounds import solve_llp
from latjoin.lattice import NotNormalError, build_lattice, canonical_embedding, is_polymatroid, step_function
from latjoin.normality import (coatomic_hypergraph, cover_polytope_vertices, fractional_edge_cover,
                               is_normal_function, is_normal_lattice, materialize_normal, normal_optimum)
from latjoin.relational import brute_force_join

F = Fraction


def setup(q):
    lat = build_lattice(q)
    return lat, lat.relation_elements()


def test_boolean_coatomic_hypergraph_is_query_hypergraph():
    lat, rels = setup(catalog.triangle())
    hg = coatomic_hypergraph(lat, rels)
    # co-atom X - {v} is missed exactly by the relations containing v
    names = {z: set("xyz") - set(lat.attrs(z)) for z in hg.vertices}
    assert [sorted(v for z in e for v in names[z]) for e in hg.edges] == [["x", "y"], ["y", "z"], ["x", "z"]]
    assert fractional_edge_cover(hg, [1, 1, 1]).value == F(3, 2)


def test_uncovered_coatom_gives_infinite_cover():
    q = catalog.boolean(2, ["a"])
    lat, rels = setup(q)
    assert not fractional_edge_cover(coatomic_hypergraph(lat, rels), [1]).finite


def test_cover_vertices_of_triangle():
    lat, rels = setup(catalog.triangle())
    verts = cover_polytope_vertices(coatomic_hypergraph(lat, rels))
    assert (F(1, 2),) * 3 in verts
    assert (1, 1, 0) in verts and len(verts) == 4


def test_m3_is_not_normal():
    lat, rels = setup(catalog.m3())
    res = is_normal_lattice(lat, rels)
    assert not res.normal
    assert res.witness_w == (F(1, 2),) * 3
    assert is_polymatroid(lat, res.witness_h)


@pytest.mark.parametrize("name", ["fd-path", "triangle", "simple-chain", "no-smp"])
def test_normal_lattices(name):
    lat, rels = setup(catalog.QUERIES[name]())
    assert is_normal_lattice(lat, rels).normal


def test_step_functions_are_strictly_normal():
    lat, _ = setup(catalog.fd_path())
    for z in lat.coatoms:
        rep = is_normal_function(lat, step_function(lat, z))
        assert rep.normal and rep.strictly
        assert rep.a == {z: 1}


def test_non_normal_function_detected():
    lat, _ = setup(catalog.m3())
    h = [F(0) if x == lat.hat0 else F(1) for x in lat]  # the M3 entropic example
    h[lat.hat1] = F(2)
    for x in lat.coatoms:
        h[x] = F(1)
    assert is_polymatroid(lat, h)
    assert not is_normal_function(lat, h).normal
    with pytest.raises(NotNormalError):
        canonical_embedding(lat, h)


def test_single_step_function_embeds_into_one_atom():
    lat, _ = setup(catalog.fd_path())
    z = lat.coatoms[0]
    emb = canonical_embedding(lat, step_function(lat, z))
    assert emb.target.size == 1
    assert emb.is_valid()


@pytest.mark.parametrize("N, want", [(4, 8), (16, 64)])
def test_fd_path_quasi_product(N, want):
    lat, rels = setup(catalog.fd_path())
    n = N.bit_length() - 1
    h = normal_optimum(lat, rels, [n] * 3)
    assert h[lat.hat1] == F(3, 2) * n
    m = materialize_normal(lat, h)
    assert m.embedding.is_valid()
    assert [len(m.db[r.name]) for r in lat.query.relations] == [N] * 3
    assert len(brute_force_join(lat.query, m.db)) == want


@given(st.integers(0, 10**6))
def test_random_distributive_lattices_are_normal(seed):
    q = catalog.random_distributive(random.Random(seed))
    lat, rels = setup(q)
    assert lat.is_distributive()
    res = is_normal_lattice(lat, rels)
    assert res.normal
    n = [F(1)] * len(rels)
    assert normal_optimum(lat, rels, n)[lat.hat1] == solve_llp(lat, rels, n).opt
