from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latjoin import catalog
from latjoin.lattice import (FD, DegreeBound, Query, QueryError, RelationSpec, build_lattice, closure,
                             is_polymatroid, mobius_apply, mobius_invert, step_function)


def _lat(q):
    return build_lattice(q)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_no_fds_gives_boolean_algebra(k):
    lat = _lat(catalog.boolean(k))
    assert len(lat) == 2**k
    assert lat.is_distributive()
    assert lat.mobius(lat.hat0, lat.hat1) == (-1) ** k


def test_closure_follows_fds():
    q = catalog.fd_path()
    assert closure("xz", q) == frozenset("xzu")
    assert closure("yu", q) == frozenset("yux")
    assert closure("y", q) == frozenset("y")


def test_m3_structure():
    lat = _lat(catalog.m3())
    assert len(lat) == 5
    assert not lat.is_distributive()
    assert lat.find_m3() is not None
    assert lat.mobius(lat.hat0, lat.hat1) == 2
    assert sorted(lat.label(x) for x in lat.coatoms) == ["x", "y", "z"]


def test_fd_path_lattice():
    lat = _lat(catalog.fd_path())
    # closed sets of {x,y,z,u} under xz->u, yu->x
    assert len(lat) == 12
    assert lat.join(lat.element("x"), lat.element("z")) == lat.element("xzu")
    assert lat.element("yu") == lat.element("xyu")
    assert lat.meet(lat.element("xy"), lat.element("yz")) == lat.element("y")
    assert not lat.is_distributive()


def test_simple_fds_give_distributive_lattice():
    assert _lat(catalog.simple_chain()).is_distributive()


def test_redundant_vars_reported():
    q = Query(("a", "b", "c"), (RelationSpec("R", ("a", "c")),), (FD(("a",), ("b",)), FD(("b",), ("a",))))
    assert _lat(q).redundant_vars() == ["a", "b"]
    assert _lat(catalog.fd_path()).redundant_vars() == []


@pytest.mark.parametrize("bad", [
    lambda: Query(("x", "x"), ()),
    lambda: Query(("x",), (RelationSpec("R", ("y",)),)),
    lambda: Query(("x", "y"), (RelationSpec("R", ("x",)), RelationSpec("R", ("y",)))),
    lambda: Query(("x", "y"), (RelationSpec("R", ("x", "y")),), (FD(("x",), ("y",), guard="S"),)),
    lambda: Query(("x", "y"), (RelationSpec("R", ("x", "y")),), (), (DegreeBound(("x",), ("x",), 2),)),
    lambda: Query(("x", "y"), (RelationSpec("R", ("x", "y")),), (), (DegreeBound(("x", "y"), ("x",), 0),)),
])
def test_query_validation(bad):
    with pytest.raises(QueryError):
        bad()


def test_mobius_expansion_on_boolean_algebra():
    lat = _lat(catalog.boolean(3))
    e = lat.element
    h = [Fraction(len(lat.attrs(x)) ** 2) for x in lat]
    g = mobius_invert(lat, h)
    assert g[e("a")] == h[e("a")] - h[e("ab")] - h[e("ac")] + h[e("abc")]


def test_step_function_is_polymatroid():
    lat = _lat(catalog.fd_path())
    for z in lat.coatoms:
        assert is_polymatroid(lat, step_function(lat, z))


def _random_query(data):
    k = data.draw(st.integers(2, 5))
    vs = tuple("abcde"[:k])
    fds = []
    for _ in range(data.draw(st.integers(0, 3))):
        lhs = data.draw(st.sets(st.sampled_from(vs), min_size=1, max_size=2))
        rhs = data.draw(st.sampled_from(vs))
        fds.append(FD(tuple(sorted(lhs)), (rhs,)))
    return Query(vs, (RelationSpec("R", vs),), tuple(fds))


@given(st.data())
def test_lattice_axioms(data):
    lat = _lat(_random_query(data))
    for a in lat:
        assert lat.join(a, a) == a and lat.meet(a, a) == a
        assert lat.leq(lat.hat0, a) and lat.leq(a, lat.hat1)
        for b in lat:
            assert lat.join(a, b) == lat.join(b, a)
            assert lat.meet(a, lat.join(a, b)) == a
            assert lat.join(a, lat.meet(a, b)) == a
            assert lat.leq(a, b) == (lat.join(a, b) == b)


@given(st.data())
def test_mobius_round_trip(data):
    lat = _lat(_random_query(data))
    h = [Fraction(data.draw(st.integers(-20, 20)), data.draw(st.integers(1, 6))) for _ in lat]
    assert mobius_apply(lat, mobius_invert(lat, h)) == h
    assert mobius_invert(lat, mobius_apply(lat, h)) == h


@given(st.data())
def test_mobius_function_inverts_zeta(data):
    lat = _lat(_random_query(data))
    for x in lat:
        for y in lat:
            if lat.leq(x, y):
                s = sum(lat.mobius(x, z) for z in lat if lat.leq(x, z) and lat.leq(z, y))
                assert s == (1 if x == y else 0)
