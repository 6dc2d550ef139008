import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latjoin import catalog
from latjoin.bounds import (CPair, DualCertificate, UnboundedError, build_dual_llp, check_output_inequality,
                            cllp_objective, is_dual_feasible, llp_pairs, log2_leq, log2_up, lovasz_monotonize,
                            query_pairs, refine_llp_certificate, solve_cllp, solve_llp, violating_polymatroid)
from latjoin.lattice import DegreeBound, Query, RelationSpec, build_lattice, is_polymatroid, is_submodular
from latjoin.lp import solve_exact

F = Fraction


def setup(q):
    lat = build_lattice(q)
    return lat, lat.relation_elements()


def test_log2_up_exact_on_powers_of_two():
    for k in range(20):
        assert log2_up(2**k) == k


@given(st.integers(1, 10**6))
def test_log2_up_is_a_tight_upper_bound(N):
    v = log2_up(N, 2**10)
    assert v.denominator <= 2**10
    assert 2 ** float(v) >= N * (1 - 1e-12)
    assert v - F(1, 2**10) < math.log2(N) + 1e-12


@given(st.integers(1, 5000), st.integers(0, 40), st.integers(1, 12))
def test_log2_leq_matches_integer_powers(k, a, b):
    assert log2_leq(k, F(a, b)) == (k**b <= 2**a)


def test_log2_leq_large_denominator():
    q = log2_up(3, 2**30)
    assert log2_leq(3, q)
    assert not log2_leq(3, q - F(1, 2**30))


@pytest.mark.parametrize("name, want", [
    ("triangle", F(3, 2)),      # Shearer / AGM
    ("fd-path", F(3, 2)),
    ("bad-for-chain", F(4, 3)),
    ("m3", F(2)),
    ("no-smp", F(3, 2)),
])
def test_llp_on_bundled_queries(name, want):
    lat, rels = setup(catalog.QUERIES[name]())
    res = solve_llp(lat, rels, [1] * len(rels))
    assert res.opt == want
    assert is_polymatroid(lat, res.h)
    assert res.h[lat.hat1] == want
    assert is_dual_feasible(lat, res.cert, rels)
    assert sum(res.cert.w.values()) == want


def test_llp_scales_with_n():
    lat, rels = setup(catalog.triangle())
    for n in [1, 4, 10, F(7, 3)]:
        assert solve_llp(lat, rels, [n] * 3).opt == F(3, 2) * n


def test_uncovered_coatom_is_unbounded():
    q = Query(("x", "y"), (RelationSpec("R", ("x",)),))
    lat, rels = setup(q)
    with pytest.raises(UnboundedError):
        solve_llp(lat, rels, [1])


def test_refined_certificate_is_optimal():
    lat, rels = setup(catalog.bad_for_chain())
    res = solve_llp(lat, rels, [1] * 4)
    cert = refine_llp_certificate(lat, rels, [1] * 4, res.opt)
    assert is_dual_feasible(lat, cert, rels)
    assert sum(cert.w.values()) == res.opt
    assert sum(cert.s.values()) <= sum(res.cert.s.values())


@pytest.mark.parametrize("name", ["triangle", "fd-path", "bad-for-chain", "m3", "no-smp", "simple-chain"])
def test_cllp_with_cardinality_pairs_equals_llp(name):
    lat, rels = setup(catalog.QUERIES[name]())
    n = [F(j + 2) for j in range(len(rels))]
    llp = solve_llp(lat, rels, n)
    cllp = solve_cllp(lat, llp_pairs(lat, rels, n))
    assert cllp.opt == llp.opt
    assert is_dual_feasible(lat, cllp.cert, skip_bottom=True)
    assert cllp_objective(cllp.cert, cllp.pairs) == cllp.opt


def _triangle_with_degree(d):
    return Query(("x", "y", "z"), (RelationSpec("R", ("x", "y")), RelationSpec("S", ("y", "z")),
                                   RelationSpec("T", ("z", "x"))), (), (DegreeBound(("x", "y"), ("x",), d, "R"),))


@pytest.mark.parametrize("logd", [0, 1, 2, 5, 8, 12])
def test_triangle_degree_bound(logd):
    n = 8
    q = _triangle_with_degree(2**logd)
    lat = build_lattice(q)
    pairs = query_pairs(lat, {"R": F(n), "S": F(n), "T": F(n)}, [F(logd)])
    assert solve_cllp(lat, pairs).opt == min(F(3, 2) * n, n + logd)


def test_cllp_rejects_bad_pairs():
    lat, _ = setup(catalog.triangle())
    with pytest.raises(ValueError):
        solve_cllp(lat, [CPair(lat.hat1, lat.hat0, F(1))])


@pytest.mark.parametrize("w, ok", [
    ((F(1, 2),) * 3, True),
    ((1, 1, 0), True),
    ((F(1, 2), F(1, 2), 0), False),
])
def test_output_inequality_on_triangle(w, ok):
    lat, rels = setup(catalog.triangle())
    assert check_output_inequality(lat, rels, w)[0] == ok


def test_m3_half_inequality_fails_with_witness():
    lat, rels = setup(catalog.m3())
    w = (F(1, 2),) * 3
    assert not check_output_inequality(lat, rels, w)[0]
    h = violating_polymatroid(lat, rels, w)
    assert is_polymatroid(lat, h)
    assert h[lat.hat1] > sum(x * h[r] for x, r in zip(w, rels))


def test_dual_llp_matches_primal():
    lat, rels = setup(catalog.bad_for_chain())
    n = [F(3), F(5), F(2), F(7)]
    assert solve_exact(build_dual_llp(lat, rels, n)).objective == solve_llp(lat, rels, n).opt


def test_netflow_rejects_negative_weights():
    lat, rels = setup(catalog.triangle())
    assert not is_dual_feasible(lat, DualCertificate(w={0: F(-1)}), rels)


@given(st.lists(st.integers(1, 12), min_size=3, max_size=3), st.integers(0, 2))
def test_llp_random_n_strong_duality(ns, which):
    q = [catalog.triangle(), catalog.fd_path(), catalog.bad_for_chain()][which]
    lat, rels = setup(q)
    n = (ns * 2)[:len(rels)]
    res = solve_llp(lat, rels, n)
    assert sum(res.cert.w[j] * n[j] for j in range(len(rels))) == res.opt
    assert is_dual_feasible(lat, res.cert, rels)


@given(st.data())
def test_lovasz_monotonization_gives_polymatroid(data):
    q = data.draw(st.sampled_from([catalog.triangle(), catalog.fd_path(), catalog.m3(), catalog.bad_for_chain()]))
    lat, rels = setup(q)
    n = [data.draw(st.integers(1, 6)) for _ in rels]
    h = solve_llp(lat, rels, n).h
    # lowering the top keeps submodularity but may break monotonicity
    drop = data.draw(st.integers(0, 4))
    h = list(h)
    h[lat.hat1] = max(F(0), h[lat.hat1] - drop)
    assert is_submodular(lat, h)
    hb = lovasz_monotonize(lat, h)
    assert is_polymatroid(lat, hb)
    assert all(hb[x] <= h[x] for x in lat)
