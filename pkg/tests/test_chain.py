import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latjoin import catalog
from latjoin.chain import (Chain, ChainError, chain_bound, chain_tightness_check, footprint, good_chains,
                           is_good_chain, run_chain, select_chain)
from latjoin.lattice import build_lattice
from latjoin.relational import Database, Relation, brute_force_join

F = Fraction


def chain_of(lat, *labels):
    ch = Chain(tuple(lat.element(x) for x in labels))
    ch.validate(lat)
    return ch


@pytest.fixture
def fd_path():
    lat = build_lattice(catalog.fd_path())
    return lat, lat.relation_elements()


def test_fd_path_best_chain(fd_path):
    lat, rels = fd_path
    ch = chain_of(lat, "", "y", "yz", "xyzu")
    assert [sorted(footprint(lat, ch, r)) for r in rels] == [[1, 3], [1, 2], [2, 3]]
    assert is_good_chain(lat, ch, rels) == (True, None)
    assert chain_bound(lat, ch, rels, [1, 1, 1]).value == F(3, 2)
    assert chain_tightness_check(lat, ch).tight


def test_fd_path_longer_chain_is_good_but_loose(fd_path):
    lat, rels = fd_path
    ch = chain_of(lat, "", "x", "xu", "xyu", "xyzu")
    assert is_good_chain(lat, ch, rels)[0]
    assert chain_bound(lat, ch, rels, [1, 1, 1]).value == 2
    assert not chain_tightness_check(lat, ch).tight


def test_chain_validation():
    lat = build_lattice(catalog.triangle())
    with pytest.raises(ChainError):
        Chain((lat.hat0,))
    with pytest.raises(ChainError):
        chain_of(lat, "x", "xyz")
    with pytest.raises(ChainError):
        chain_of(lat, "", "xy", "x", "xyz")


def test_non_good_chain_detected_and_rejected():
    q = catalog.triangle()
    lat = build_lattice(q)
    ch = chain_of(lat, "", "xy", "xyz")
    ok, bad = is_good_chain(lat, ch, lat.relation_elements())
    assert not ok and bad == (1, 1)
    db = Database(q, {"R": Relation("xy", [(1, 1)]), "S": Relation("yz", [(1, 1)]), "T": Relation("zx", [(1, 1)])})
    with pytest.raises(ChainError):
        run_chain(q, db, lat, ch)


@pytest.mark.parametrize("name, shearer, best", [
    ("triangle", F(3, 2), F(3, 2)),
    ("fd-path", 2, F(3, 2)),
    ("m3", 2, 2),
    ("maximal-no-good", 2, 2),
    ("simple-chain", 1, 1),
    ("bad-for-chain", F(3, 2), F(3, 2)),
    ("no-smp", 2, 2),
])
def test_selectors_return_good_chains(name, shearer, best):
    lat = build_lattice(catalog.QUERIES[name]())
    rels = lat.relation_elements()
    n = [1] * len(rels)
    for mode in ("shearer", "dual", "exhaustive"):
        ch, cov = select_chain(lat, rels, n, mode)
        ch.validate(lat)
        assert is_good_chain(lat, ch, rels)[0]
        assert cov.value == {"shearer": shearer, "dual": shearer, "exhaustive": best}[mode]


def test_good_chain_enumeration_contains_the_best(fd_path):
    lat, rels = fd_path
    chains = list(good_chains(lat, rels))
    assert chain_of(lat, "", "y", "yz", "xyzu") in chains
    assert all(is_good_chain(lat, c, rels)[0] for c in chains)


def test_unknown_mode(fd_path):
    with pytest.raises(ChainError):
        select_chain(*fd_path, [1, 1, 1], "sideways")


@pytest.mark.parametrize("N", [8, 32])
def test_run_chain_on_adversarial_fd_path(fd_path, N):
    lat, _ = fd_path
    db = catalog.fd_path_adversarial(N)
    ch = chain_of(lat, "", "y", "yz", "xyzu")
    run = run_chain(db.query, db, lat, ch)
    assert run.output == brute_force_join(db.query, db)
    assert run.level_sizes[0] == 1


def test_run_chain_on_m3():
    q = catalog.m3(6)
    lat = build_lattice(q)
    db = catalog.m3_instance(6)
    ch, _ = select_chain(lat, lat.relation_elements(), [1, 1, 1])
    out = run_chain(q, db, lat, ch).output
    assert len(out) == 36
    assert out == brute_force_join(q, db)


pairs = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=12)


@given(pairs, pairs, pairs, st.sampled_from(["shearer", "dual", "exhaustive"]))
def test_run_chain_matches_oracle_fd_path(r, s, t, mode):
    q = catalog.fd_path()
    lat = build_lattice(q)
    db = Database(q, {"R": Relation("xy", r), "S": Relation("yz", s), "T": Relation("zu", t)})
    ch, _ = select_chain(lat, lat.relation_elements(), [1, 1, 1], mode)
    assert run_chain(q, db, lat, ch).output == brute_force_join(q, db)


@given(pairs, pairs, pairs)
def test_run_chain_matches_oracle_triangle(r, s, t):
    q = catalog.triangle()
    lat = build_lattice(q)
    db = Database(q, {"R": Relation("xy", r), "S": Relation("yz", s), "T": Relation("zx", t)})
    ch, _ = select_chain(lat, lat.relation_elements(), [1, 1, 1])
    assert run_chain(q, db, lat, ch).output == brute_force_join(q, db)


@given(st.integers(0, 10**6))
def test_run_chain_matches_oracle_bad_for_chain(seed):
    db = catalog.bad_for_chain_random(random.Random(seed), max_n=20)
    lat = build_lattice(db.query)
    ch, _ = select_chain(lat, lat.relation_elements(), [1] * 3)
    assert run_chain(db.query, db, lat, ch).output == brute_force_join(db.query, db)
