"""Acceptance criteria 1-11, one pass/fail line each (shown in the terminal summary)."""
import math
import random
import time
from fractions import Fraction

from latjoin import catalog
from latjoin.bounds import (is_dual_feasible, log2_up, lovasz_monotonize, query_pairs, solve_cllp,
                            solve_llp)
from latjoin.chain import run_chain, select_chain
from latjoin.csma import run_csma
from latjoin.lattice import (DegreeBound, Query, RelationSpec, build_lattice, is_polymatroid, is_submodular,
                             mobius_apply, mobius_invert)
from latjoin.normality import is_normal_lattice, materialize_normal, normal_optimum
from latjoin.relational import OpCounter, brute_force_join
from latjoin.sma import (check_goodness, find_sm_proof, from_element_steps, plan_sma, run_sma, sm_bound,
                         sma_n)

F = Fraction


def slope(xs, ys):
    """Least-squares slope of log y against log x."""
    lx, ly = [math.log(x) for x in xs], [math.log(y) for y in ys]
    mx, my = sum(lx) / len(lx), sum(ly) / len(ly)
    return sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / sum((a - mx) ** 2 for a in lx)


def test_criterion_01_triangle_llp(criterion):
    with criterion(1) as c:
        q = catalog.triangle()
        lat = build_lattice(q)
        rels = lat.relation_elements()
        t0 = time.perf_counter()
        for k in (1, 4, 10, 14):
            n = log2_up(2**k)
            assert n == k
            assert solve_llp(lat, rels, [n] * 3).opt == F(3, 2) * k
        dt = time.perf_counter() - t0
        assert dt < 1
        c.detail = f"LLP = 3/2 log N for N = 2^1..2^14 in {dt:.3f}s"


def test_criterion_02_bad_for_chain_gap(criterion):
    with criterion(2) as c:
        t0 = time.perf_counter()
        lat = build_lattice(catalog.bad_for_chain())
        rels = lat.relation_elements()
        n = [1] * len(rels)
        _, best = select_chain(lat, rels, n, "exhaustive")
        sm = sm_bound(lat, rels, n)
        dt = time.perf_counter() - t0
        assert best.value == F(3, 2)
        assert sm.value == sm.llp == F(4, 3)
        assert dt < 10
        c.detail = f"best chain 3/2 n, SM = LLP = 4/3 n in {dt:.2f}s"


def test_criterion_03_normality(criterion):
    with criterion(3) as c:
        lat = build_lattice(catalog.m3())
        res = is_normal_lattice(lat, lat.relation_elements())
        assert not res.normal and res.witness_w == (F(1, 2),) * 3
        lat = build_lattice(catalog.fd_path())
        assert is_normal_lattice(lat, lat.relation_elements()).normal
        for seed in range(20):
            lat = build_lattice(catalog.random_distributive(random.Random(seed)))
            assert lat.is_distributive()
            assert is_normal_lattice(lat, lat.relation_elements()).normal, f"seed {seed}"
        c.detail = "M3 not normal (1/2,1/2,1/2); fd_path normal; 20/20 distributive normal"


def test_criterion_04_worst_case_witnesses(criterion):
    with criterion(4) as c:
        q = catalog.fd_path()
        lat = build_lattice(q)
        rels = lat.relation_elements()
        got = []
        for N in (4, 16, 64):
            n = N.bit_length() - 1
            db = materialize_normal(lat, normal_optimum(lat, rels, [n] * 3)).db
            assert all(len(db[r.name]) == N for r in q.relations)
            out = len(brute_force_join(q, db))
            assert out == math.isqrt(N) ** 3
            got.append(out)
        for N in (8, 32):
            out = len(brute_force_join(catalog.m3(N), catalog.m3_instance(N)))
            assert out == N * N
            got.append(out)
        c.detail = f"fd_path quasi-product outputs {got[:3]}, M3 outputs {got[3:]}"


def test_criterion_05_chain_scaling(criterion):
    with criterion(5) as c:
        lat = build_lattice(catalog.fd_path())
        Ns, chain_ops, oracle_ops = [], [], []
        for k in (8, 10, 12):
            N = 2**k
            db = catalog.fd_path_adversarial(N)
            oc = OpCounter()
            truth = brute_force_join(db.query, db, counter=oc)
            ch, _ = select_chain(lat, lat.relation_elements(), sma_n(db), "exhaustive")
            cc = OpCounter()
            assert run_chain(db.query, db, lat, ch, cc).output == truth
            Ns.append(N)
            chain_ops.append(cc.total)
            oracle_ops.append(oc.total)
        s_chain, s_oracle = slope(Ns, chain_ops), slope(Ns, oracle_ops)
        c.detail = f"chain slope {s_chain:.3f}, oracle slope {s_oracle:.3f}"
        assert s_chain <= 1.6
        assert s_oracle >= 1.9


def test_criterion_06_sma(criterion):
    with criterion(6) as c:
        rng = random.Random(6)
        for i in range(100):
            db = catalog.bad_for_chain_random(rng, max_n=64)
            assert all(len(db[r.name]) <= 64 for r in db.query.relations)
            lat = build_lattice(db.query)
            plan = plan_sma(db.query, lat, sma_n(db))
            truth = brute_force_join(db.query, db)
            assert run_sma(db.query, db, lat, plan, invariant_check=truth).output == truth, f"instance {i}"
        Ns, ops = [], []
        for M in (8, 16):
            db = catalog.bad_for_chain_instance(M)
            lat = build_lattice(db.query)
            counter = OpCounter()
            run_sma(db.query, db, lat, plan_sma(db.query, lat, sma_n(db)), counter)
            Ns.append(M**3)
            ops.append(counter.total)
        s = slope(Ns, ops)
        c.detail = f"100/100 match the oracle; op slope {s:.3f} at N = 2^9, 2^12"
        assert s <= 1.45


def test_criterion_07_goodness(criterion):
    with criterion(7) as c:
        q, ids = catalog.non_tree()
        lat = build_lattice(q)
        init = [ids[k] for k in "XYZU"]

        def proof(steps, d):
            return from_element_steps(lat, init, [(ids[a], ids[b]) for a, b in steps], d)

        bad = proof([("X", "Y"), ("A", "Z"), ("B", "U"), ("C", "D")], 2)
        good = proof([("X", "Z"), ("Y", "U"), ("C", "D")], 2)
        assert bad.is_valid(lat) and not check_goodness(lat, bad).good
        assert good.is_valid(lat) and check_goodness(lat, good).good

        q, ids = catalog.bad_sm_proof()
        lat = build_lattice(q)
        init = [ids[k] for k in "XYZW"]
        p = proof([("X", "Y"), ("Z", "W"), ("A", "D"), ("B", "C")], 2)
        assert p.is_valid(lat) and not check_goodness(lat, p).good

        lat = build_lattice(catalog.bad_for_chain())
        e = lat.element
        p = from_element_steps(lat, lat.relation_elements(),
                               [(e("abc"), e("ade")), (e("bdf"), e("cef")), (e("a"), e("f"))])
        assert p.is_valid(lat) and check_goodness(lat, p).good
        c.detail = "non-tree bad/good, bad-sm-proof bad, bad-for-chain good"


def test_criterion_08_no_sm_proof(criterion):
    with criterion(8) as c:
        lat = build_lattice(catalog.no_smp())
        res = find_sm_proof(lat, lat.relation_elements(), 2, mode="search")
        c.detail = f"search status {res.status} after {res.nodes} states"
        assert res.status == "nonexistent"


def test_criterion_09_csma(criterion):
    with criterion(9) as c:
        q = catalog.no_smp()
        lat = build_lattice(q)
        tables = catalog.no_smp_tables(4, 2)
        rng = random.Random(9)
        restarts = 0
        for i in range(50):
            db = catalog.no_smp_instance(rng, max_n=64, tables=tables)
            truth = brute_force_join(q, db)
            run = run_csma(q, db, lat, check=True)
            assert run.output == truth, f"instance {i}"
            assert run.leaves <= run.ell ** run.sequence.cd_count, f"instance {i}"
            restarts += run.restarts
        c.detail = f"50/50 match the oracle, invariants held, leaves within l^#CD, {restarts} restarts"


def test_criterion_10_degree_bound(criterion):
    with criterion(10) as c:
        N = 2**10
        n = log2_up(N)
        for d in (2, 4, N):
            q = Query(("x", "y", "z"), (RelationSpec("R", ("x", "y")), RelationSpec("S", ("y", "z")),
                                        RelationSpec("T", ("z", "x"))), (),
                      (DegreeBound(("x", "y"), ("x",), d, "R"),))
            lat = build_lattice(q)
            pairs = query_pairs(lat, {"R": n, "S": n, "T": n}, [log2_up(d)])
            assert solve_cllp(lat, pairs).opt == min(F(3, 2) * n, n + log2_up(d))
        c.detail = "CLLP = min(3/2 n, n + log d) for d = 2, 4, N"


def test_criterion_11_numerical_hygiene(criterion):
    with criterion(11) as c:
        rng = random.Random(11)
        fixed = [build_lattice(f()) for f in (catalog.triangle, catalog.fd_path, catalog.m3, catalog.bad_for_chain)]
        solves = 0
        while solves < 1000:
            if rng.random() < 0.5:
                lat = rng.choice(fixed)
            else:
                lat = build_lattice(catalog.random_distributive(rng, k=rng.randint(2, 5)))
            rels = lat.relation_elements()
            n = [F(rng.randint(1, 40), rng.randint(1, 4)) for _ in rels]
            res = solve_llp(lat, rels, n)
            solves += 1
            assert sum(res.cert.w.get(j, 0) * n[j] for j in range(len(rels))) == res.opt
            assert is_dual_feasible(lat, res.cert, rels)
            h = res.h
            assert mobius_invert(lat, mobius_apply(lat, h)) == h
            assert mobius_apply(lat, mobius_invert(lat, h)) == h
            lowered = list(h)
            lowered[lat.hat1] = max(F(0), h[lat.hat1] - rng.randint(0, 5))
            if is_submodular(lat, lowered):
                assert is_polymatroid(lat, lovasz_monotonize(lat, lowered))
        c.detail = f"{solves} LLP solves with primal = dual; Mobius round-trips; monotonized polymatroids"
