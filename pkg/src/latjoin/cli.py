"""Command-line front end: analyze | bound | plan | run | gen | verify."""
from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import catalog
from .bounds import (LOG_DENOMINATOR, CPair, UnboundedError, build_cllp, build_llp, log2_up, query_pairs, solve_cllp,
                     solve_llp)
from .chain import Chain, ChainError, run_chain, select_chain
from .csma import CsmError, build_csm_sequence, default_theta, initial_entries, run_csma
from .lattice import (FD, DegreeBound, Lattice, NotNormalError, Query, QueryError, RelationSpec, build_lattice)
from .lp import LE, LinearProgram, solve_exact
from .normality import coatomic_hypergraph, fractional_edge_cover, is_normal_lattice, materialize_normal, normal_optimum
from .relational import (ORACLE_BUDGET, Database, LoadError, OpCounter, OracleOverflow, UdfRegistry,
                         UnexpandableError, brute_force_join, gen_product, read_tsv, write_tsv)
from .sma import (SEARCH_BUDGET, ProofError, SmaPlan, SmProof, check_goodness, plan_sma, run_sma, sm_bound, sma_n)

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def q(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def unq(s) -> Fraction:
    return Fraction(s) if isinstance(s, (int, str)) else Fraction(str(s))


# spec loading ---------------------------------------------------------------

_CATALOG = {
    "triangle": catalog.triangle,
    "fd-path": catalog.fd_path,
    "m3": catalog.m3,
    "maximal-no-good": catalog.maximal_no_good,
    "simple-chain": catalog.simple_chain,
    "bad-for-chain": catalog.bad_for_chain,
    "no-smp": catalog.no_smp,
    "non-tree": lambda: catalog.non_tree()[0],
    "bad-sm-proof": lambda: catalog.bad_sm_proof()[0],
}


class Spec:
    def __init__(self, query: Query, base_dir: Path, udfs: UdfRegistry, name: str):
        self.query, self.base_dir, self.udfs, self.name = query, base_dir, udfs, name


def _strs(v, where) -> tuple[str, ...]:
    if isinstance(v, str):
        return tuple(v)
    if isinstance(v, list) and all(isinstance(a, str) for a in v):
        return tuple(v)
    raise CliError(f"{where}: expected a list of attribute names", EXIT_VALIDATION)


def _keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise CliError(f"{where}: expected an object", EXIT_VALIDATION)
    extra = set(obj) - set(allowed)
    if extra:
        raise CliError(f"{where}: unknown keys {sorted(extra)}", EXIT_VALIDATION)
    missing = [k for k in required if k not in obj]
    if missing:
        raise CliError(f"{where}: missing keys {missing}", EXIT_VALIDATION)


def parse_spec(doc: dict) -> Query:
    _keys(doc, ["vars", "relations", "fds", "degree_bounds"], ["vars", "relations"], "spec")
    vs = _strs(doc["vars"], "vars")
    rels = []
    for i, r in enumerate(doc["relations"]):
        w = f"relations[{i}]"
        _keys(r, ["name", "attrs", "file", "cardinality"], ["name", "attrs"], w)
        card = r.get("cardinality")
        if card is not None and not isinstance(card, int):
            raise CliError(f"{w}.cardinality: expected an integer", EXIT_VALIDATION)
        rels.append(RelationSpec(str(r["name"]), _strs(r["attrs"], f"{w}.attrs"), card, r.get("file")))
    fds = []
    for i, f in enumerate(doc.get("fds", [])):
        w = f"fds[{i}]"
        _keys(f, ["lhs", "rhs", "guard", "udf", "abstract"], ["lhs", "rhs"], w)
        if f.get("guard") is None and f.get("udf") is None and not f.get("abstract"):
            raise CliError(f"{w}: needs a guard, a udf, or \"abstract\": true", EXIT_VALIDATION)
        fds.append(FD(_strs(f["lhs"], f"{w}.lhs"), _strs(f["rhs"], f"{w}.rhs"), f.get("guard"), f.get("udf")))
    dbs = []
    for i, b in enumerate(doc.get("degree_bounds", [])):
        w = f"degree_bounds[{i}]"
        _keys(b, ["of", "given", "bound", "guard"], ["of", "given", "bound"], w)
        if not isinstance(b["bound"], int):
            raise CliError(f"{w}.bound: expected an integer", EXIT_VALIDATION)
        dbs.append(DegreeBound(_strs(b["of"], f"{w}.of"), _strs(b["given"], f"{w}.given"), b["bound"], b.get("guard")))
    try:
        return Query(vs, tuple(rels), tuple(fds), tuple(dbs))
    except QueryError as e:
        raise CliError(str(e), EXIT_VALIDATION) from None


def spec_to_json(query: Query) -> dict:
    doc = {"vars": list(query.vars),
           "relations": [{k: v for k, v in (("name", r.name), ("attrs", list(r.attrs)), ("file", r.file),
                                            ("cardinality", r.cardinality)) if v is not None}
                         for r in query.relations]}
    fds = []
    for f in query.fds:
        d = {"lhs": list(f.lhs), "rhs": list(f.rhs)}
        if f.guard:
            d["guard"] = f.guard
        if f.udf:
            d["udf"] = f.udf
        if not f.guard and not f.udf:
            d["abstract"] = True
        fds.append(d)
    if fds:
        doc["fds"] = fds
    if query.degree_bounds:
        doc["degree_bounds"] = [{k: v for k, v in (("of", list(b.of)), ("given", list(b.given)), ("bound", b.bound),
                                                   ("guard", b.guard)) if v is not None} for b in query.degree_bounds]
    return doc


def load_spec(ref: str) -> Spec:
    """A JSON spec file, or ``catalog:NAME[:N]`` for a bundled query."""
    if ref.startswith("catalog:"):
        parts = ref.split(":")
        name = parts[1]
        if name not in _CATALOG:
            raise CliError(f"unknown catalog query {name!r}; choose from {sorted(_CATALOG)}", EXIT_VALIDATION)
        args = [int(a) for a in parts[2:]]
        query = _CATALOG[name](*args)
        udfs = UdfRegistry()
        if name == "bad-for-chain":
            udfs = catalog.bad_for_chain_udfs()
        elif name == "no-smp":
            udfs = catalog.no_smp_tables(4, 2)
        return Spec(query, Path("."), udfs, ref)
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{ref}: {e.strerror}", EXIT_VALIDATION) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(f"{ref}:{e.lineno}:{e.colno}: {e.msg}", EXIT_VALIDATION) from None
    try:
        query = parse_spec(doc)
    except CliError as e:
        raise CliError(f"{ref}: {e}", e.code) from None
    return Spec(query, path.parent, UdfRegistry(base_dir=path.parent), str(path))


def load_data(spec: Spec, data_dir: str | None) -> Database:
    rels = {}
    for r in spec.query.relations:
        if data_dir is not None:
            path = Path(data_dir) / f"{r.name}.tsv"
        elif r.file:
            path = spec.base_dir / r.file
        else:
            raise CliError(f"relation {r.name}: no file in the query file and no --data directory", EXIT_VALIDATION)
        if not path.exists():
            raise CliError(f"relation {r.name}: {path} not found", EXIT_VALIDATION)
        rel = read_tsv(path)
        if set(rel.schema) != set(r.attrs) or len(rel.schema) != len(r.attrs):
            raise CliError(f"{path}: header {list(rel.schema)} does not match attrs {list(r.attrs)}", EXIT_VALIDATION)
        rels[r.name] = rel
    return Database(spec.query, rels, spec.udfs)


# shared helpers ---------------------------------------------------------------

def _budget(args, default: int) -> int:
    env = os.environ.get("LATJOIN_BUDGET")
    if env:
        return int(env)
    return args.budget if args.budget is not None else default


def _log_n(spec: Spec, db: Database | None, den: int) -> tuple[list[Fraction], str]:
    """Per-relation log sizes: from data, else declared cardinalities, else symbolic n = 1."""
    rels = spec.query.relations
    if db is not None:
        return [log2_up(max(len(db[r.name]), 1), den) for r in rels], "numeric"
    if all(r.cardinality for r in rels):
        return [log2_up(r.cardinality, den) for r in rels], "numeric"
    return [Fraction(1)] * len(rels), "symbolic"


def _elements(lat: Lattice, query: Query) -> list[int]:
    return [lat.element(r.attrs) for r in query.relations]


def _labels(lat: Lattice, xs) -> list[str]:
    return [lat.label(x) for x in xs]


def _h_json(lat: Lattice, h) -> dict:
    return {lat.label(x): q(h[x]) for x in lat}


def _bound_value(v) -> str:
    return "inf" if v is None else q(v)


# subcommands -----------------------------------------------------------------

def cmd_analyze(args) -> dict:
    spec = load_spec(args.spec)
    lat = build_lattice(spec.query)
    rels = _elements(lat, spec.query)
    names = [r.name for r in spec.query.relations]
    n, mode = _log_n(spec, None, args.log_denominator)
    hg = coatomic_hypergraph(lat, rels, names)
    cover = fractional_edge_cover(hg, n)
    rep = {
        "lattice": {"elements": len(lat), "vars": list(spec.query.vars), "coatoms": _labels(lat, lat.coatoms),
                    "distributive": lat.is_distributive(), "redundant_vars": lat.redundant_vars()},
        "hypergraph": {"vertices": _labels(lat, hg.vertices),
                       "edges": {nm: sorted(_labels(lat, e)) for nm, e in zip(names, hg.edges)}},
        "rho_star": _bound_value(cover.value),
        "mode": mode,
    }
    if not cover.finite:
        rep["normal"] = None
        return rep
    norm = is_normal_lattice(lat, rels)
    rep["normal"] = norm.normal
    rep["cover_vertices"] = [[q(x) for x in w] for w in norm.vertices]
    if norm.normal:
        h = normal_optimum(lat, rels, n)
        rep["decomposition"] = {"h": _h_json(lat, h)}
    else:
        rep["witness"] = {"w": [q(x) for x in norm.witness_w],
                          "h": _h_json(lat, norm.witness_h) if norm.witness_h else None}
    return rep


def cmd_bound(args) -> dict:
    spec = load_spec(args.spec)
    lat = build_lattice(spec.query)
    rels = _elements(lat, spec.query)
    db = load_data(spec, args.data) if args.data else None
    n, mode = _log_n(spec, db, args.log_denominator)
    rep: dict = {"mode": mode, "n": {r.name: q(v) for r, v in zip(spec.query.relations, n)}}
    if args.lp_dump:
        Path(args.lp_dump).write_text(build_llp(lat, rels, n).to_lp_format(), encoding="utf-8")
    try:
        glvv = solve_llp(lat, rels, n).opt
    except UnboundedError:
        rep.update(glvv="inf", chain="inf", sm="inf")
        return rep
    rep["glvv"] = q(glvv)
    try:
        ch, res = select_chain(lat, rels, n, args.chain_mode)
        rep["chain"] = _bound_value(res.value)
        rep["chain_plan"] = {"mode": args.chain_mode, "chain": ch.labels(lat), "weights": [q(w) for w in res.weights]}
    except ChainError as e:
        rep["chain"], rep["chain_error"] = None, str(e)
    sm = sm_bound(lat, rels, n, budget=_budget(args, SEARCH_BUDGET))
    rep["sm"] = None if sm.value is None else q(sm.value)
    rep["sm_tried"] = [{"w": [q(x) for x in w], "status": st} for w, st in sm.tried]
    rep["gaps"] = {k: q(unq(rep[k]) - glvv) for k in ("chain", "sm") if rep.get(k) not in (None, "inf")}
    if spec.query.degree_bounds and mode == "numeric":
        logs = [log2_up(b.bound, args.log_denominator) for b in spec.query.degree_bounds]
        pairs = query_pairs(lat, {r.name: v for r, v in zip(spec.query.relations, n)}, logs)
        if args.lp_dump:
            Path(args.lp_dump).write_text(build_cllp(lat, pairs).to_lp_format(), encoding="utf-8")
        try:
            rep["cllp"] = q(solve_cllp(lat, pairs).opt)
        except UnboundedError:
            rep["cllp"] = "inf"
    if mode == "numeric":
        rep["numeric"] = {k: 2 ** float(unq(rep[k])) for k in ("glvv", "chain", "sm", "cllp")
                          if rep.get(k) not in (None, "inf")}
    return rep


def _plan_chain(lat, spec, n, mode) -> dict:
    rels = _elements(lat, spec.query)
    ch, res = select_chain(lat, rels, n, mode)
    return {"algo": "chain", "mode": mode, "chain": ch.labels(lat), "weights": [q(w) for w in res.weights],
            "bound": _bound_value(res.value)}


def _plan_sma(lat, spec, n, budget) -> dict:
    plan = plan_sma(spec.query, lat, n, budget)
    trace = check_goodness(lat, plan.proof)
    names = [r.name for r in spec.query.relations]
    return {"algo": "sma", "multiset": _labels(lat, plan.proof.initial), "sources": [names[j] for j in plan.sources],
            "d": plan.proof.d, "steps": [list(s) for s in plan.proof.steps], "w": [q(x) for x in plan.w],
            "n": [q(x) for x in plan.n], "h": _h_json(lat, plan.h),
            "labels": [sorted(s) for s in trace.labels]}


def _plan_csma(lat, spec, db, theta, den) -> dict:
    entries = initial_entries(spec.query, db, lat, denominator=den)
    pairs = [CPair(x, y, e.n) for (x, y), e in entries.items()]
    res = solve_cllp(lat, pairs)
    seq = build_csm_sequence(lat, res.cert)
    N = max(len(db[r.name]) for r in spec.query.relations)
    ell = max(2, 2 * math.ceil(math.log2(N + 1)))
    th = Fraction(theta) if theta is not None else default_theta(lat, seq.D, ell)
    lab = lat.label
    return {"algo": "csma", "opt": q(res.opt),
            "pairs": [{"x": lab(p.x), "y": lab(p.y), "n": q(p.n)} for p in pairs],
            "cert": {"c": [{"x": lab(x), "y": lab(y), "v": q(v)} for (x, y), v in sorted(res.cert.c.items())],
                     "s": [{"a": lab(a), "b": lab(b), "v": q(v)} for (a, b), v in sorted(res.cert.s.items())],
                     "m": [{"x": lab(x), "y": lab(y), "v": q(v)} for (x, y), v in sorted(res.cert.m.items())]},
            "sequence": [{"kind": r.kind, "a": lab(r.a), "b": lab(r.b), "t": r.t, "text": r.show(lat)}
                         for r in seq.rules],
            "theta": q(th), "ell": ell, "D": seq.D}


def cmd_plan(args) -> dict:
    spec = load_spec(args.spec)
    lat = build_lattice(spec.query)
    db = load_data(spec, args.data) if args.data else None
    n, _ = _log_n(spec, db, args.log_denominator)
    if args.algo == "chain":
        return _plan_chain(lat, spec, n, args.chain_mode)
    if args.algo == "sma":
        return _plan_sma(lat, spec, n, _budget(args, SEARCH_BUDGET))
    if args.algo == "csma":
        if db is None:
            raise CliError("plan --algo csma needs --data (guards fix the log bounds)", EXIT_VALIDATION)
        return _plan_csma(lat, spec, db, args.theta, args.log_denominator)
    raise CliError(f"no plan for --algo {args.algo}", EXIT_VALIDATION)


def _read_plan(path: str, algo: str) -> dict:
    try:
        plan = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"{path}: {e}", EXIT_VALIDATION) from None
    if plan.get("algo") != algo:
        raise CliError(f"plan is for {plan.get('algo')!r}, not {algo!r}", EXIT_VALIDATION)
    return plan


def _by_label(lat: Lattice) -> dict[str, int]:
    return {lat.label(x): x for x in lat}


def cmd_run(args) -> dict:
    spec = load_spec(args.spec)
    lat = build_lattice(spec.query)
    db = load_data(spec, args.data)
    query = spec.query
    counter = OpCounter()
    rep: dict = {"algo": args.algo}
    t0 = time.perf_counter()
    if args.algo == "oracle":
        out = brute_force_join(query, db, _budget(args, ORACLE_BUDGET), counter)
    elif args.algo == "chain":
        if args.plan:
            p = _read_plan(args.plan, "chain")
            lab = _by_label(lat)
            ch = Chain(tuple(lab[x] for x in p["chain"]))
        else:
            ch, _ = select_chain(lat, _elements(lat, query), sma_n(db, args.log_denominator), args.chain_mode)
        rep["chain"] = ch.labels(lat)
        run = run_chain(query, db, lat, ch, counter)
        out = run.output
        rep["level_sizes"] = run.level_sizes
    elif args.algo == "sma":
        if args.plan:
            p = _read_plan(args.plan, "sma")
            lab = _by_label(lat)
            names = [r.name for r in query.relations]
            proof = SmProof([lab[x] for x in p["multiset"]], [tuple(s) for s in p["steps"]], int(p["d"]))
            h = [unq(p["h"][lat.label(x)]) for x in lat]
            plan = SmaPlan(h, tuple(unq(x) for x in p["w"]), proof, [names.index(s) for s in p["sources"]],
                           [unq(x) for x in p["n"]])
        else:
            plan = plan_sma(query, lat, sma_n(db, args.log_denominator), _budget(args, SEARCH_BUDGET))
        run = run_sma(query, db, lat, plan, counter)
        out = run.output
        rep["table_sizes"] = run.sizes
    elif args.algo == "csma":
        theta = args.theta
        if args.plan:
            p = _read_plan(args.plan, "csma")
            theta = theta if theta is not None else unq(p["theta"])
        run = run_csma(query, db, lat, theta=None if theta is None else Fraction(theta), counter=counter,
                       trace=args.trace, denominator=args.log_denominator)
        out = run.output
        rep.update(leaves=run.leaves, restarts=run.restarts, D=run.sequence.D, ell=run.ell, theta=q(run.theta))
        if args.trace:
            rep["trace"] = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in ev.items()} for ev in run.trace]
    else:
        raise CliError(f"unknown algorithm {args.algo}", EXIT_VALIDATION)
    elapsed = time.perf_counter() - t0
    rep["output_size"] = len(out)
    rep["operations"] = {"probes": counter.probes, "emitted": counter.emitted, "total": counter.total}
    if args.timing:
        rep["wall_time"] = round(elapsed, 6)
    if args.out:
        write_tsv(out.reorder(query.vars), args.out)
    if args.verify:
        truth = brute_force_join(query, db, _budget(args, ORACLE_BUDGET))
        same = out.reorder(query.vars) == truth
        rep["verified"] = same
        if not same:
            rep["missing"] = len(truth.rows - out.reorder(query.vars).rows)
            rep["extra"] = len(out.reorder(query.vars).rows - truth.rows)
            raise _Mismatch(rep)
    return rep


class _Mismatch(Exception):
    def __init__(self, report):
        super().__init__("output differs from the oracle")
        self.report = report


def _agm_worst(query: Query, lat: Lattice, N: int) -> Database:
    """Product instance with domain 2^(v_x log N) from an optimal fractional vertex packing."""
    if query.fds:
        raise CliError("agm-worst needs a query without functional dependencies", EXIT_INFEASIBLE)
    lp = LinearProgram("max")
    for v in query.vars:
        lp.var(f"v[{v}]")
    for r in query.relations:
        lp.add({f"v[{a}]": 1 for a in r.attrs}, LE, 1, f"card[{r.name}]")
    lp.set_objective({f"v[{v}]": 1 for v in query.vars})
    sol = solve_exact(lp)
    if sol.status == "unbounded":
        raise CliError("some variable is in no relation", EXIT_INFEASIBLE)
    lg = math.log2(N)
    sizes = {v: max(1, int(math.floor(2 ** (float(sol.primal[f"v[{v}]"]) * lg) + 1e-9))) for v in query.vars}
    return gen_product(query, sizes)


def cmd_gen(args) -> dict:
    spec = load_spec(args.spec)
    query = spec.query
    lat = build_lattice(query)
    N = args.size
    kind = args.kind
    if kind == "product":
        db = gen_product(query, {v: N for v in query.vars})
    elif kind == "agm-worst":
        db = _agm_worst(query, lat, N)
    elif kind == "m3":
        if [r.attrs for r in query.relations] != [("x",), ("y",), ("z",)]:
            raise CliError("m3 instances need the R(x), S(y), T(z) query", EXIT_VALIDATION)
        db = Database(query, catalog.m3_instance(N).relations, spec.udfs)
    elif kind == "quasi":
        if N < 1 or N & (N - 1):
            raise CliError("quasi-product sizes must be powers of two", EXIT_VALIDATION)
        rels = _elements(lat, query)
        if not is_normal_lattice(lat, rels).normal:
            raise CliError("lattice is not normal: no quasi-product instance meets the bound", EXIT_INFEASIBLE)
        h = normal_optimum(lat, rels, [Fraction(N.bit_length() - 1)] * len(rels))
        db = materialize_normal(lat, h, spec.udfs).db
    elif kind == "instance":
        rng = random.Random(args.seed)
        name = spec.name.split(":")[1] if spec.name.startswith("catalog:") else None
        if name == "fd-path":
            db = catalog.fd_path_adversarial(N)
        elif name == "bad-for-chain":
            db = catalog.bad_for_chain_instance(N, rng, args.fill)
        elif name == "no-smp":
            db = catalog.no_smp_instance(rng, max_n=N, tables=spec.udfs)
        else:
            raise CliError("--kind instance is available for catalog:fd-path, bad-for-chain and no-smp", EXIT_VALIDATION)
    else:
        raise CliError(f"unknown kind {kind}", EXIT_VALIDATION)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for r in query.relations:
        path = out / f"{r.name}.tsv"
        write_tsv(db[r.name], path)
        files[r.name] = str(path)
    rep = {"kind": kind, "size": N, "files": files, "sizes": {r.name: len(db[r.name]) for r in query.relations}}
    if args.verify:
        rep["output_size"] = len(brute_force_join(query, db, _budget(args, ORACLE_BUDGET)))
    return rep


def cmd_verify(args) -> dict:
    spec = load_spec(args.spec)
    db = load_data(spec, args.data)
    query = spec.query
    rep: dict = {"relations": {}}
    bad = []
    for r in query.relations:
        rel = db[r.name]
        kept = db.check_fds(rel)
        viol = len(rel) - len(kept)
        rep["relations"][r.name] = {"size": len(rel),
                                    "projections": {a: len(rel.project((a,))) for a in r.attrs},
                                    "fd_violations": viol}
        if viol:
            bad.append(r.name)
    rep["ok"] = not bad
    if args.oracle:
        rep["output_size"] = len(brute_force_join(query, db, _budget(args, ORACLE_BUDGET)))
    if bad:
        raise CliError(f"functional dependencies violated in {bad}", EXIT_VALIDATION)
    return rep


# entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latjoin", description="Join bounds and algorithms over FD lattices.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("spec", help="query spec JSON file, or catalog:NAME[:N]")
    common.add_argument("--budget", type=int, default=None, help="search/oracle step budget (env LATJOIN_BUDGET wins)")
    common.add_argument("--log-denominator", type=int, default=LOG_DENOMINATOR,
                        help="denominator of the dyadic log2 upper approximations")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--chain-mode", choices=["shearer", "dual", "exhaustive"], default="shearer")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("analyze", parents=[common], help="lattice, co-atomic hypergraph and normality")

    b = sub.add_parser("bound", parents=[common], help="GLVV, chain and SM bounds")
    b.add_argument("--data", help="directory with <relation>.tsv files")
    b.add_argument("--lp-dump", help="write the LP in LP format to this file")

    pl = sub.add_parser("plan", parents=[common], help="emit an execution plan as JSON")
    pl.add_argument("--algo", choices=["chain", "sma", "csma"], required=True)
    pl.add_argument("--data")
    pl.add_argument("--theta", type=Fraction, default=None)

    r = sub.add_parser("run", parents=[common], help="evaluate the query")
    r.add_argument("--algo", choices=["chain", "sma", "csma", "oracle"], required=True)
    r.add_argument("--data")
    r.add_argument("--plan", help="plan JSON from the plan subcommand")
    r.add_argument("--verify", action="store_true", help="diff against the brute-force oracle")
    r.add_argument("--trace", action="store_true", help="include the CSMA branch trace")
    r.add_argument("--theta", type=Fraction, default=None, help="override the CSMA restart threshold")
    r.add_argument("--timing", action="store_true", help="include wall time (breaks byte-stable output)")
    r.add_argument("--out", help="write the output relation as TSV")

    g = sub.add_parser("gen", parents=[common], help="write a TSV instance")
    g.add_argument("--kind", choices=["product", "quasi", "m3", "agm-worst", "instance"], required=True)
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--fill", type=float, default=1.0)
    g.add_argument("--verify", action="store_true", help="also report the oracle output size")

    v = sub.add_parser("verify", parents=[common], help="check an instance against the query")
    v.add_argument("--data")
    v.add_argument("--oracle", action="store_true", help="also report the oracle output size")
    return p


COMMANDS = {"analyze": cmd_analyze, "bound": cmd_bound, "plan": cmd_plan, "run": cmd_run, "gen": cmd_gen,
            "verify": cmd_verify}


def _emit(obj, stream):
    stream.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _emit(COMMANDS[args.cmd](args), sys.stdout)
        return EXIT_OK
    except _Mismatch as m:
        _emit(m.report, sys.stdout)
        print(f"error: {m}", file=sys.stderr)
        return EXIT_MISMATCH
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (QueryError, LoadError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UnexpandableError, ProofError, ChainError, NotNormalError, UnboundedError, OracleOverflow,
            CsmError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
