import json

import pytest

from latjoin import catalog, cli
from latjoin.lattice import build_lattice
from latjoin.relational import Relation, write_tsv


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_q_round_trip():
    assert cli.q(3) == "3/1"
    assert cli.unq("3/2") == cli.unq(cli.q(cli.unq("3/2")))


@pytest.mark.parametrize("name, glvv, sm", [("triangle", "3/2", "3/2"), ("bad-for-chain", "4/3", "4/3"),
                                            ("fd-path", "3/2", "3/2")])
def test_bound(capsys, name, glvv, sm):
    code, rep, _ = run(capsys, "bound", f"catalog:{name}", "--chain-mode", "exhaustive")
    assert code == 0
    assert rep["glvv"] == glvv
    assert rep["sm"] == sm


def test_bound_writes_lp_dump(capsys, tmp_path):
    path = tmp_path / "llp.lp"
    code, _, _ = run(capsys, "bound", "catalog:triangle", "--lp-dump", path)
    assert code == 0
    text = path.read_text()
    assert text.startswith("Maximize") and "Subject To" in text and text.rstrip().endswith("End")


def test_analyze(capsys):
    code, rep, _ = run(capsys, "analyze", "catalog:m3")
    assert code == 0
    assert rep["normal"] is False


def test_output_is_byte_stable(capsys):
    cli.main(["bound", "catalog:fd-path"])
    first = capsys.readouterr().out
    cli.main(["bound", "catalog:fd-path"])
    assert capsys.readouterr().out == first


@pytest.mark.parametrize("spec, kind, size, algo, out_size", [
    ("catalog:triangle", "agm-worst", 16, "chain", 64),
    ("catalog:triangle", "product", 3, "sma", 27),
    ("catalog:m3", "m3", 8, "chain", 64),
    ("catalog:fd-path", "quasi", 16, "chain", 64),
    ("catalog:fd-path", "instance", 16, "chain", None),
    ("catalog:bad-for-chain", "instance", 3, "sma", None),
    ("catalog:no-smp", "instance", 24, "csma", None),
])
def test_gen_then_run_verify(capsys, tmp_path, spec, kind, size, algo, out_size):
    code, g, _ = run(capsys, "gen", spec, "--kind", kind, "--size", size, "--out", tmp_path, "--verify")
    assert code == 0
    if out_size is not None:
        assert g["output_size"] == out_size
    code, r, _ = run(capsys, "run", spec, "--algo", algo, "--data", tmp_path, "--verify")
    assert code == 0
    assert r["verified"] is True and r["output_size"] == g["output_size"]


@pytest.mark.parametrize("algo", ["chain", "sma", "csma"])
def test_plan_then_run(capsys, tmp_path, algo):
    data = tmp_path / "data"
    run(capsys, "gen", "catalog:fd-path", "--kind", "instance", "--size", 8, "--out", data)
    code, plan, _ = run(capsys, "plan", "catalog:fd-path", "--algo", algo, "--data", data)
    assert code == 0 and plan["algo"] == algo
    pfile = tmp_path / "plan.json"
    pfile.write_text(json.dumps(plan))
    code, rep, _ = run(capsys, "run", "catalog:fd-path", "--algo", algo, "--data", data, "--plan", pfile, "--verify")
    assert code == 0 and rep["verified"] is True


def test_verify_command(capsys, tmp_path):
    run(capsys, "gen", "catalog:triangle", "--kind", "product", "--size", 2, "--out", tmp_path)
    code, rep, _ = run(capsys, "verify", "catalog:triangle", "--data", tmp_path, "--oracle")
    assert code == 0 and rep["output_size"] == 8


def test_bad_json_reports_position(capsys, tmp_path):
    spec = tmp_path / "q.json"
    spec.write_text('{"vars": ["x"],\n "relations": [}\n')
    code, _, err = run(capsys, "bound", spec)
    assert code == 2
    assert f"{spec}:2:" in err


def test_unknown_key(capsys, tmp_path):
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps({"vars": ["x"], "relations": [{"name": "R", "attrs": ["x"], "size": 3}]}))
    code, _, err = run(capsys, "bound", spec)
    assert code == 2 and "relations[0]" in err and "size" in err


def test_fd_without_udf_must_be_marked_abstract(capsys, tmp_path):
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps({"vars": ["x", "y"], "relations": [{"name": "R", "attrs": ["x"]}],
                                "fds": [{"lhs": ["x"], "rhs": ["y"]}]}))
    code, _, err = run(capsys, "bound", spec)
    assert code == 2 and "abstract" in err


@pytest.fixture
def abstract_spec(tmp_path):
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps({
        "vars": ["x", "y", "z"],
        "relations": [{"name": "R", "attrs": ["x", "y"]}, {"name": "S", "attrs": ["y", "z"]}],
        "fds": [{"lhs": ["x"], "rhs": ["z"], "abstract": True}]}))
    write_tsv(Relation("xy", [(1, 2)]), tmp_path / "R.tsv")
    write_tsv(Relation("yz", [(2, 3)]), tmp_path / "S.tsv")
    return spec


def test_abstract_fd_bounds_work(capsys, abstract_spec):
    code, rep, _ = run(capsys, "bound", abstract_spec)
    assert code == 0 and rep["glvv"] == "1/1"


@pytest.mark.parametrize("algo", ["oracle", "chain"])
def test_abstract_fd_cannot_execute(capsys, abstract_spec, algo):
    code, _, err = run(capsys, "run", abstract_spec, "--algo", algo, "--data", abstract_spec.parent)
    assert code == 3 and "no guard or udf" in err


def test_non_good_sma_plan_is_rejected(capsys, tmp_path):
    q, ids = catalog.bad_sm_proof()
    lat = build_lattice(q)
    for r in q.relations:
        write_tsv(Relation(r.attrs, []), tmp_path / f"{r.name}.tsv")
    plan = {"algo": "sma", "d": 2, "multiset": [lat.label(ids[k]) for k in "XYZW"],
            "steps": [[0, 1], [2, 3], [4, 7], [6, 5]], "sources": list("XYZW"),
            "h": {lat.label(x): "1/1" for x in lat}, "w": ["1/2"] * 4, "n": ["1/1"] * 4}
    pfile = tmp_path / "plan.json"
    pfile.write_text(json.dumps(plan))
    code, _, err = run(capsys, "run", "catalog:bad-sm-proof", "--algo", "sma", "--data", tmp_path, "--plan", pfile)
    assert code == 3 and "not good" in err


def test_mismatch_exit_code(capsys, tmp_path, monkeypatch):
    run(capsys, "gen", "catalog:triangle", "--kind", "product", "--size", 2, "--out", tmp_path)
    real = cli.run_chain

    def lossy(*a, **kw):
        res = real(*a, **kw)
        res.output = Relation(res.output.schema, list(res.output.rows)[1:])
        return res

    monkeypatch.setattr(cli, "run_chain", lossy)
    code, rep, _ = run(capsys, "run", "catalog:triangle", "--algo", "chain", "--data", tmp_path, "--verify")
    assert code == 4
    assert rep["verified"] is False and rep["missing"] == 1


def test_budget_env_overrides(capsys, tmp_path, monkeypatch):
    run(capsys, "gen", "catalog:triangle", "--kind", "product", "--size", 4, "--out", tmp_path)
    monkeypatch.setenv("LATJOIN_BUDGET", "5")
    code, _, err = run(capsys, "run", "catalog:triangle", "--algo", "oracle", "--data", tmp_path, "--budget", 10**9)
    assert code == 3 and "OracleOverflow" in err


def test_unknown_catalog_query(capsys):
    code, _, err = run(capsys, "bound", "catalog:pentagon")
    assert code == 2 and "pentagon" in err


def test_missing_data_file(capsys, tmp_path):
    code, _, err = run(capsys, "run", "catalog:triangle", "--algo", "oracle", "--data", tmp_path)
    assert code == 2 and "not found" in err
