from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from cryptorisk import pipeline
from cryptorisk.adapters import merge_and_dedup, parse_report
from cryptorisk.appir import ProgramBuilder, dump_program, load_program
from cryptorisk.cli import EXIT_INPUT, EXIT_INVARIANT, main
from cryptorisk.detector import detect
from cryptorisk.errors import InvariantViolation
from cryptorisk.misuse import read_jsonl

FIXTURES = Path(__file__).parent / "fixtures"
P = "com.example.SecureSender.encrypt(java.lang.String)"
GET = "javax.crypto.Cipher.getInstance(java.lang.String)"


@pytest.fixture
def progs(tmp_path):
    d = tmp_path / "programs"
    d.mkdir()
    shutil.copy(FIXTURES / "motivating.json", d / "motivating.json")
    return d


def _plain_app(path: Path):
    pb = ProgramBuilder("plain")
    mb = pb.add_class("p.Main").method("run", [("s", "java.lang.String")])
    mb.call("n", "java.lang.String.length()", receiver="s", type="int").ret()
    path.write_text(dump_program(pb.build()))


def test_detect_builtin_only(progs, tmp_path):
    out = tmp_path / "det"
    assert main(["detect", str(progs / "motivating.json"), "-o", str(out)]) == 0
    tuples = read_jsonl(out / "motivating.tuples.jsonl")
    assert tuples == detect(load_program(progs / "motivating.json"))
    meta = json.loads((out / "motivating.detect.json").read_text())
    assert meta["detectors"] == ["BI"] and meta["program"] == "motivating.json"


def test_detect_merges_reports(progs, tmp_path):
    reports = tmp_path / "reports"
    reports.mkdir()
    cg = {"detector": "CG", "app_id": "motivating", "findings": [{"err": "vul.11", "m": GET, "p": P, "loc": {"method": P, "stmt": 7}}]}
    cc = {"detector": "CC", "findings": [{"err": "ConstraintError", "m": GET, "p": P, "d": "selects ECB mode"}, {"err": "Nope", "m": GET, "p": P}]}
    (reports / "x.CG.json").write_text(json.dumps(cg))
    (reports / "motivating.CC.json").write_text(json.dumps(cc))
    out = tmp_path / "det"
    assert main(["detect", str(progs), "--reports", str(reports), "-o", str(out)]) == 0
    got = read_jsonl(out / "motivating.tuples.jsonl")

    program = load_program(progs / "motivating.json")
    by_stage = merge_and_dedup(
        detect(program) + parse_report("CG", cg, program=program).tuples + parse_report("CC", cc, program=program).tuples
    )
    assert got == by_stage
    ecb = [t for t in got if t.id == 12]
    assert len(ecb) == 1 and ecb[0].reporters == {"BI", "CG", "CC"}
    meta = json.loads((out / "motivating.detect.json").read_text())
    assert meta["detectors"] == ["BI", "CC", "CG"] and meta["counts"]["unmapped"] == 1


def test_missing_directory(tmp_path, capsys):
    assert main(["detect", str(tmp_path / "nope"), "-o", str(tmp_path / "o")]) == EXIT_INPUT
    assert "no such file or directory" in capsys.readouterr().err


def test_parse_errors_listed_per_file(progs, tmp_path, capsys):
    (progs / "broken.json").write_text('{"ceir_version": "7"}')
    (progs / "junk.json").write_text("not json")
    assert main(["detect", str(progs), "-o", str(tmp_path / "o")]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "broken.json" in err and "junk.json" in err
    assert not (tmp_path / "o").exists()


def test_assess_motivating_and_chain_echo(progs, tmp_path):
    _plain_app(progs / "plain.json")
    det, risk = tmp_path / "det", tmp_path / "risk"
    assert main(["detect", str(progs), "-o", str(det)]) == 0
    assert main(["assess", str(progs), str(det), "-o", str(risk)]) == 0
    rep = json.loads((risk / "motivating.risk.json").read_text())
    flows12 = {e["category"] for e in rep["n"] if e["id"] == 12}
    assert flows12 == {"NETWORK", "FILE"}
    assert rep["R_x"] == "105" and rep["chain"] == ["CG", "CC", "BI"] and rep["vote_chain"] == ["BI"]
    plain = json.loads((risk / "plain.risk.json").read_text())
    assert plain["R_x"] == "0"
    assert (risk / "risk.csv").read_text().count("\n") == 3
    flows = (risk / "motivating.flows.jsonl").read_text().splitlines()
    assert {json.loads(l)["category"] for l in flows} == {"NETWORK", "FILE"}

    risk2 = tmp_path / "risk2"
    argv = ["assess", str(progs), str(det), "-o", str(risk2), "--chain", "CG,CC", "--vote-chain", "CG,CC,BI"]
    assert main(argv) == 0
    rep2 = json.loads((risk2 / "motivating.risk.json").read_text())
    assert rep2["chain"] == ["CG", "CC"] and rep2["vote_chain"] == ["CG", "CC", "BI"]
    # only BI reported: 1 of 3 able detectors, so nothing counts
    assert rep2["R_x"] == "0"


def test_assess_input_errors(progs, tmp_path):
    assert main(["assess", str(progs), str(tmp_path / "missing"), "-o", str(tmp_path / "r")]) == EXIT_INPUT
    assert main(["assess", str(progs), str(progs), "-o", str(tmp_path / "r"), "--chain", "XX"]) == EXIT_INPUT
    det = tmp_path / "det"
    main(["detect", str(progs), "-o", str(det)])
    argv = ["assess", str(progs), str(det), "-o", str(tmp_path / "r"), "--vote-chain", "CG", "--require-valid-chain"]
    assert main(argv) == EXIT_INPUT


@pytest.fixture(scope="module")
def corpus_risk(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["synth", str(root / "c"), "--apps", "20", "--seed", "11"]) == 0
    assert main(["detect", str(root / "c/programs"), "--reports", str(root / "c/reports"), "-o", str(root / "det")]) == 0
    assert main(["assess", str(root / "c/programs"), str(root / "det"), "-o", str(root / "risk")]) == 0
    return root / "risk"


def test_fleet_cluster_outputs(corpus_risk, tmp_path):
    out = tmp_path / "fleet"
    assert main(["fleet", "cluster", str(corpus_risk), "-o", str(out), "--k", "2", "--k-range", "2-4"]) == 0
    summary = json.loads((out / "summaries.json").read_text())
    assert summary["k"] == 2 and len(summary["clusters"]) == 2
    assert sum(c["size"] for c in summary["clusters"]) == 20
    assert (out / "clusters.csv").read_text().count("\n") == 21
    assert (out / "dbi_by_k.csv").read_text().splitlines()[0].startswith("k,dbi")
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    out2 = tmp_path / "fleet2"
    main(["fleet", "cluster", str(corpus_risk), "-o", str(out2), "--k", "2", "--k-range", "2-4"])
    assert first == {p.name: p.read_bytes() for p in out2.iterdir()}


def test_fleet_too_few_reports(corpus_risk, tmp_path, capsys):
    assert main(["fleet", "cluster", str(corpus_risk), "-o", str(tmp_path), "--k", "21"]) == EXIT_INPUT
    assert "k=21" in capsys.readouterr().err


def test_fleet_mine_and_report(corpus_risk, tmp_path, capsys):
    assert main(["fleet", "mine", str(corpus_risk), "-o", str(tmp_path), "--min-support-apps", "1", "--min-conf", "0.3"]) == 0
    header = (tmp_path / "rules.csv").read_text().splitlines()[0]
    assert header == "antecedent,antecedent_apps,consequent,joint_apps,confidence"
    capsys.readouterr()
    assert main(["report", str(corpus_risk)]) == 0
    assert "20 app(s)" in capsys.readouterr().out


def test_check_chain(capsys):
    assert main(["check-chain", "CG,CC"]) == 0
    assert main(["check-chain", "CG"]) == EXIT_INPUT
    assert "MissingIds({8,18,19,20,21})" in capsys.readouterr().out


def test_invariant_violation_exit_code(monkeypatch, progs, tmp_path):
    def boom(*a, **k):
        raise InvariantViolation("stored R_x does not match")

    monkeypatch.setattr(pipeline, "run_detect", boom)
    assert main(["detect", str(progs), "-o", str(tmp_path)]) == EXIT_INVARIANT


def test_usage_error_is_input_error():
    assert main(["fleet", "cluster"]) == EXIT_INPUT


def test_parallel_matches_serial(progs, tmp_path):
    _plain_app(progs / "plain.json")
    main(["detect", str(progs), "-o", str(tmp_path / "d1")])
    main(["detect", str(progs), "-o", str(tmp_path / "d2"), "--jobs", "2"])
    for f in (tmp_path / "d1").iterdir():
        assert f.read_bytes() == (tmp_path / "d2" / f.name).read_bytes()
