import json
import subprocess
import sys

import pytest

from blogmh.cli import main

from conftest import DATA, PKG_DATA

TINY = str(PKG_DATA / "tiny.blog")
TINY_BOUNDS = str(PKG_DATA / "tiny.bounds")


@pytest.fixture
def tiny_evidence(tmp_path):
    p = tmp_path / "tiny.evidence"
    p.write_text("Obs(C1) = true\nquery hot : Hot(PubCited(C1))\n")
    return str(p)


def test_oracle_prints_a_float(capsys, tiny_evidence):
    assert main(["oracle", "--model", TINY, "--bounds", TINY_BOUNDS, "--evidence", tiny_evidence]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(21 / 22, abs=1e-15)


def test_oracle_inline_query_and_json(capsys, tiny_evidence):
    assert main(["oracle", "--model", TINY, "--bounds", TINY_BOUNDS, "--evidence", tiny_evidence,
                 "--query", "Obs(C1)", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["hot"] == pytest.approx(21 / 22) and out["q2"] == 1.0


def test_infer_report(tmp_path, tiny_evidence):
    out = tmp_path / "r.json"
    assert main(["infer", "--model", TINY, "--evidence", tiny_evidence, "--samples", "2000",
                 "--chains", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["report_version"] == 1 and len(rep["chains"]) == 2
    assert [c["seed"] for c in rep["chains"]] == [0, 1]
    assert 0.8 < rep["estimates"]["hot"] <= 1.0


def test_citebench_synthetic(tmp_path):
    out, ds = tmp_path / "r.json", tmp_path / "d.tsv"
    assert main(["citebench", "--synthetic", "10", "--samples", "200", "--out", str(out),
                 "--write-dataset", str(ds)]) == 0
    assert json.loads(out.read_text())["n_citations"] == 10
    assert main(["citebench", "--dataset", str(ds), "--samples", "100", "--out", str(out)]) == 0


@pytest.mark.parametrize("argv,fragment", [
    (["infer", "--model", "missing.blog"], "model file not found: missing.blog"),
    (["oracle", "--model", TINY, "--bounds", "nope.bounds"], "bounds file not found: nope.bounds"),
    (["infer", "--model", TINY, "--evidence", "gone.ev"], "evidence file not found: gone.ev"),
    (["citebench", "--dataset", "x.tsv"], "dataset file not found: x.tsv"),
    (["citebench"], "exactly one of --dataset"),
    (["infer", "--model", TINY, "--samples", "0"], "--samples must be positive"),
    (["oracle", "--model", TINY, "--bounds", TINY_BOUNDS], "no query"),
])
def test_usage_errors_exit_2(capsys, argv, fragment):
    assert main(argv) == 2
    assert fragment in capsys.readouterr().err


def test_argparse_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["infer", "--proposer", "gibbs", "--model", TINY]) == 2


def test_malformed_model_is_a_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.blog"
    bad.write_text("type Pub\n")
    assert main(["infer", "--model", str(bad)]) == 2
    assert "bad.blog" in capsys.readouterr().err


def test_contract_violation_exits_1(tmp_path, capsys):
    # the oracle cannot enumerate an unbounded number variable
    model = tmp_path / "m.blog"
    model.write_text("type Pub;\ntype Cit;\nguaranteed Cit C1;\n#Pub ~ Poisson(2);\n"
                     "random Boolean H(Pub p) ~ Bernoulli(0.5);\n"
                     "random Pub PubCited(Cit c) ~ UniformOverObjects(Pub);\n")
    bounds = tmp_path / "b.bounds"
    bounds.write_text("// nothing bounded\n")
    assert main(["oracle", "--model", str(model), "--bounds", str(bounds), "--query", "H(PubCited(C1))"]) == 1
    assert "needs a bound" in capsys.readouterr().err


def test_selftest_and_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "blogmh", "selftest"], capture_output=True, text=True)
    assert r.returncode == 0, r.stdout + r.stderr
    assert r.stdout.count("PASS") == 4
