import json
import os

import pytest

from nhfa import cli


def _run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("syn") / "data"
    assert _run("synth", "--out", d, "--M", 20, "--N", "12,10", "--exclusive", 1, "--shared", 1, "--seed", 5) == 0
    return d


@pytest.fixture(scope="module")
def fit_dir(synth_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("fit") / "run"
    rc = _run("fit", "--data", synth_dir / "source1.csv", synth_dir / "source2.csv", "--out", d,
              "--iters", 8, "--thin", 4, "--seed", 2)
    assert rc == 0
    return d


def test_synth_outputs(synth_dir):
    names = sorted(os.listdir(synth_dir))
    assert names == ["source1.csv", "source2.csv", "synth.json", "truth"]
    assert json.loads((synth_dir / "synth.json").read_text())["seed"] == 5


def test_fit_outputs(fit_dir):
    assert sorted(os.listdir(fit_dir / "snapshots")) == ["snap_000003.json", "snap_000007.json"]
    lines = (fit_dir / "trace.jsonl").read_text().splitlines()
    assert len(lines) == 8 and all("wall_ms" not in json.loads(x) for x in lines)
    assert (fit_dir / "active_k.csv").read_text().startswith("iteration,active_k,log_joint\n")


def test_resume_reproduces_full_run(synth_dir, fit_dir, tmp_path):
    d = tmp_path / "run"
    data = [synth_dir / "source1.csv", synth_dir / "source2.csv"]
    assert _run("fit", "--data", *data, "--out", d, "--iters", 4, "--thin", 4, "--seed", 2) == 0
    assert _run("fit", "--data", *data, "--out", d, "--iters", 8, "--thin", 4, "--seed", 2,
                "--resume", d / "snapshots" / "snap_000003.json") == 0
    assert (d / "trace.jsonl").read_bytes() == (fit_dir / "trace.jsonl").read_bytes()
    assert (d / "snapshots" / "snap_000007.json").read_bytes() == \
        (fit_dir / "snapshots" / "snap_000007.json").read_bytes()


def test_resume_seed_mismatch(synth_dir, fit_dir, tmp_path):
    rc = _run("fit", "--data", synth_dir / "source1.csv", synth_dir / "source2.csv", "--out", tmp_path / "x",
              "--iters", 8, "--seed", 3, "--resume", fit_dir / "snapshots" / "snap_000003.json")
    assert rc == cli.EXIT_CONFIG


def test_perplexity_report(synth_dir, fit_dir, tmp_path, capsys):
    out = tmp_path / "p.json"
    rc = _run("perplexity", "--snapshots", fit_dir, "--test", synth_dir / "source1.csv", "--L", 2, "--R", 2,
              "--heldout-burn", 1, "--out", out, "--dump-pairs", tmp_path / "pairs.csv")
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["n_docs"] == 12 and rep["L"] == 2 and rep["dropped_terms"] == 0
    assert rep["log_ppd"] == pytest.approx(-rep["log_predictive"] / 12)
    assert len((tmp_path / "pairs.csv").read_text().splitlines()) == 5


def test_retrieve(synth_dir, fit_dir, tmp_path):
    (tmp_path / "tr1").write_text("\n".join("ab"[i % 2] for i in range(12)) + "\n")
    (tmp_path / "tr2").write_text("\n".join("ab"[i % 2] for i in range(10)) + "\n")
    (tmp_path / "te").write_text("\n".join("ab"[i % 2] for i in range(12)) + "\n")
    rc = _run("retrieve", "--snapshots", fit_dir, "--test", synth_dir / "source1.csv", "--test-labels",
              tmp_path / "te", "--train-labels", tmp_path / "tr1", tmp_path / "tr2", "--n-list", "1,5",
              "--out", tmp_path / "r")
    assert rc == 0
    rep = json.loads((tmp_path / "r" / "retrieval.json").read_text())
    assert set(rep["precision_at"]) == {"1", "5"} and 0.0 <= rep["map"] <= 1.0


def test_config_file_and_flag_precedence(synth_dir, tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"iters": 3, "thin": 1, "seed": 4}))
    d = tmp_path / "run"
    assert _run("fit", "--config", cfg, "--data", synth_dir / "source1.csv", "--out", d, "--iters", 2) == 0
    lines = (d / "trace.jsonl").read_text().splitlines()
    assert len(lines) == 2 and json.loads(lines[0])["seed"] == 4


def test_env_seed(synth_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("NHFA_SEED", "11")
    d = tmp_path / "run"
    assert _run("fit", "--data", synth_dir / "source1.csv", "--out", d, "--iters", 1) == 0
    assert json.loads((d / "trace.jsonl").read_text())["seed"] == 11
    monkeypatch.setenv("NHFA_SEED", "nope")
    assert _run("fit", "--data", synth_dir / "source1.csv", "--out", tmp_path / "y", "--iters", 1) == 2


@pytest.mark.parametrize("args", [
    ["fit", "--iters", "-1"],
    ["fit", "--bogus"],
    ["synth"],
    ["perplexity", "--snapshots", "/nonexistent"],
])
def test_config_errors(args, synth_dir, tmp_path):
    if args[0] == "fit":
        args = args + ["--data", str(synth_dir / "source1.csv"), "--out", str(tmp_path / "o")]
    assert cli.main(args) == cli.EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_unknown_config_key(synth_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"itters": 3}))
    assert _run("fit", "--config", cfg, "--data", synth_dir / "source1.csv", "--out", tmp_path / "o") == 2


def test_runtime_error_leaves_no_output(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(",d0\nx,-1\n")
    assert _run("fit", "--data", bad, "--out", tmp_path / "o", "--iters", 1) == cli.EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_diagnose_small(tmp_path):
    rc = _run("diagnose", "--samples", 300, "--models", "ggm", "--out", tmp_path / "d.json")
    rep = json.loads((tmp_path / "d.json").read_text())
    assert rep["tail_rel_err"] <= 1e-3
    assert rc == (0 if rep["passed"] else cli.EXIT_DIAGNOSTIC)
