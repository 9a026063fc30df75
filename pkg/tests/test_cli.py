from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from conspicuous.cli import cli


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, tmp_path, *args, code=0, env=None):
    res = runner.invoke(cli, ["--out", str(tmp_path), *args], env=env, catch_exceptions=False)
    assert res.exit_code == code, res.output
    return res


def test_help_lists_subcommands(runner):
    res = runner.invoke(cli, ["-h"])
    assert res.exit_code == 0
    for name in ("ingest", "fetch", "validate", "serve", "rarity", "embeddings", "graph", "gcn", "stats", "sim", "synth", "run"):
        assert name in res.output


def test_ingest_and_validate(runner, tmp_path, small_snapshot_dir):
    res = invoke(runner, tmp_path, "ingest", str(small_snapshot_dir))
    assert (tmp_path / "snapshot").is_dir() and json.loads((tmp_path / "validation.json").read_text())["violations"] == 0
    assert "wrote" in res.output
    invoke(runner, tmp_path, "validate", str(small_snapshot_dir))


def test_validate_reports_violations(runner, tmp_path, small_snapshot_dir):
    import shutil

    bad = tmp_path / "bad"
    shutil.copytree(small_snapshot_dir, bad)
    holdings = next(bad.glob("holdings*"))
    lines = holdings.read_text().splitlines()
    holdings.write_text("\n".join(lines + [lines[1].replace("collection-000", "ghost")]) + "\n")
    invoke(runner, tmp_path / "o", "validate", str(bad), code=1)


def test_rarity_embeddings_graph(runner, tmp_path, small_snapshot_dir):
    snap = str(small_snapshot_dir)
    invoke(runner, tmp_path, "rarity", "rank", snap, "--collection", "collection-001")
    rows = (tmp_path / "rarity.csv").read_text().splitlines()
    assert len(rows) == 41 and all(",collection-001," in r or r.startswith("collection-001,") for r in rows[1:])
    invoke(runner, tmp_path, "embeddings", "centroid", snap, "--sample-size", "10")
    invoke(runner, tmp_path, "embeddings", "distinctiveness", snap)
    invoke(runner, tmp_path, "embeddings", "stability", snap, "--sizes", "5,10", "--trials", "3")
    invoke(runner, tmp_path, "graph", "build", snap)
    invoke(runner, tmp_path, "graph", "metrics", snap)
    invoke(runner, tmp_path, "graph", "split", snap, "--seeds", "5", "--count", "2")
    invoke(runner, tmp_path, "graph", "perturb", snap, "--collection", "collection-000", "--mode", "add", "--weighting", "affinity", "--edges", "3")
    produced = {p.name for p in tmp_path.iterdir()}
    assert {"rarity.csv", "distinctiveness.csv", "stability.csv", "edges.csv", "metrics.csv"} <= produced


def test_gcn_train_predict_perturb(runner, tmp_path, small_snapshot_dir):
    snap = str(small_snapshot_dir)
    cfg = tmp_path / "gcn.toml"
    cfg.write_text("[gcn]\nepochs = 3\nsubgraph_count = 2\nwallet_seed_count = 10\n")
    invoke(runner, tmp_path, "gcn", "train", snap, "--config", str(cfg))
    model = tmp_path / "model.gcnw"
    assert model.exists()
    invoke(runner, tmp_path, "gcn", "predict", snap, "--model", str(model))
    invoke(runner, tmp_path, "gcn", "perturb-experiment", snap, "--model", str(model), "--edges", "5", "--samples", "10")
    invoke(runner, tmp_path, "gcn", "perturb-experiment", snap, "--model", str(model), "--mode", "bottom-percentile", "--samples", "10")


@pytest.mark.parametrize("analysis", ["census", "compare-r2", "fixed-effect", "bins", "censored", "wash", "select-case-studies"])
def test_stats_commands(runner, tmp_path, small_snapshot_dir, analysis):
    res = invoke(runner, tmp_path, "stats", analysis, str(small_snapshot_dir), "--bins", "10", "--top", "5")
    summary = json.loads(res.output)
    assert summary and (tmp_path / "summary.json").exists()


def test_stats_rejects_unknown_analysis(runner, tmp_path, small_snapshot_dir):
    res = runner.invoke(cli, ["--out", str(tmp_path), "stats", "magic", str(small_snapshot_dir)])
    assert res.exit_code == 2


def test_sim_commands(runner, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"c_N": 0.3, "c_a": 0.6, "c_b": 0.2}))
    res = invoke(runner, tmp_path, "sim", "equilibrium", "--params", str(params))
    assert json.loads(res.output)["converged"]
    assert {"equilibrium.json", "profile.csv", "profile.svg", "probe.json"} <= {p.name for p in tmp_path.iterdir()}
    res = invoke(runner, tmp_path, "sim", "probe", "--kind", "add-mass", "--level", "0.2", "--delta", "0.01")
    assert json.loads(res.output)["min_delta_x"] >= 0
    # the default family fails the strict sign condition below the private optimum
    res = invoke(runner, tmp_path, "sim", "check-assumptions", "--points", "5", code=1)
    assert "PASS concavity" in res.output and "FAIL sign_condition" in res.output
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"c_a": 0.1, "c_b": 0.5}))
    invoke(runner, tmp_path, "sim", "equilibrium", "--params", str(bad), code=1)


def test_synth_generate(runner, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[synth]\ncollections = 3\ntokens_per_collection = 10\nwallets = 40\nmin_holders = 2\n")
    invoke(runner, tmp_path / "o", "--seed", "5", "synth", "generate", "--config", str(cfg))
    truth = json.loads((tmp_path / "o" / "truth.json").read_text())
    assert len(truth["snob_slopes"]) == 3
    cfg.write_text("[synth]\nbogus = 1\n")
    invoke(runner, tmp_path / "p", "synth", "generate", "--config", str(cfg), code=1)


def _run_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'stages = ["synth", "ingest", "rarity"]\nout = "ignored"\n'
        "[synth]\ncollections = 3\ntokens_per_collection = 10\nwallets = 40\nmin_holders = 2\nwith_embeddings = false\n"
    )
    return cfg


def test_run_is_deterministic_and_honours_globals(runner, tmp_path):
    cfg = _run_config(tmp_path)
    a = invoke(runner, tmp_path / "a", "--seed", "2", "run", str(cfg))
    b = invoke(runner, tmp_path / "b", "--seed", "2", "run", str(cfg))
    c = invoke(runner, tmp_path / "c", "--seed", "3", "run", str(cfg))
    digest = lambda r: r.output.split("sha256=")[1].strip()  # noqa: E731
    assert digest(a) == digest(b) != digest(c)
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 2


def test_run_env_override_and_stage_flag(runner, tmp_path):
    cfg = _run_config(tmp_path)
    invoke(runner, tmp_path / "e", "run", str(cfg), "--stages", "synth", env={"CONSPICUOUS__SYNTH__COLLECTIONS": "2"})
    truth = json.loads((tmp_path / "e" / "synth" / "truth.json").read_text())
    assert len(truth["snob_slopes"]) == 2
    assert not (tmp_path / "e" / "rarity").exists()


def test_run_config_errors_and_failures(runner, tmp_path):
    cfg = _run_config(tmp_path)
    res = runner.invoke(cli, ["--out", str(tmp_path / "x"), "run", str(cfg), "--stages", "gcn"])
    assert res.exit_code == 1 and "requires" in res.output
    bad = tmp_path / "fail.toml"
    bad.write_text(cfg.read_text().replace('"rarity"]', '"rarity", "stats"]') + '[stats]\nanalyses = ["census", "select-case-studies"]\nmax_wash_fraction = "lots"\n')
    res = runner.invoke(cli, ["--out", str(tmp_path / "y"), "run", str(bad)])
    assert res.exit_code == 1
    manifest = json.loads((tmp_path / "y" / "manifest.json").read_text())
    assert manifest["failed_stage"] == "stats"


def test_threads_option(runner, tmp_path):
    invoke(runner, tmp_path, "--threads", "1", "sim", "probe")
    res = runner.invoke(cli, ["--threads", "0", "sim", "probe"])
    assert res.exit_code == 2
