import json
import re

import pytest

from greywave.cli import cli_dispatch, main


def run(*argv):
    return cli_dispatch([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("ingest", "--synthetic-users", 800, "--sample", 150, "--seed", 1, "--out", root / "g") == 0
    assert run("attack", "--in", root / "g" / "ratings.csv", "--model", "average", "--intent", "grey",
               "--grey-rating", 3, "--attack-size", 0.17, "--filler-size", 0.05, "--seed", 4,
               "--out", root / "a") == 0
    return root


def test_attack_label_count(workspace):
    lines = (workspace / "a" / "labels.csv").read_text().splitlines()[1:]
    assert sum(line.endswith(",attacker") for line in lines) == round(0.17 * 150)
    assert sum(line.endswith(",genuine") for line in lines) == 150


def test_detect_byte_identical(workspace):
    for name in ("r1", "r2"):
        assert run("detect", "--in", workspace / "a" / "attacked.csv", "--seed", 42,
                   "--out", workspace / name / "report.json") == 0
    a = (workspace / "r1" / "report.json").read_bytes()
    assert a == (workspace / "r2" / "report.json").read_bytes()
    assert json.loads(a)["config"]["em"]["seed"] == 42
    assert (workspace / "r1" / "report.flagged.csv").exists()


def test_eval_and_features(workspace):
    run("detect", "--in", workspace / "a" / "attacked.csv", "--out", workspace / "d" / "report.json")
    assert run("eval", "--labels", workspace / "a" / "labels.csv", "--report", workspace / "d" / "report.json",
               "--out", workspace / "e" / "metrics.json") == 0
    metrics = json.loads((workspace / "e" / "metrics.json").read_text())
    assert 0 <= metrics["detection_rate"] <= 1 and 0 <= metrics["false_alarm_rate"] <= 1

    cfg = workspace / "atk.json"
    cfg.write_text(json.dumps({"model": "average", "intent": "grey", "grey_rating": 5,
                               "attack_size": 0.2, "filler_size": 0.05, "seed": 1}))
    assert run("eval", "--labels", workspace / "a" / "labels.csv", "--in", workspace / "a" / "attacked.csv",
               "--genuine", workspace / "g" / "ratings.csv", "--attack-config", cfg,
               "--out", workspace / "e2" / "metrics.json") == 0
    shift = json.loads((workspace / "e2" / "metrics.json").read_text())["prediction_shift"]
    assert shift["rmse"] >= shift["mae"] > 0

    assert run("features", "--in", workspace / "a" / "attacked.csv", "--dump-orderings",
               "--out", workspace / "f") == 0
    assert {p.name for p in (workspace / "f").iterdir()} == {
        "features.csv", "manifest.json", "ordering_rd.csv", "ordering_p.csv", "ordering_n.csv"}


def test_every_output_dir_has_manifest(workspace):
    for sub in ("g", "a", "r1", "f"):
        doc = json.loads((workspace / sub / "manifest.json").read_text())
        assert {"subcommand", "argv", "config", "seeds", "inputs", "outputs", "version", "duration_s"} <= set(doc)


def test_replay_from_manifest(workspace):
    out = workspace / "rep"
    assert run("detect", "--in", workspace / "a" / "attacked.csv", "--seed", 9, "--out", out / "report.json") == 0
    first = (out / "report.json").read_bytes()
    argv = json.loads((out / "manifest.json").read_text())["argv"]
    (out / "report.json").unlink()
    assert cli_dispatch(argv) == 0
    assert (out / "report.json").read_bytes() == first


def test_env_var_override(workspace, monkeypatch):
    monkeypatch.setenv("GREYWAVE_DETECT_SEED", "17")
    assert run("detect", "--in", workspace / "a" / "attacked.csv", "--out", workspace / "env" / "r.json") == 0
    assert json.loads((workspace / "env" / "r.json").read_text())["config"]["em"]["seed"] == 17


def test_exit_codes(workspace, tmp_path):
    assert run("detect", "--bogus-flag") == 1
    assert run("no-such-command") == 1
    assert run("detect", "--in", tmp_path / "missing.csv", "--out", tmp_path / "r.json") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("u1,i1,12\n")
    assert run("detect", "--in", bad, "--out", tmp_path / "r.json") == 2
    assert run("attack", "--in", workspace / "g" / "ratings.csv", "--attack-size", 0.0001,
               "--out", tmp_path / "z") == 2
    assert run("eval", "--labels", workspace / "a" / "labels.csv", "--out", tmp_path / "m.json") == 1


@pytest.mark.parametrize("sub", ["ingest", "attack", "features", "detect", "eval", "sweep"])
def test_help_lists_defaults(sub, capsys):
    assert run(sub, "--help") == 0
    text = capsys.readouterr().out
    cmd = main.commands[sub]
    for p in cmd.params:
        if p.name == "help" or not p.opts[0].startswith("--"):
            continue
        assert p.opts[0] in text
        if p.required:
            assert "[required]" in text
        elif isinstance(p.default, (int, float, str)) and not p.is_flag:
            assert re.search(r"default:\s*" + re.escape(str(p.default)), text), (sub, p.name)


def test_sweep_small(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({
        "dataset": {"synthetic": {"n_users": 80, "n_items": 300}},
        "models": ["average", "random"], "attack_sizes": [0.1, 0.2], "filler_sizes": [0.05],
        "prediction_shift": False,
    }))
    assert run("sweep", "--config", cfg, "--out", tmp_path / "s") == 0
    rows = (tmp_path / "s" / "results.csv").read_text().splitlines()
    assert len(rows) == 1 + 4
    assert (tmp_path / "s" / "manifest.json").exists()
