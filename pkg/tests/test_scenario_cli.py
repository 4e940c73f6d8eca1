import csv
import json

import numpy as np
import pytest
import yaml

from hamh.algo import EpisodeRecord
from hamh.cli import main
from hamh.config import Config
from hamh.nn import CheckpointError, Tensor, load_checkpoint, read_checkpoint, save_checkpoint
from hamh.runio import OUTPUT_ENV, RunManifest, emit_metrics, read_episode_records, read_metrics
from hamh.scenario import ScenarioError, bundled_scenarios, parse_scenario, scenario_from_dict, write_scenario

TINY = """\
name: tiny
network: {rows: 1, cols: 2}
timing: {episode_length: 100}
arrivals:
  - {entry: "r0c0:W", windows: [[0, 100, 900.0]]}
  - {entry: "r0c1:N", windows: [[0, 100, 600.0]]}
config: {hidden: 8, k: 2, epochs: 1}
"""


@pytest.fixture
def tiny_path(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return p


# ---------------------------------------------------------------- scenarios


def test_bundled_scenarios_present():
    assert {"corridor_1x3", "grid_2x2", "grid_3x3", "grid_1x1"} <= set(bundled_scenarios())
    for name in bundled_scenarios():
        parse_scenario(name)


def test_corridor_has_three_distinct_profiles():
    sc = parse_scenario("corridor_1x3")
    assert (sc.rows, sc.cols) == (1, 3)
    profiles = {}
    for a in sc.arrivals:
        node = a.entry.split(":")[0]
        ratios = tuple(a.turn_ratios or sc.turn_ratios)
        profiles.setdefault(node, []).append((a.entry.split(":")[1], a.windows[0][2], ratios))
    assert len(profiles) == 3
    assert len({tuple(sorted(v)) for v in profiles.values()}) == 3


def test_grid_3x3_rates_are_heterogeneous():
    sc = parse_scenario("grid_3x3")
    rates = {w[2] for a in sc.arrivals for w in a.windows}
    assert len(rates) > 1


def test_missing_gamma_defaults():
    sc = parse_scenario("grid_1x1")
    assert "gamma" not in sc.config
    assert sc.make_config().gamma == 0.98


def test_bad_turn_ratios(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("network: {rows: 1, cols: 1}\nturn_ratios: [0.5, 0.4, 0.2]\n")
    with pytest.raises(ScenarioError, match="sum"):
        parse_scenario(p)


def test_negative_rate():
    doc = {"network": {"rows": 1, "cols": 1}, "arrivals": [{"entry": "r0c0:N", "windows": [[0, 10, -1.0]]}]}
    with pytest.raises(ScenarioError, match="negative"):
        scenario_from_dict(doc)


def test_unknown_entry():
    doc = {"network": {"rows": 1, "cols": 1}, "arrivals": [{"entry": "r3c0:N", "windows": [[0, 10, 1.0]]}]}
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc)


def test_syntax_error_reports_line(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("network:\n  rows: 1\n  cols: [1, 2\nseeds: [0]\n")
    with pytest.raises(ScenarioError, match=r"broken\.yaml:\d+: syntax error"):
        parse_scenario(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_scenario("no_such_scenario")


@pytest.mark.parametrize("name", ["corridor_1x3", "grid_2x2", "grid_3x3", "grid_1x1"])
def test_round_trip(tmp_path, name):
    sc = parse_scenario(name)
    p = tmp_path / f"{name}.yaml"
    write_scenario(sc, p)
    back = parse_scenario(p)
    assert back.to_dict() == sc.to_dict()
    assert back.digest() == sc.digest()


# ---------------------------------------------------------------- metrics and manifests


def _records(n=3):
    return [EpisodeRecord(i, 100.0 / 3 + i, -0.1 * i, 0.5, 1e-17, np.log(32), 0.1 * (i + 1)) for i in range(n)]


def test_emit_metrics_lines_and_round_trip(tmp_path):
    p = tmp_path / "m.csv"
    recs = _records()
    emit_metrics(recs, p)
    assert len(p.read_text().splitlines()) == 4
    assert read_episode_records(p) == recs


def test_emit_metrics_appends_without_second_header(tmp_path):
    p = tmp_path / "m.csv"
    recs = _records(5)
    for r in recs:
        emit_metrics([r], p)
    assert len(p.read_text().splitlines()) == 6
    assert read_episode_records(p) == recs


def test_emit_metrics_rejects_foreign_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        emit_metrics(_records(1), p)


def test_manifest_round_trip(tmp_path):
    m = RunManifest("grid_1x1", "abc", Config().to_dict(), 3, "hamh", outputs={"metrics": "m.csv"})
    m.write(tmp_path / "manifest.json")
    assert RunManifest.read(tmp_path / "manifest.json") == m


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a": Tensor(rng.normal(size=(3, 4))), "b": Tensor(rng.normal(size=5))}
    save_checkpoint(tmp_path / "c.json", params, {"episode": 7})
    fresh = {"a": Tensor(np.zeros((3, 4))), "b": Tensor(np.zeros(5))}
    meta = load_checkpoint(tmp_path / "c.json", fresh)
    assert meta["episode"] == 7
    for k in params:
        assert np.array_equal(fresh[k].data, params[k].data)
    assert set(read_checkpoint(tmp_path / "c.json")[0]) == {"a", "b"}


def test_checkpoint_shape_mismatch(tmp_path):
    save_checkpoint(tmp_path / "c.json", {"a": Tensor(np.zeros((3, 4)))})
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(tmp_path / "c.json", {"a": Tensor(np.zeros((4, 3)))})


def test_checkpoint_missing_parameter(tmp_path):
    save_checkpoint(tmp_path / "c.json", {"a": Tensor(np.zeros(2))})
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "c.json", {"a": Tensor(np.zeros(2)), "b": Tensor(np.zeros(1))})


# ---------------------------------------------------------------- CLI


def test_cli_train_eval_export(tmp_path, tiny_path, capsys):
    out = tmp_path / "run"
    args = ["train", "--scenario", str(tiny_path), "--seed", "7", "--episodes", "3", "--out", str(out)]
    assert main(args + ["--eval-every", "2", "--checkpoint-every", "2", "--quiet"]) == 0
    rows = read_metrics(out / "metrics.csv")
    assert [r["episode"] for r in rows] == [0, 1, 2]
    wall = [r["wallclock_s"] for r in rows]
    assert all(b >= a for a, b in zip(wall, wall[1:]))
    assert (out / "final.json").exists() and (out / "checkpoints" / "ep00002.json").exists()
    assert len(read_metrics(out / "eval.csv")) == 1
    manifest = RunManifest.read(out / "manifest.json")
    assert manifest.seed == 7 and manifest.config["hidden"] == 8
    assert manifest.scenario_hash == parse_scenario(tiny_path).digest()

    # same manifest, same metrics (wallclock aside)
    out2 = tmp_path / "run2"
    assert main(["train", "--scenario", str(tiny_path), "--seed", "7", "--episodes", "3", "--out", str(out2), "--quiet"]) == 0
    strip = lambda rs: [{k: v for k, v in r.items() if k != "wallclock_s"} for r in rs]
    assert strip(read_metrics(out2 / "metrics.csv")) == strip(rows)

    # refuses to clobber a run
    assert main(args + ["--quiet"]) == 2

    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "final.json"), "--episodes", "2"]) == 0
    assert "±" in capsys.readouterr().out

    obs = tmp_path / "obs.csv"
    assert main(["export-obs", "--checkpoint", str(out / "final.json"), "--out", str(obs)]) == 0
    with obs.open() as fh:
        body = list(csv.reader(fh))
    assert body[0] == ["t", "intersection"] + [f"lane{j}" for j in range(12)]
    assert len(body) == 1 + 11 * 2


def test_cli_baseline(tmp_path, tiny_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["baseline", "--controller", "maxpressure", "--scenario", str(tiny_path), "--seeds", "3", "--out", str(out)]) == 0
    rows = read_metrics(out)
    assert [r["seed"] for r in rows] == [0, 1, 2]
    assert "summary" in capsys.readouterr().out
    meta = json.loads((tmp_path / "b.csv.meta.json").read_text())
    assert "maxpressure" in meta["controllers"]


def test_cli_export_obs_from_controller(tmp_path, tiny_path):
    out = tmp_path / "o.csv"
    assert main(["export-obs", "--scenario", str(tiny_path), "--controller", "fixedtime", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 11 * 2


def test_cli_output_dir_env(tmp_path, tiny_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "outroot"))
    assert main(["baseline", "--controller", "fixedtime", "--scenario", str(tiny_path), "--seeds", "1"]) == 0
    assert list((tmp_path / "outroot").glob("*.csv"))


def test_cli_sweep(tmp_path, tiny_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--scenario", str(tiny_path), "--values", "1,2", "--seeds", "1", "--episodes", "1", "--out", str(out)]) == 0
    assert len(read_metrics(out)) >= 2


def test_cli_errors(tmp_path, tiny_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json")]) == 2
    assert main(["train", "--scenario", str(tiny_path), "--variant", "ppo-share", "--k", "4", "--out", str(tmp_path / "x")]) == 2
    assert main(["baseline", "--scenario", "no_such_scenario"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"network": {"rows": 1, "cols": 1}, "turn_ratios": [0.5, 0.4, 0.2]}))
    assert main(["baseline", "--scenario", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_checkpoint_mismatch(tmp_path, tiny_path):
    out = tmp_path / "run"
    assert main(["train", "--scenario", str(tiny_path), "--episodes", "1", "--out", str(out), "--quiet"]) == 0
    # a 1x3 corridor needs a bigger one-hot than this 1x2 checkpoint holds
    assert main(["eval", "--checkpoint", str(out / "final.json"), "--scenario", "corridor_1x3"]) == 2


def test_cli_gradcheck():
    assert main(["gradcheck"]) == 0
