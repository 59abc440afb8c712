import csv
import json

import pytest

from hedgegame.cli import main
from hedgegame.config import (
    ConfigError,
    ExperimentConfig,
    dump_config,
    load_config,
    parse_seeds,
    save_config,
)
from hedgegame.experiments import ExperimentError, cmd_montecarlo, cmd_run, cmd_sweep
from hedgegame.game import make_game, save_game

PD_RUN = {
    "game": {"kind": "prisoners_dilemma"},
    "schedule": {"kind": "constant", "gamma": 0.1},
    "horizon": 500,
}

PD_NOISY = {
    "game": {"kind": "prisoners_dilemma"},
    "schedule": {"kind": "power_law", "gamma": 0.05, "beta": 0.6},
    "feedback": {"kind": "noisy", "noise": "gaussian", "scale": 1.0},
    "init": {"kind": "basin", "margin": 4.0},
    "analysis": {"basin_threshold": 2.0},
    "horizon": 2000,
    "seeds": "0..9",
}


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_defaults_applied(tmp_path):
    cfg = load_config(_write(tmp_path, PD_RUN))
    assert cfg.init == {"kind": "basin", "margin": 2.0}
    assert cfg.analysis["tolerance"] == 1e-3 and cfg.analysis["confidence"] == 0.05
    assert cfg.feedback == {"kind": "perfect"} and cfg.seeds == [0]
    assert cfg.basin_threshold() == 2.0


@pytest.mark.parametrize(
    "doc, name",
    [
        ({**PD_RUN, "colour": 1}, "colour"),
        ({**PD_RUN, "schedule": {"kind": "constant", "gamma": 0.1, "gama": 2}}, "schedule.gama"),
        ({**PD_RUN, "game": {"kind": "prisoners_dilemma", "size": 2}}, "game.size"),
    ],
)
def test_unknown_key_named(tmp_path, doc, name):
    with pytest.raises(ConfigError, match=name):
        load_config(_write(tmp_path, doc))


def test_missing_field_and_parse_error(tmp_path):
    doc = dict(PD_RUN)
    del doc["horizon"]
    with pytest.raises(ConfigError, match="horizon"):
        load_config(_write(tmp_path, doc))
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "game": {"kind": "coordination"},\n  "horizon": ,\n}')
    with pytest.raises(ConfigError, match="line 3, column 14"):
        load_config(bad)


def test_invalid_values(tmp_path):
    for doc in (
        {**PD_RUN, "horizon": 0},
        {**PD_RUN, "seeds": "5..2"},
        {**PD_RUN, "schedule": {"kind": "power_law", "gamma": 0.1, "beta": 2.0}},
        {**PD_RUN, "game": {"file": "missing.json"}},
    ):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, doc))


def test_round_trip(tmp_path):
    cfg = load_config(_write(tmp_path, PD_NOISY))
    save_config(cfg, tmp_path / "again.json")
    back = load_config(tmp_path / "again.json")
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)
    assert back.config_hash() == cfg.config_hash()


def test_parse_seeds():
    assert parse_seeds("3..5") == [3, 4, 5]
    assert parse_seeds(7) == [7]
    assert parse_seeds([1, 4]) == [1, 4]
    with pytest.raises(ConfigError):
        parse_seeds("a..b")


def test_game_file_reference(tmp_path):
    save_game(make_game("coordination"), tmp_path / "g.json")
    cfg = load_config(_write(tmp_path, {**PD_RUN, "game": {"file": "g.json"}}))
    assert cfg.build_game() == make_game("coordination")


def test_cmd_run_pd(tmp_path):
    cfg = ExperimentConfig.from_dict(PD_RUN)
    rec = cmd_run(cfg, 0, tmp_path)
    assert rec.converged and not rec.escaped
    assert cmd_run(cfg, 0).record_hash == rec.record_hash
    summary = json.loads((tmp_path / "summary_seed0.json").read_text())
    assert summary["record_hash"] == rec.record_hash
    with open(tmp_path / "trajectory_seed0.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["t", "gamma_t", "theta_t"] and len(rows) == 502


def test_pennies_refused(tmp_path):
    cfg = ExperimentConfig.from_dict({**PD_RUN, "game": {"kind": "matching_pennies"}})
    with pytest.raises(ExperimentError, match="no strict equilibrium"):
        cmd_run(cfg, 0)
    path = _write(tmp_path, {**PD_RUN, "game": {"kind": "matching_pennies"}})
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_cli_run_byte_identical(tmp_path, capsys):
    path = _write(tmp_path, PD_NOISY)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(path), "--seed", "3", "--out", str(a)]) == 0
    assert main(["run", "--config", str(path), "--seed", "3", "--out", str(b), "--quiet"]) == 0
    name = "trajectory_seed3.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "summary_seed3.json").read_bytes() == (b / "summary_seed3.json").read_bytes()
    out = capsys.readouterr().out
    assert "record_hash" in out


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    path = _write(tmp_path, PD_RUN)
    assert main(["run", "--config", str(path), "--seeds", "0..3", "--quiet"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", str(path), "--out", str(blocker / "sub"), "--quiet"]) == 1
    monkeypatch.setenv("HEDGEGAME_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", str(path), "--quiet"]) == 0
    assert (tmp_path / "env" / "summary_seed0.json").exists()


def test_montecarlo_aggregate(tmp_path):
    cfg = ExperimentConfig.from_dict(PD_NOISY)
    report = cmd_montecarlo(cfg, out_dir=tmp_path)
    recs = report["records"]
    assert report["runs"] == 10
    assert report["stay_in_fraction"] == sum(not r.escaped for r in recs) / 10
    assert report["converged_fraction"] == sum(r.converged for r in recs) / 10
    assert report["admissible"]
    doc = json.loads((tmp_path / "montecarlo.json").read_text())
    assert doc["stay_in_fraction"] == report["stay_in_fraction"]
    with open(tmp_path / "runs.csv") as fh:
        assert len(list(csv.reader(fh))) == 11


def test_montecarlo_single_seed_matches_run():
    cfg = ExperimentConfig.from_dict(PD_NOISY)
    report = cmd_montecarlo(cfg, seeds=[4])
    (rec,) = report["records"]
    single = cmd_run(ExperimentConfig.from_dict({**PD_NOISY, "outputs": {"stride": 1}}), 4)
    assert report["stay_in_fraction"] == float(not single.escaped)
    assert report["converged_fraction"] == float(single.converged)
    assert rec.final_distance == single.final_distance
    assert rec.escaped == single.escaped


def test_montecarlo_zero_noise_stays_in():
    doc = {**PD_NOISY, "feedback": {"kind": "noisy", "noise": "gaussian", "scale": 0.0}}
    report = cmd_montecarlo(ExperimentConfig.from_dict(doc))
    assert report["stay_in_fraction"] == 1.0


def test_montecarlo_needs_noise():
    with pytest.raises(ConfigError):
        cmd_montecarlo(ExperimentConfig.from_dict(PD_RUN))


def test_sweep(tmp_path):
    cfg = ExperimentConfig.from_dict({**PD_RUN, "analysis": {"window": [50, 400]}})
    rows = cmd_sweep(cfg, "schedule.gamma", [0.05, 0.1, 0.2], tmp_path)
    assert [r["value"] for r in rows] == [0.05, 0.1, 0.2]
    assert all(0.9 <= r["ratio"] <= 1.1 for r in rows)
    assert (tmp_path / "sweep.csv").exists()
    with pytest.raises(ValueError):
        cmd_sweep(cfg, "schedule.gamma", [])


def test_cli_sweep_and_report(tmp_path, capsys):
    path = _write(tmp_path, {**PD_RUN, "analysis": {"window": [50, 400]}})
    assert main(["sweep", "--config", str(path), "--param", "schedule.gamma",
                 "--values", "0.05,0.1", "--out", str(tmp_path / "s")]) == 0
    assert "ratio" in capsys.readouterr().out
    assert main(["sweep", "--config", str(path), "--param", "schedule.gamma",
                 "--values", "", "--quiet"]) == 2
    noisy = _write(tmp_path, {**PD_NOISY, "horizon": 300}, "noisy.json")
    out = tmp_path / "r"
    assert main(["report", "--config", str(noisy), "--seed", "1", "--out", str(out), "--quiet"]) == 0
    for name in ("ratefit.csv", "noise_ledger.csv", "diagnostics.csv", "report.json"):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["min_kl_l1_slack"] >= -1e-9 and rep["min_fenchel_slack"] >= -1e-9
