import csv
import json

import numpy as np
import pytest

from lblnav import cli, scenario
from lblnav.errors import DivergenceDetected, ParseError, ValidationError
from lblnav.scenario import (
    config_from_dict,
    csv_header,
    emit_outputs,
    load_config,
    run_filter,
    run_scenario,
    summarize,
)
from lblnav.truthsim import DEFAULT_LANDMARKS, NoiseConfig, simulate

ZERO_NOISE = {k: 0.0 for k in ("sigma_range", "sigma_accel", "sigma_gyro", "sigma_roll_pitch", "sigma_yaw")}


def _write(tmp_path, text, name="cfg.json"):
    path = tmp_path / name
    path.write_text(text)
    return path


# configuration


def test_empty_config_is_default_scenario(tmp_path):
    cfg = load_config(_write(tmp_path, "{}"))
    np.testing.assert_array_equal(cfg.landmark_array, DEFAULT_LANDMARKS)
    assert cfg.noise_config == NoiseConfig(seed=0)
    assert (cfg.imu_hz, cfg.range_hz, cfg.duration) == (100.0, 1.0, 600.0)
    assert cfg.filters == ["proposed", "ekf", "algebraic"]
    assert cfg.n_records == 600


@pytest.mark.parametrize(
    "data, field",
    [
        ({"noise": {"sigma_range": -1}}, "sigma_range"),
        ({"rates": {"imu_hz": 100, "range_hz": 200}}, "rates"),
        ({"rates": {"imu_hz": 100, "range_hz": 3}}, "rates"),
        ({"duration": 0}, "duration"),
        ({"monte_carlo_runs": 0}, "monte_carlo_runs"),
        ({"filters": ["kalman"]}, "filters"),
        ({"landmarks": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]}, "landmarks"),
        ({"speed": 3}, "speed"),
        ({"tuning": {"qy_pair": 0}}, "qy_pair"),
    ],
)
def test_validation_names_the_field(data, field):
    with pytest.raises(ValidationError, match=field):
        config_from_dict(data)


def test_coplanar_landmarks_allowed_for_ekf_only():
    cfg = config_from_dict({"landmarks": [[0, 0, 0], [900, 0, 0], [0, 900, 0], [900, 900, 0]], "filters": ["ekf"]})
    assert cfg.filters == ["ekf"]


def test_nested_overrides_keep_defaults():
    cfg = config_from_dict({"rates": {"range_hz": 2}, "trajectory": {"radius": 30}, "tuning": {"qx": 1e-6}})
    assert cfg.imu_hz == 100.0 and cfg.range_hz == 2
    assert cfg.helix.radius == 30 and cfg.helix.period == 100.0
    assert cfg.tuning.qx == 1e-6 and cfg.tuning.qy_pair == 2.0


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ParseError, match="line 3"):
        load_config(_write(tmp_path, '{\n  "duration": 10,\n  "seed": ,\n}'))


# running and reporting


@pytest.fixture(scope="module")
def short_reports():
    cfg = config_from_dict({"duration": 20, "monte_carlo_runs": 2, "seed": 3})
    return cfg, run_scenario(cfg)


def test_report_layout(short_reports):
    cfg, reports = short_reports
    assert [(r.filter, r.run) for r in reports] == [(f, k) for k in range(2) for f in cfg.filters]
    for r in reports:
        assert r.t.shape == (20,) and r.ep.shape == (20, 3) and r.er.shape == (20, 4)
        np.testing.assert_array_equal(r.t, np.arange(1, 21, dtype=float))
        assert not r.diverged and r.position_rmse >= 0


def test_filters_share_the_sensor_log(monkeypatch):
    seen = []
    original = scenario.run_filter

    def spy(flt, log, *args, **kwargs):
        seen.append(log)
        return original(flt, log, *args, **kwargs)

    monkeypatch.setattr(scenario, "run_filter", spy)
    run_scenario(config_from_dict({"duration": 5}))
    assert len(seen) == 3 and seen[0] is seen[1] is seen[2]


def test_outputs_one_filter_one_run(tmp_path):
    cfg = config_from_dict({"duration": 30, "filters": ["proposed"]})
    paths = emit_outputs(run_scenario(cfg), tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["errors_proposed_0.csv", "summary.json"]
    assert len(paths) == 2
    with open(tmp_path / "errors_proposed_0.csv") as fh:
        rows = list(csv.reader(fh))
    assert ",".join(rows[0]) == csv_header(4)
    assert rows[0][-2:] == ["res_r1", "res_s8"]
    assert len(rows) - 1 == 30


def test_summary_rmse_matches_csv(tmp_path, short_reports):
    cfg, reports = short_reports
    emit_outputs(reports, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    for name in cfg.filters:
        per_run = []
        for k in range(2):
            data = np.loadtxt(tmp_path / f"errors_{name}_{k}.csv", delimiter=",", skiprows=1)
            tail = data[data.shape[0] // 2 :]
            rmse = np.sqrt(np.mean(np.sum(tail[:, 1:4] ** 2, axis=1)))
            assert abs(rmse - summary[name]["per_run"][k]["position_rmse"]) < 1e-12
            per_run.append(rmse)
        assert abs(np.sqrt(np.mean(np.square(per_run))) - summary[name]["position_rmse"]) < 1e-12
        assert summary[name]["runs"] == 2


def test_outputs_are_deterministic(tmp_path):
    cfg = config_from_dict({"duration": 15, "monte_carlo_runs": 2, "seed": 9})
    emit_outputs(run_scenario(cfg), tmp_path / "a")
    emit_outputs(run_scenario(cfg), tmp_path / "b")
    emit_outputs(run_scenario(cfg, workers=2), tmp_path / "c")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 7
    for name in names:
        ref = (tmp_path / "a" / name).read_bytes()
        assert (tmp_path / "b" / name).read_bytes() == ref
        assert (tmp_path / "c" / name).read_bytes() == ref


def test_seed_changes_noise():
    a = run_scenario(config_from_dict({"duration": 5, "filters": ["ekf"], "seed": 1}))[0]
    b = run_scenario(config_from_dict({"duration": 5, "filters": ["ekf"], "seed": 2}))[0]
    assert not np.array_equal(a.ep, b.ep)


def test_zero_noise_steady_state():
    cfg = config_from_dict({"noise": ZERO_NOISE, "filters": ["proposed"]})
    rep = run_scenario(cfg)[0]
    assert rep.position_rmse < 1e-2
    assert rep.convergence_time is not None and rep.convergence_time < 60


def test_failure_is_flagged_not_raised(monkeypatch):
    cfg = config_from_dict({"duration": 10, "filters": ["proposed"]})
    flt = scenario.make_filter("proposed", cfg)
    calls = {"n": 0}
    original = flt.update

    def failing(frame):
        calls["n"] += 1
        if calls["n"] == 4:
            raise DivergenceDetected("forced")
        original(frame)

    flt.update = failing
    log = simulate(cfg.helix, cfg.landmark_array, cfg.noise_config, 100, 1, 10.0, np.random.default_rng(0))
    rep = run_filter(flt, log)
    assert rep.diverged and "forced" in rep.error
    assert rep.position_rmse is None
    assert np.all(np.isfinite(rep.ep[:3])) and np.all(np.isnan(rep.ep[3:]))
    assert summarize([rep])["proposed"]["position_rmse"] is None


def test_no_partial_outputs_on_write_error(tmp_path, monkeypatch, short_reports):
    _, reports = short_reports
    real = scenario.tempfile.mkstemp
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise OSError("disk full")
        return real(*args, **kwargs)

    monkeypatch.setattr(scenario.tempfile, "mkstemp", flaky)
    with pytest.raises(OSError):
        emit_outputs(reports, tmp_path / "out")
    assert list((tmp_path / "out").iterdir()) == []


# command line


def test_cli_simulate(tmp_path, capsys):
    cfg = _write(tmp_path, json.dumps({"duration": 10, "filters": ["proposed", "ekf"]}))
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "4", "--runs", "2"]) == 0
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == ["errors_ekf_0.csv", "errors_ekf_1.csv", "errors_proposed_0.csv", "errors_proposed_1.csv", "summary.json"]
    assert "proposed" in capsys.readouterr().out


def test_cli_filters_flag(tmp_path):
    cfg = _write(tmp_path, json.dumps({"duration": 5}))
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--filters", "algebraic"]) == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["errors_algebraic_0.csv", "summary.json"]


def test_cli_compare_prints_ratios(tmp_path, capsys):
    cfg = _write(tmp_path, json.dumps({"duration": 10}))
    assert cli.main(["compare", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    for name in ("proposed", "ekf", "algebraic", "vs proposed"):
        assert name in out


def test_cli_gramian(tmp_path, capsys):
    cfg = _write(tmp_path, json.dumps({"duration": 20, "gramian": {"tf": 10, "window": 10}}))
    assert cli.main(["gramian", "--config", str(cfg), "--out", str(tmp_path / "g")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["min_eigenvalue"] > 0 and "W" not in printed
    assert printed["all_windows_positive_definite"] and len(printed["windows"]) == 2
    stored = json.loads((tmp_path / "g" / "gramian.json").read_text())
    assert np.array(stored["W"]).shape == (17, 17)


@pytest.mark.parametrize(
    "text, message",
    [('{"noise": {"sigma_range": -1}}', "sigma_range"), ('{"duration": }', "line 1")],
)
def test_cli_reports_config_errors(tmp_path, capsys, text, message):
    cfg = _write(tmp_path, text)
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert message in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
