import json

import numpy as np
import pytest
import yaml

from twisted_el import runner
from twisted_el.cli import main
from twisted_el.errors import ConfigError, InvalidArgument, NoConvergence

SMALL = dict(m=3, mu=1.0, n=128, dt=1e-3, t_end=0.05, output_cadence=10, snapshot_every=2)


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def test_config_defaults():
    cfg = runner.config_from_mapping({"m": 3, "mu": 1.0})
    assert cfg.r_max == 25.0 and cfg.n == 512 and cfg.dt == 1e-4
    assert cfg.mode == "coupled" and cfg.fit_window == (0.5, 3.0)
    assert cfg.params.omega == 0.0


@pytest.mark.parametrize(
    "data,fragment",
    [
        ({"m": 3, "mu": 1.0, "colour": 1}, "unknown key"),
        ({"m": 2, "mu": 1.0}, "|m| must be >= 3"),
        ({"m": 3, "mu": 0.0}, "invalid value"),
        ({"mu": 1.0}, "missing required key 'm'"),
        ({"m": 3, "mu": 1.0, "fit_window": [2, 1]}, "fit_window"),
    ],
)
def test_config_rejections(data, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("|", r"\|")):
        runner.config_from_mapping(data)


def test_yaml_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("m: 3\nmu: [1.0\n")
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        runner.load_config(p)


def test_small_run_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    ts = (a / "timeseries.csv").read_text()
    assert ts == (b / "timeseries.csv").read_text()
    header = ts.splitlines()[0].split(",")
    assert header == [name for name, _ in runner.TIMESERIES_COLUMNS]
    assert len(ts.splitlines()) == 1 + 6
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    names = {f["name"] for f in manifest["files"]}
    assert {"timeseries.csv", "summary.json", "profile_t0.000000.csv", "profile_t0.050000.csv"} <= names
    for f in manifest["files"]:
        assert (a / f["name"]).exists()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["records"] == 6 and summary["final"]["t"] == pytest.approx(0.05)


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _write(tmp_path, SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(blocker / "sub")]) == 1


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 1


def test_underresolved_bubble_stops_early():
    cfg = runner.RunConfig(**{**SMALL, "min_cells_per_sigma": 1e6})
    traj = runner.run_simulation(cfg)
    assert traj.status == "completed" and traj.marker == "sigma-underresolved"
    assert len(traj.records) == 1


def test_breakdown_exit_code(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise NoConvergence("forced")

    monkeypatch.setattr(runner, "extract_modulation", fail)
    cfg = _write(tmp_path, SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "breakdown"


def test_sweep_expansion_and_empty_grid(tmp_path):
    configs = runner.expand_sweep({"base": {"m": 3, "mu": 1.0}, "grid": {"m": [3, 4], "mu": [0.5, 1.0]}})
    assert [(c.m, c.mu) for c in configs] == [(3, 0.5), (3, 1.0), (4, 0.5), (4, 1.0)]
    assert runner.expand_sweep({"base": {"m": 3, "mu": 1}, "grid": {"mu": []}}) == []
    with pytest.raises(ConfigError):
        runner.expand_sweep({"grid": {"n": [1]}})
    spec = tmp_path / "s.yaml"
    spec.write_text(yaml.safe_dump({"base": {"m": 3, "mu": 1.0}, "grid": {"mu": []}}))
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 1


def test_sweep_parallel_matches_serial(tmp_path):
    base = {**SMALL, "t_end": 0.2, "output_cadence": 20, "fit_window": [0.0, 0.2]}
    spec = tmp_path / "s.yaml"
    spec.write_text(yaml.safe_dump({"base": base, "grid": {"mu": [0.5, 1.0]}}))
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "p1")]) == 0
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "p2"), "--parallel", "2"]) == 0
    one = (tmp_path / "p1" / "rates.csv").read_text()
    assert one == (tmp_path / "p2" / "rates.csv").read_text()
    assert one.splitlines()[0] == "m,mu,predicted_rate,fitted_rate,rel_err"
    assert len(one.splitlines()) == 3


def test_fit_command(tmp_path, capsys):
    t = np.linspace(0, 3, 31)
    path = tmp_path / "ts.csv"
    path.write_text("t,sigma\n" + "".join(f"{float(a)!r},{float(np.exp(-a / 9))!r}\n" for a in t))
    assert main(["fit", "--in", str(path), "--window", "0.5:3"]) == 0
    out = capsys.readouterr().out
    assert float(out.split()[0].split("=")[1]) == pytest.approx(-1 / 9, rel=1e-9)
    assert main(["fit", "--in", str(path), "--window", "3:0.5"]) == 1
    assert main(["fit", "--in", str(path), "--column", "nope", "--window", "0:1"]) == 1
    with pytest.raises(InvalidArgument):
        runner.parse_window("1-2")


def test_verify_quick_and_mutation(capsys):
    assert main(["verify", "--level", "quick"]) == 0
    assert main(["verify", "--level", "quick", "--mutation", "lh-sign"]) == 1
    assert "FAIL" in capsys.readouterr().out
