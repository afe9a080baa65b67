import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from fluctlab import cli, experiments
from fluctlab.config import EXPERIMENTS, ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_SCATTER = """
experiment = "scattering_study"
[potential]
kind = "{kind}"
{extra}
[sweep]
N = [10, 100]
beta = 0.5
ell = 1.0
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def scatter_cfg(tmp_path, kind="smooth_bump"):
    extra = "" if kind == "zero" else "strength = 0.5\nrange = 1.0"
    return write(tmp_path, SMALL_SCATTER.format(kind=kind, extra=extra))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("path", sorted(p for p in CONFIGS.glob("*.toml") if p.stem != "invalid_beta"))
def test_shipped_configs_validate(path):
    assert cli.main(["validate", str(path)]) == 0


def test_invalid_beta_exits_2_without_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", str(CONFIGS / "invalid_beta.toml"), "--output-dir", str(out)]) == 2
    assert not out.exists()
    assert "beta" in capsys.readouterr().err


@pytest.mark.parametrize("raw", [
    {"experiment": "scattering_study", "sweep": {"N": [10], "beta": 0.5}, "bogus": 1},
    {"experiment": "scattering_study", "sweep": {"N": [10], "beta": 0.5, "gamma": 1}},
    {"experiment": "scattering_study", "sweep": {"N": [10], "beta": 0.5}, "extra_section": {"a": 1}},
    {"experiment": "nope"},
    {"experiment": "scattering_study", "sweep": {"N": [10]}},
    {"experiment": "scattering_study", "sweep": {"N": [10, 10], "beta": 0.5}},
    {"experiment": "scattering_study", "sweep": {"N": [10], "beta": -0.1}},
    {"experiment": "scattering_study", "sweep": {"N": [10], "beta": "0.5"}},
    {"experiment": "scattering_study", "sweep": {"N": [10], "beta": 0.5}, "grid": {"grid_points": 100}},
    {"experiment": "fluctuation_norm", "sweep": {"N": [2], "beta": 0.5}, "time": {"t_grid": [0.5, 1.0]}},
    {"experiment": "fluctuation_norm", "sweep": {"N": [2], "beta": 0.5}, "time": {"t_grid": [0.0, 1.0, 0.5]}},
    {"experiment": "mean_field_convergence", "sweep": {"N": [2], "beta": 0.5}, "time": {"t_grid": [0.0]}},
    {"experiment": "ground_state", "effective": {"variant": "quintic"}},
    {"experiment": "ground_state", "effective": {"variant": "cubic_nls"}, "potential": {"kind": "square_well"}},
])
def test_bad_configs_rejected(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_config_defaults_and_roundtrip():
    cfg = parse_config({"experiment": "scattering_study", "sweep": {"N": [10, 100], "beta": 0.5}})
    assert cfg.N_sweep == (10.0, 100.0)
    assert cfg.ell_value == pytest.approx(cfg.box_length / 4)
    d = cfg.to_dict()
    assert d["N_sweep"] == [10.0, 100.0]
    json.dumps(d)


def test_unparseable_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "experiment = \n"))


def test_missing_config_is_io_error(tmp_path):
    assert cli.main(["validate", str(tmp_path / "absent.toml")]) == 4
    assert cli.main(["run", str(tmp_path / "absent.toml")]) == 4


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", str(scatter_cfg(tmp_path)), "--output-dir", str(blocker / "sub")]) == 4


def test_invariant_violation_exits_3(tmp_path, monkeypatch):
    def broken(cfg):
        return experiments.ExperimentResult([], {}, ["synthetic violation"])

    monkeypatch.setitem(experiments.REGISTRY, "scattering_study", broken)
    out = tmp_path / "out"
    assert cli.main(["run", str(scatter_cfg(tmp_path)), "--output-dir", str(out)]) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "invariant_violation"
    assert "synthetic violation" in manifest["message"]


def test_numerical_failure_exits_3(tmp_path, monkeypatch):
    from fluctlab.effective import BlowUpError

    def blows(cfg):
        raise BlowUpError("field exceeded guard")

    monkeypatch.setitem(experiments.REGISTRY, "scattering_study", blows)
    assert cli.main(["run", str(scatter_cfg(tmp_path)), "--output-dir", str(tmp_path / "o")]) == 3


def test_zero_potential_gives_zero_scattering_length(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(scatter_cfg(tmp_path, "zero")), "--output-dir", str(out)]) == 0
    rows = read_csv(out / "scattering.csv")
    assert len(rows) == 2
    assert all(float(r["a0"]) == 0.0 for r in rows)


def test_reruns_are_byte_identical(tmp_path):
    cfg = scatter_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(cfg), "--output-dir", str(a)]) == 0
    assert cli.main(["run", str(cfg), "--output-dir", str(b)]) == 0
    assert (a / "scattering.csv").read_bytes() == (b / "scattering.csv").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    for key in ("experiment", "config", "code_version", "started_utc", "wall_time_s", "status", "outputs"):
        assert key in manifest
    assert manifest["outputs"] == ["scattering.csv"]
    assert not list(a.glob("*.tmp"))


def test_row_count_matches_sweep(tmp_path):
    cfg = write(tmp_path, """
experiment = "mean_field_convergence"
[sweep]
N = [2, 4]
[time]
t_grid = [0.0, 0.5, 1.0]
[initial]
kind = "modes"
coefficients = [[1.0, 0.0], [0.5, 0.0], [0.0, 0.3]]
""")
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--output-dir", str(out)]) == 0
    rows = read_csv(out / "mean_field.csv")
    assert len(rows) == 2 * 3
    assert {(float(r["N"]), float(r["t"])) for r in rows} == {(n, t) for n in (2, 4) for t in (0, 0.5, 1)}


def test_list_experiments(capsys):
    assert cli.main(["list-experiments"]) == 0
    assert capsys.readouterr().out.split() == list(EXPERIMENTS)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fluctlab.cli", "run", str(CONFIGS / "invalid_beta.toml"),
                           "--output-dir", str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 2
