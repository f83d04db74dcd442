import json

import numpy as np
import pytest
import yaml

from iongrad.cli import main
from iongrad.config import default_config_text


def _cfg(tmp_path, **patch):
    data = yaml.safe_load(default_config_text())
    for section, vals in patch.items():
        data[section].update(vals)
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return p


def _ideal(tmp_path, n_ions=2):
    return _cfg(
        tmp_path,
        # a stiff trap pushes the breathing mode far from the drive, leaving a single effective mode
        crystal={"n_ions": n_ions, "axial_hz": 30.0e6, "radial_x_hz": 90.0e6, "radial_y_hz": 96.0e6},
        drive={"target_ions": [0, 1]},
        noise={"t1_s": None, "t2_s": None, "motional_coherence_s": None, "motional_coherence_radial_s": None,
               "heating_rate_per_ion": 0.0, "scattering_rayleigh": 0.0, "spam_error": 0.0},
        motion={"nbar_axial": 0.0, "nbar_radial": 0.0},
    )


def test_modes_paper_default(tmp_path):
    assert main(["modes", "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "mode_report.json").read_text())
    assert rep["spacing"]["axial"]["breathing_ratio"] == pytest.approx(np.sqrt(3), rel=1e-9)
    assert max(rep["orthonormality_error"].values()) < 1e-12
    lines = (tmp_path / "o" / "spectra.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 8


def test_modes_single_ion(tmp_path):
    cfg = _cfg(tmp_path, crystal={"n_ions": 1}, drive={"target_ions": [0, 0]})
    # a one-ion chain cannot host a gate pair, so the config is rejected up front
    assert main(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_gate_ideal(tmp_path):
    out = tmp_path / "o"
    assert main(["gate", "--config", str(_ideal(tmp_path)), "--out", str(out)]) == 0
    s = json.loads((out / "gate_summary.json").read_text())
    assert s["gate_time_s"] == pytest.approx(200e-6)
    assert abs(s["chi"]) == pytest.approx(np.pi, abs=1e-2)  # includes the far spectator
    assert s["fidelity_lindblad"] == pytest.approx(1.0, abs=1e-6)
    assert s["fidelity_closed_form"] == pytest.approx(1.0, abs=1e-6)
    assert (out / "trajectories.csv").exists() and (out / "phases.json").exists()


def test_gate_radial_direction(tmp_path):
    out = tmp_path / "o"
    assert main(["gate", "--direction", "radial", "--out", str(out)]) == 0
    assert json.loads((out / "gate_summary.json").read_text())["direction"] == "radial_x"


def test_parity_and_scan(tmp_path):
    cfg = _ideal(tmp_path)
    out = tmp_path / "o"
    assert main(["parity", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    s = json.loads((out / "parity_summary.json").read_text())
    assert s["single_gate"]["exact"]["amplitude"] == pytest.approx(1.0, abs=1e-10)
    rows = (out / "parity_sampled.csv").read_text().splitlines()[1:]
    p = np.array([float(r.split(",")[1]) for r in rows])
    e = np.array([float(r.split(",")[2]) for r in rows])
    assert np.allclose(e, np.sqrt((1 - p**2) / 200))
    assert main(["scan", "--config", str(cfg), "--out", str(out), "--plots"]) == 0
    assert (out / "deflector_scan.csv").exists() and (out / "residual_sampled.svg").exists()


def test_format_switch(tmp_path):
    out = tmp_path / "o"
    assert main(["modes", "--format", "csv", "--out", str(out)]) == 0
    assert (out / "spectra.csv").exists() and not (out / "mode_report.json").exists()


def test_budget_and_sweep_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("IONGRAD_THREADS", "2")
    cfg = _cfg(tmp_path, sweep={"n_ions": [2, 4]})
    for run in ("a", "b"):
        assert main(["budget", "--config", str(cfg), "--out", str(tmp_path / run), "--seed", "1"]) == 0
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / run), "--seed", "1"]) == 0
    for name in ("budget.txt", "budget.csv", "budget.json", "sweep.csv", "sweep.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len((tmp_path / "a" / "sweep.csv").read_text().splitlines()) == 3


def test_exit_codes(tmp_path):
    assert main(["modes", "--config", str(tmp_path / "nope.yaml")]) == 2
    unstable = _cfg(tmp_path, crystal={"axial_hz": 1.0e6, "radial_x_hz": 1.2e6})
    assert main(["modes", "--config", str(unstable), "--out", str(tmp_path / "o")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["modes", "--out", str(blocker / "sub")]) == 4
