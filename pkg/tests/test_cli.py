import csv
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from spinbath.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SIMPLE = """
[system]
model = sb
epsilon = 0
initial_state = up
[bath]
kondo = 0
[grid]
dt = 0.1
steps = 100
[output]
prefix = free
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_free_evolution(tmp_path):
    cfg = write(tmp_path, SIMPLE)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    data = np.loadtxt(tmp_path / "o" / "free.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 2], np.sin(data[:, 0] / 2) ** 2, atol=1e-10)
    meta = json.load(open(tmp_path / "o" / "free.json"))
    assert "[system]" in meta["config"]


def test_missing_field_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, SIMPLE.replace("epsilon = 0", ""))
    assert main(["simulate", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert err.startswith("spinbath:validation:epsilon:")


def test_missing_file_exit_code(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 2


def test_memory_budget_exit_code(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, SIMPLE)
    monkeypatch.setenv("SPINBATH_MEMORY_BUDGET", "1000")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 4
    assert "spinbath:memory:" in capsys.readouterr().err


def test_numerical_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, SIMPLE.replace("kondo = 0", "kondo = 0.01"))
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path),
                 "--override", "atol=1e-300", "--override", "rtol=1e-300"])
    assert code == 3
    assert "spinbath:numerical:QuadratureError" in capsys.readouterr().err


def test_eta_dump(tmp_path):
    cfg = write(tmp_path, SIMPLE.replace("kondo = 0", "kondo = 0.01"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path), "--dump-eta",
                 "--override", "steps=5"]) == 0
    assert (tmp_path / "free_eta.csv").exists()


def test_simulate_scenario_config_matches_scenario_command(tmp_path):
    cfg = str(CONFIGS / "fig4.ini")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["scenario", "fig4", "--out", str(tmp_path / "b")]) == 0
    files = sorted((tmp_path / "a" / "fig4").iterdir())
    assert len(files) == 13
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / "fig4" / f.name).read_bytes()


def test_scenario_overrides(tmp_path):
    assert main(["scenario", "fig6", "--out", str(tmp_path), "--override", "duration=50",
                 "--override", "omegas=7,9"]) == 0
    rep = json.load(open(tmp_path / "fig6" / "report.json"))
    assert [r["params"]["iho_frequency"] for r in rep["runs"]] == [7, 9]
    assert rep["preset"]["duration"] == 50


def test_scenario_bad_override(tmp_path):
    assert main(["scenario", "fig5", "--out", str(tmp_path), "--override", "bogus=1"]) == 2


def test_bathinfo_tables(tmp_path):
    cfg = write(tmp_path, """
[system]
model = sib
epsilon = 1
[bath]
band = medium
[grid]
steps = 10
""")
    assert main(["bathinfo", "--config", cfg, "--out", str(tmp_path)]) == 0
    dens = np.loadtxt(tmp_path / "density.csv", delimiter=",", skiprows=1)
    resp = np.loadtxt(tmp_path / "response.csv", delimiter=",", skiprows=1)
    info = json.load(open(tmp_path / "bathinfo.json"))
    assert dens.shape[1] == 3 and resp.shape[1] == 3
    assert info["ohmic_peak"] == pytest.approx(11.0)
    assert info["iho_frequency_in_band"]
    assert 0.5 <= info["memory_time"] <= 3.0
    assert resp[0, 2] == 0.0


def test_bathinfo_resonance_with_weak_damping(tmp_path):
    cfg = write(tmp_path, """
[system]
model = sib
epsilon = 1
[bath]
band = medium
damping = 0.5
cutoff = 1000
[grid]
steps = 10
""")
    assert main(["bathinfo", "--config", cfg, "--out", str(tmp_path), "--points", "4001"]) == 0
    info = json.load(open(tmp_path / "bathinfo.json"))
    assert any(abs(w - 10.0) < 0.2 for w in info["effective_local_maxima"])


def test_bathinfo_zero_coupling(tmp_path):
    cfg = write(tmp_path, "[system]\nmodel=sb\nepsilon=1\n[bath]\nkondo=0\n[grid]\nsteps=1\n")
    assert main(["bathinfo", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert not np.any(np.loadtxt(tmp_path / "density.csv", delimiter=",", skiprows=1)[:, 1:])
    assert not np.any(np.loadtxt(tmp_path / "response.csv", delimiter=",", skiprows=1)[:, 1:])


ORACLE = """
[system]
model = sb
epsilon = 2
[grid]
dt = 0.25
steps = 6
[discrete]
tunneling = {tunneling}
fock_cutoff = {n}
modes = {modes}
[output]
prefix = oc
"""


def test_oracle_zero_coupling(tmp_path):
    cfg = write(tmp_path, ORACLE.format(tunneling=1, n=3, modes=""))
    assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path)]) == 0


def test_oracle_dephasing(tmp_path):
    cfg = write(tmp_path, ORACLE.format(tunneling=0, n=30, modes="1.0:0.005"))
    assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.load(open(tmp_path / "oc_oracle.json"))
    assert len(rep["checks"]) == 2 and rep["passed"]


def test_oracle_tolerance_failure(tmp_path):
    # Two Fock levels cannot represent a strongly coupled mode.
    cfg = write(tmp_path, ORACLE.format(tunneling=1, n=2, modes="0.2:0.5"))
    assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path)]) == 5
    assert not json.load(open(tmp_path / "oc_oracle.json"))["passed"]


def test_sweep_reproduces_oscillator_ordering(tmp_path):
    cfg = write(tmp_path, (CONFIGS / "sweep.ini").read_text())
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--threads", "2"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "omega_sweep_sweep.csv")))
    assert [float(r["iho_frequency"]) for r in rows] == [6, 8, 10]
    tau1 = [float(r["tau1"]) for r in rows]
    tau2 = [float(r["tau2"]) for r in rows]
    assert tau1[0] > tau1[1] > tau1[2] and tau2[0] > tau2[1] > tau2[2]


def test_sweep_coupling_product(tmp_path):
    cfg = write(tmp_path, (CONFIGS / "sweep.ini").read_text().replace(
        "iho_frequency = 6, 8, 10", "coupling_product = 1, 1.125"))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "omega_sweep_sweep.csv")))
    tau2 = [float(r["tau2"]) for r in rows]
    assert tau2[0] > tau2[1]


def test_sweep_empty_grid(tmp_path):
    cfg = write(tmp_path, SIMPLE + "\n[sweep]\nkondo =\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_sweep_without_sweep_section(tmp_path):
    assert main(["sweep", "--config", write(tmp_path, SIMPLE), "--out", str(tmp_path)]) == 2


def test_sweep_partial_failure(tmp_path):
    # unattainable tolerances fail the coupled point only
    cfg = write(tmp_path, SIMPLE + "\n[numerics]\natol = 1e-300\nrtol = 1e-300\n"
                + "\n[sweep]\nkondo = 0, 0.01\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 3
    rows = list(csv.DictReader(open(tmp_path / "free_sweep.csv")))
    assert len(rows) == 2 and any(r["error"] for r in rows)
