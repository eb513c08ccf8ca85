import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinbath.analysis import (UndefinedTimescaleError, equilibrium_rho11, extract_tau1,
                               extract_tau2, kmax_convergence, preset, scenario_run)
from spinbath.influence import TimeGrid
from spinbath.propagator import Trajectory


def synthetic(rho11, rho12, dt):
    n = len(rho11) - 1
    states = np.zeros((n + 1, 2, 2), dtype=complex)
    states[:, 0, 0] = rho11
    states[:, 1, 1] = 1 - np.asarray(rho11)
    states[:, 0, 1] = rho12
    states[:, 1, 0] = np.conj(rho12)
    return Trajectory(TimeGrid(dt, n), states, np.zeros(n + 1), {})


@pytest.mark.parametrize("tau", [1.0, 37.0, 850.0])
def test_tau2_of_exponential(tau):
    t = np.arange(0, 100 * tau + 1e-9, tau / 10)
    traj = synthetic(np.full(t.size, 0.5), 0.5 * np.exp(-t / tau), tau / 10)
    assert extract_tau2(traj).time == pytest.approx(tau, rel=0.01)


def test_tau2_not_reached_without_decay():
    traj = synthetic(np.full(11, 0.5), np.full(11, 0.5 + 0j), 0.1)
    ts = extract_tau2(traj)
    assert not ts.reached and math.isnan(ts.time)


def test_tau2_undefined_for_zero_coherence():
    with pytest.raises(UndefinedTimescaleError):
        extract_tau2(synthetic(np.full(5, 0.5), np.zeros(5), 0.1))


@pytest.mark.parametrize("tau", [2.0, 100.0])
def test_tau1_of_exponential(tau):
    dt = tau / 10
    t = np.arange(0, 50 * tau + 1e-9, dt)
    traj = synthetic(0.2 + 0.3 * np.exp(-t / tau), np.zeros(t.size), dt)
    assert extract_tau1(traj, rabi_frequency=0.0).time == pytest.approx(tau, rel=0.02)


def test_tau1_ignores_oscillation_nodes():
    dt, tau = 0.05, 30.0
    t = np.arange(0, 300, dt)
    r = 0.2 + 0.3 * np.exp(-t / tau) * np.cos(1.4 * t) ** 2
    got = extract_tau1(synthetic(r, np.zeros(t.size), dt), rabi_frequency=1.4).time
    assert got > 5.0


def test_tau1_undefined_at_equilibrium():
    with pytest.raises(UndefinedTimescaleError):
        extract_tau1(synthetic(np.full(50, 0.3), np.zeros(50), 0.1), rabi_frequency=1.0)


@settings(max_examples=50, deadline=None)
@given(scale=st.floats(1e-3, 1e3), tau=st.floats(0.5, 20))
def test_tau2_rescaling_invariance(scale, tau):
    t = np.arange(0, 10 * tau, tau / 7)
    coh = 0.5 * np.exp(-t / tau) * (1 + 0.1 * np.cos(3 * t))
    a = extract_tau2(synthetic(np.full(t.size, 0.5), coh, tau / 7)).time
    b = extract_tau2(synthetic(np.full(t.size, 0.5), scale * coh, tau / 7)).time
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(tau=st.floats(0.5, 20), phase=st.floats(0, 6))
def test_tau2_resampling(tau, phase):
    dt = tau / 9
    t = np.arange(0, 10 * tau, dt)
    coh = 0.5 * np.exp(-t / tau) * np.exp(1j * (phase + 5 * t))
    fine = extract_tau2(synthetic(np.full(t.size, 0.5), coh, dt)).time
    coarse = extract_tau2(synthetic(np.full(t[::2].size, 0.5), coh[::2], 2 * dt)).time
    assert abs(fine - coarse) <= 2 * dt


def test_equilibrium_is_tail_mean():
    r = np.linspace(1, 0, 101)
    assert equilibrium_rho11(synthetic(r, np.zeros(101), 0.1)) == pytest.approx(np.mean(r[-20:]))


def test_presets():
    assert [v.label for v in preset("fig5").variants] == ["SB", "SIB lk=1", "SIB lk=1.125"]
    assert preset("fig4").band == "low"
    assert [v.iho_frequency for v in preset("fig6", omegas=(5, 7)).variants] == [5, 7]
    assert preset("fig5", kmax=4).kmax == 4
    with pytest.raises(KeyError):
        preset("fig9")


def test_kmax_convergence_zero_coupling():
    rows = kmax_convergence(preset("fig5", kondo=0.0), [2, 3, 4])
    assert all(d < 1e-13 for *_, d in rows)


def test_kmax_convergence_reference_parameters():
    rows = kmax_convergence(preset("fig5"), [3, 4, 5])
    (_, _, d3), (_, _, d4) = rows
    assert d3 < 0.02 and d4 <= d3


def test_scenario_bundle_and_determinism(tmp_path):
    p = preset("fig6", duration=400.0)
    a = scenario_run(p)
    b = scenario_run(p)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    rep = json.load(open(tmp_path / "a" / "report.json"))
    assert rep["scenario"] == "fig6" and len(rep["runs"]) == 3
    assert {"tau1", "tau2", "equilibrium_rho11", "flags", "params"} <= set(rep["runs"][0])
    assert (tmp_path / "a" / "run0_sib_w0_6_abs_rho12.dat").exists()


def test_parallel_scenario_matches_serial():
    p = preset("fig5", duration=100.0)
    a, b = scenario_run(p), scenario_run(p, workers=2)
    for ra, rb in zip(a.results, b.results):
        assert np.array_equal(ra.coherence.states, rb.coherence.states)
        assert np.array_equal(ra.population.states, rb.population.states)
