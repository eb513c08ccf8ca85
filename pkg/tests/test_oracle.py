import math
import warnings

import numpy as np
import pytest

from spinbath.bath import BathSpec, DiscreteModes, Ohmic, band_presets
from spinbath.influence import TimeGrid
from spinbath.oracle import (DiscreteBath, FockTruncationWarning, dephasing_exact,
                             exact_diag_evolve)
from spinbath.propagator import (QubitHamiltonian, evolve, free_propagator,
                                 maximal_coherent)
from spinbath.units import REFERENCE

BETA = REFERENCE.beta
THREE_MODES = ((0.5, 0.004), (1.2, 0.006), (2.5, 0.008))


def test_dimension_guard():
    with pytest.raises(ValueError):
        DiscreteBath(((1, .01),) * 5)
    with pytest.raises(ValueError):
        DiscreteBath(((1, .01),) * 4, fock_cutoff=11)


def test_zero_coupling_dephasing_is_rotation():
    bath = BathSpec(Ohmic(0.0, 0.1), BETA, band_presets().low)
    t = np.linspace(0, 10, 11)
    rho12 = dephasing_exact(bath, 2.0, maximal_coherent(), t)
    np.testing.assert_allclose(rho12, 0.5 * np.exp(-2j * t), atol=1e-15)


def test_dephasing_monotone_at_reference_parameters():
    for band in ("low", "medium"):
        b = getattr(band_presets(), band)
        bath = BathSpec(Ohmic(0.01, b.omega_max), BETA, b)
        mag = np.abs(dephasing_exact(bath, 10.0, maximal_coherent(), np.linspace(0, 10, 101)))
        assert np.all(np.diff(mag) <= 1e-15)


def test_zero_coupling_modes_give_free_rabi():
    h = QubitHamiltonian(0.4, 1.0)
    grid = TimeGrid(0.3, 20)
    traj = exact_diag_evolve(h, DiscreteBath(((1.0, 0.0), (2.0, 0.0)), 8),
                             maximal_coherent(), grid, BETA)
    K = free_propagator(h, grid.dt)
    rho = maximal_coherent()
    for k in range(grid.steps + 1):
        np.testing.assert_allclose(traj.states[k], rho, atol=1e-10)
        rho = K @ rho @ K.conj().T


def test_single_mode_dephasing_cross_oracle():
    bath = DiscreteBath(((1.0, 0.005),), fock_cutoff=30)
    grid = TimeGrid(0.25, 20)
    traj = exact_diag_evolve(QubitHamiltonian(2.0, 0.0), bath, maximal_coherent(), grid, BETA)
    ana = dephasing_exact(bath, 2.0, maximal_coherent(), grid.times, beta=BETA)
    np.testing.assert_allclose(traj.rho12, ana, rtol=1e-3)


@pytest.fixture(scope="module")
def three_mode():
    bath = DiscreteBath(THREE_MODES, fock_cutoff=10)
    grid = TimeGrid(0.5, 8)
    h = QubitHamiltonian(1.0, 1.0)
    return h, bath, grid, exact_diag_evolve(h, bath, maximal_coherent(), grid, BETA)


def test_exact_conservation(three_mode):
    *_, traj = three_mode
    tt = traj.metadata["total_trace"]
    e = traj.metadata["total_energy"]
    assert np.max(np.abs(tt - 1)) < 1e-10
    assert np.max(np.abs(e - e[0])) <= 1e-8 * abs(e[0])


def test_reduced_state_hermitian_positive(three_mode):
    *_, traj = three_mode
    s = traj.states
    assert np.max(np.abs(s - np.conj(np.swapaxes(s, 1, 2)))) < 1e-10
    assert np.min(np.linalg.eigvalsh(s)) > -1e-10


def test_fock_truncation_converged(three_mode):
    h, bath, grid, traj = three_mode
    more = exact_diag_evolve(h, DiscreteBath(THREE_MODES, 11), maximal_coherent(), grid, BETA)
    assert np.max(np.abs(more.states - traj.states)) < 1e-6


def test_fock_truncation_warning():
    with pytest.warns(FockTruncationWarning):
        exact_diag_evolve(QubitHamiltonian(1, 1), DiscreteBath(((0.3, 0.05),), 3),
                          maximal_coherent(), TimeGrid(0.5, 4), BETA)


def test_full_memory_propagator_vs_exact(three_mode):
    h, bath, grid, traj = three_mode
    q = evolve(h, BathSpec(bath.as_density(), BETA), grid, grid.steps)
    assert np.max(np.abs(q.states - traj.states)) < 5e-2
