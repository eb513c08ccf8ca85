"""
Independent reference solutions used to validate the propagator.

* :func:`discrete_alpha` is the response function of finitely many modes.
* :func:`dephasing_exact` is the closed-form coherence decay at zero tunnelling.
* :func:`exact_diag_evolve` propagates qubit plus truncated oscillators exactly.
* :func:`path_sum` enumerates every forward/backward path on a short grid.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from spinbath.bath import BathSpec, DiscreteModes, FrequencyBand, coth, evaluate_j
from spinbath.influence import EtaTable, TimeGrid
from spinbath.propagator import (QubitHamiltonian, Trajectory, S_MINUS, S_PLUS,
                                 SIGMA_Z, density_matrix,
                                 free_propagator, forward_backward_kernel)

__all__ = [
    "DiscreteBath",
    "FockTruncationWarning",
    "discrete_alpha",
    "discretize",
    "dephasing_exact",
    "exact_diag_evolve",
    "path_sum",
]

MAX_MODES = 4
MAX_DIMENSION = 10_000


class FockTruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DiscreteBath:
    """A few explicit oscillators, each truncated to ``fock_cutoff`` levels.

    Modes are ``(omega_i, w_i)`` with ``w_i = c_i^2 / (2 m_i omega_i)``.
    Masses are set to 1; only ``w_i`` reaches the dynamics.
    """

    modes: Tuple[Tuple[float, float], ...]
    fock_cutoff: int = 10

    def __post_init__(self):
        modes = DiscreteModes(self.modes).modes
        object.__setattr__(self, "modes", modes)
        if len(modes) > MAX_MODES:
            raise ValueError(f"at most {MAX_MODES} modes, got {len(modes)}")
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be >= 2")
        if self.dimension > MAX_DIMENSION:
            raise ValueError(
                f"Hilbert dimension {self.dimension} exceeds {MAX_DIMENSION}")

    @property
    def dimension(self) -> int:
        return 2 * self.fock_cutoff ** len(self.modes)

    def as_density(self) -> DiscreteModes:
        return DiscreteModes(self.modes)


def _modes(bath) -> DiscreteModes:
    if isinstance(bath, DiscreteBath):
        return bath.as_density()
    if isinstance(bath, DiscreteModes):
        return bath
    raise TypeError(f"expected discrete modes, got {type(bath).__name__}")


def discrete_alpha(bath, beta: float, t):
    """``sum_i w_i [coth(beta w_i / 2) cos(w_i t) - i sin(w_i t)]``."""
    modes = _modes(bath)
    ts = np.asarray(t, dtype=float)
    if np.any(ts < 0):
        raise ValueError("t must be >= 0")
    w, g = modes.frequencies, modes.weights
    if w.size == 0:
        out = np.zeros(ts.shape, dtype=complex)
    else:
        phase = ts[..., None] * w
        out = np.sum(g * (coth(0.5 * beta * w) * np.cos(phase) - 1j * np.sin(phase)),
                     axis=-1)
    return out if out.ndim else complex(out)


def discretize(density, band: FrequencyBand, n: int) -> DiscreteModes:
    """Gauss-Legendre discretisation of a continuous density on ``band``.

    Weights are ``J(omega_i) * g_i / pi`` with ``g_i`` the quadrature
    weights, so the mode sum reproduces the band-limited response function.
    """
    x, gw = leggauss(n)
    half = 0.5 * band.width
    nodes = band.omega_min + half * (x + 1.0)
    weights = evaluate_j(density, nodes) * gw * half / np.pi
    return DiscreteModes(tuple(zip(nodes, weights)))


def _lineshape_real(bath, beta, t):
    """``int_0^t dt' int_0^t' dt'' Re alpha(t' - t'')``."""
    if isinstance(bath, BathSpec):
        if isinstance(bath.density, DiscreteModes):
            return _lineshape_real(bath.density, bath.beta, t)
        lo, hi = bath.integration_range
        # The integrand stays smooth at omega -> 0: (1 - cos wt)/w^2 -> t^2/2.
        n = max(64, int(np.ceil((hi - lo) * t / np.pi)) * 4)
        edges = np.linspace(lo, hi, n + 1)
        x, gw = leggauss(24)
        a, b = edges[:-1, None], edges[1:, None]
        nodes = ((a + b) * 0.5 + 0.5 * (b - a) * x).ravel()
        scale = (0.5 * (b - a) * gw).ravel()
        j = evaluate_j(bath.density, nodes)
        kernel = 2.0 * np.sin(0.5 * nodes * t) ** 2 / nodes**2
        vals = j * coth(0.5 * bath.beta * nodes) * kernel / np.pi
        return float(np.dot(vals, scale))
    modes = _modes(bath)
    w, g = modes.frequencies, modes.weights
    return float(np.sum(g * coth(0.5 * beta * w) * (1 - np.cos(w * t)) / w**2))


def dephasing_exact(bath: Union[BathSpec, DiscreteBath, DiscreteModes],
                    epsilon: float, rho0, t, beta: float = None):
    """Coherence ``rho_12(t)`` for zero tunnelling.

    ``rho_12(t) = rho_12(0) exp(-i eps t) exp(-4 int_0^t int_0^t' Re alpha)``.
    Pass ``beta`` for discrete baths; a :class:`BathSpec` carries its own.
    """
    rho0 = density_matrix(rho0)
    if isinstance(bath, BathSpec):
        beta = bath.beta
    elif beta is None:
        raise ValueError("beta is required for a discrete bath")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be >= 0")
    g = np.array([_lineshape_real(bath, beta, x) for x in ts])
    out = rho0[0, 1] * np.exp(-1j * epsilon * ts) * np.exp(-4.0 * g)
    return out if np.ndim(t) else complex(out[0])


def _ladder(n):
    return np.diag(np.sqrt(np.arange(1, n)), 1)


def _embed(op, position, dims):
    out = np.array([[1.0]])
    for i, d in enumerate(dims):
        out = np.kron(out, op if i == position else np.eye(d))
    return out


def exact_diag_evolve(h: QubitHamiltonian, bath: DiscreteBath, rho0,
                      grid: TimeGrid, beta: float) -> Trajectory:
    """Exact reduced dynamics of the qubit coupled to ``bath``.

    The Hamiltonian is ``H0 + sum_i [omega_i b_i^+ b_i + sqrt(w_i) sigma_z
    (b_i + b_i^+) + w_i / omega_i]`` on qubit x truncated Fock spaces, and the
    initial state is ``rho0`` times the (truncated) thermal state of each
    mode. Propagation uses the eigendecomposition of the full Hamiltonian.
    """
    rho0 = density_matrix(rho0)
    n = bath.fock_cutoff
    nm = len(bath.modes)
    dims = [2] + [n] * nm
    a = _ladder(n)
    number = np.diag(np.arange(n, dtype=float))
    H = _embed(h.matrix(), 0, dims)
    sz = np.diag(_embed(SIGMA_Z, 0, dims)).real
    bath_state = np.array([[1.0]])
    for i, (w, g) in enumerate(bath.modes):
        H = H + w * _embed(number, i + 1, dims)
        H = H + np.sqrt(g) * sz[:, None] * _embed(a + a.T, i + 1, dims)
        H = H + (g / w) * np.eye(H.shape[0])
        pop = np.exp(-beta * w * np.arange(n))
        bath_state = np.kron(bath_state, np.diag(pop / pop.sum()))
    R0 = np.kron(rho0, bath_state)

    if not np.any(H.imag):
        # Real symmetric: real eigenvectors, several times cheaper.
        H = np.ascontiguousarray(H.real)
    energies, V = np.linalg.eigh(H)
    if np.isrealobj(V):
        re, im = (np.ascontiguousarray(x) for x in (R0.real, R0.imag))
        R_eig = V.T @ re @ V + 1j * (V.T @ im @ V)
    else:
        R_eig = V.conj().T @ R0 @ V
    bath_dim = H.shape[0] // 2
    # Partial trace and top-level projector expressed in the eigenbasis, so
    # each time step is elementwise.
    blocks = V.reshape(2, bath_dim, -1)
    trace_ops = [[blocks[a].T @ blocks[b].conj() for b in range(2)] for a in range(2)]
    top_rows = V[np.tile(_top_level_mask(n, nm), 2)]
    top_op = top_rows.T @ top_rows.conj()
    states = np.empty((grid.steps + 1, 2, 2), dtype=complex)
    drift = np.zeros(grid.steps + 1)
    total_trace = np.zeros(grid.steps + 1)
    energy = np.zeros(grid.steps + 1)
    top = 0.0
    for k, t in enumerate(grid.times):
        ph = np.exp(-1j * energies * t)
        M = ph[:, None] * R_eig * ph.conj()[None, :]
        rho = np.array([[np.sum(M * trace_ops[a][b]) for b in range(2)] for a in range(2)])
        drift[k] = abs(np.trace(rho) - 1.0)
        states[k] = rho
        top = max(top, float(np.sum(M * top_op).real))
        diag = M.diagonal().real
        total_trace[k] = diag.sum()
        energy[k] = energies @ diag
    notes = []
    if top > 1e-6:
        msg = f"top Fock level population {top:.2e} exceeds 1e-6"
        notes.append(msg)
        warnings.warn(msg, FockTruncationWarning, stacklevel=2)
    meta = {"hamiltonian": h, "bath": bath, "beta": beta, "rho0": rho0,
            "method": "exact-diagonalization", "warnings": notes,
            "top_level_population": top, "total_trace": total_trace,
            "total_energy": energy}
    return Trajectory(grid=grid, states=states, trace_drift=drift, metadata=meta)


def _top_level_mask(n, nm):
    """Bath basis states where any mode sits in its highest Fock level."""
    if nm == 0:
        return np.zeros(1, dtype=bool)
    idx = np.indices([n] * nm).reshape(nm, -1)
    return np.any(idx == n - 1, axis=0)


def path_sum(h: QubitHamiltonian, eta: EtaTable, rho0, last: int) -> np.ndarray:
    """Reduced density matrix at step ``last`` by brute-force enumeration.

    Sums over all ``4**(last + 1)`` forward/backward paths with the full
    influence functional. Every pair with lag up to ``eta.kmax`` is
    included, so with ``kmax >= last`` this is the untruncated path sum.
    """
    rho0 = density_matrix(rho0)
    if last == 0:
        return rho0.copy()
    if last > 9:
        raise ValueError("brute-force path sums are limited to 9 steps")
    T = forward_backward_kernel(free_propagator(h, eta.dt))
    paths = np.array(list(itertools.product(range(4), repeat=last + 1)))
    weight = rho0.reshape(4)[paths[:, 0]].astype(complex)
    for k in range(1, last + 1):
        weight = weight * T[paths[:, k], paths[:, k - 1]]
    log_if = np.zeros(len(paths), dtype=complex)
    sp, sm = S_PLUS[paths], S_MINUS[paths]
    for k in range(last + 1):
        for kp in range(max(0, k - eta.kmax), k + 1):
            c = eta.coefficient(k, kp, last)
            log_if -= (sp[:, k] - sm[:, k]) * (c * sp[:, kp] - np.conj(c) * sm[:, kp])
    weight = weight * np.exp(log_if)
    out = np.bincount(paths[:, -1], weights=weight.real, minlength=4) \
        + 1j * np.bincount(paths[:, -1], weights=weight.imag, minlength=4)
    return out.reshape(2, 2)
