"""
Reduced qubit dynamics by iterative tensor multiplication over spin paths.

Basis convention: row/column 0 is the sigma_z = +1 state, so ``rho[0, 0]``
is the +1 population (rho_11) and ``rho[0, 1]`` is rho_12. A forward/backward
slice state ``(s+, s-)`` is packed as ``a = 2 * i+ + i-`` with ``i = 0`` for
``s = +1`` and ``i = 1`` for ``s = -1``.

The augmented tensor keeps one axis of length 4 per retained path point,
oldest first, newest last.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from spinbath.bath import BathSpec
from spinbath.influence import EtaTable, TimeGrid, eta_coefficients

__all__ = [
    "QubitHamiltonian",
    "Trajectory",
    "MemoryBudgetError",
    "SIGMA_X",
    "SIGMA_Z",
    "S_PLUS",
    "S_MINUS",
    "density_matrix",
    "maximal_coherent",
    "free_propagator",
    "forward_backward_kernel",
    "influence_weight",
    "influence_matrix",
    "evolve",
    "memory_budget",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SPIN = np.array([1.0, -1.0])
S_PLUS = np.repeat(SPIN, 2)
S_MINUS = np.tile(SPIN, 2)

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
BUDGET_ENV = "SPINBATH_MEMORY_BUDGET"


class MemoryBudgetError(MemoryError):
    pass


@dataclass(frozen=True)
class QubitHamiltonian:
    """``H0 = (epsilon sigma_z + delta sigma_x) / 2`` with hbar = 1."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and np.isfinite(self.delta)):
            raise ValueError("Hamiltonian parameters must be finite")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta!r}")

    @property
    def rabi_frequency(self) -> float:
        return float(np.hypot(self.epsilon, self.delta))

    def matrix(self) -> np.ndarray:
        return 0.5 * (self.epsilon * SIGMA_Z + self.delta * SIGMA_X)

    def gibbs_rho11(self, beta: float) -> float:
        """Population of the +1 state in the Gibbs state of ``H0``."""
        om = self.rabi_frequency
        if om == 0:
            return 0.5
        return 0.5 * (1.0 - np.tanh(0.5 * beta * om) * self.epsilon / om)


def density_matrix(rho, atol: float = 1e-8) -> np.ndarray:
    """Validate a 2x2 density matrix and return it as a complex array."""
    rho = np.array(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"density matrix must be 2x2, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=1e-12):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-12:
        raise ValueError(f"density matrix trace is {np.trace(rho).real}, not 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def maximal_coherent() -> np.ndarray:
    return np.full((2, 2), 0.5, dtype=complex)


def free_propagator(h: QubitHamiltonian, dt: float) -> np.ndarray:
    """Closed-form ``exp(-i H0 dt)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    om = h.rabi_frequency
    if om == 0:
        return np.eye(2, dtype=complex)
    gen = (h.epsilon * SIGMA_Z + h.delta * SIGMA_X) / om
    return np.cos(0.5 * om * dt) * np.eye(2) - 1j * np.sin(0.5 * om * dt) * gen


def forward_backward_kernel(K: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """``T[(s+', s-'), (s+, s-)] = K[s+', s+] * conj(K[s-', s-])``."""
    K = np.asarray(K, dtype=complex)
    if K.shape != (2, 2) or not np.allclose(K.conj().T @ K, np.eye(2), atol=atol):
        raise ValueError("short-time propagator must be a 2x2 unitary")
    return np.kron(K, K.conj())


def _phase(eta: complex, sp, sm, spp, smp):
    return -(sp - sm) * (eta * spp - np.conj(eta) * smp)


def influence_weight(eta: EtaTable, k: int, kp: int, s_k, s_kp,
                     last: Optional[int] = None) -> complex:
    """Influence factor linking path points ``k >= kp``.

    ``s_k`` and ``s_kp`` are ``(s+, s-)`` pairs of +-1 spins.
    """
    c = eta.coefficient(k, kp, last)
    return complex(np.exp(_phase(c, s_k[0], s_k[1], s_kp[0], s_kp[1])))


def influence_matrix(coefficient: complex) -> np.ndarray:
    """4x4 factor ``W[a_k, a_k']`` for one coefficient."""
    return np.exp(_phase(coefficient, S_PLUS[:, None], S_MINUS[:, None],
                         S_PLUS[None, :], S_MINUS[None, :]))


def _self_factor(coefficient: complex) -> np.ndarray:
    return np.exp(_phase(coefficient, S_PLUS, S_MINUS, S_PLUS, S_MINUS))


def memory_budget() -> int:
    value = os.environ.get(BUDGET_ENV)
    return int(float(value)) if value else DEFAULT_MEMORY_BUDGET


def _required_bytes(kmax: int) -> int:
    # extended tensor, one broadcast temporary and the retained tensor
    return 16 * (2 * 4 ** (kmax + 1) + 4**kmax)


@dataclass
class Trajectory:
    """Reduced density matrices at ``t_k = k dt`` for ``k = 0..N``."""

    grid: TimeGrid
    states: np.ndarray
    trace_drift: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def rho11(self) -> np.ndarray:
        return self.states[:, 0, 0].real

    @property
    def rho22(self) -> np.ndarray:
        return self.states[:, 1, 1].real

    @property
    def rho12(self) -> np.ndarray:
        return self.states[:, 0, 1]

    def rows(self):
        return np.column_stack([self.times, self.rho11, self.rho22,
                                self.rho12.real, self.rho12.imag,
                                self.trace_drift])

    def to_csv(self, path) -> None:
        header = ["t", "re_rho11", "re_rho22", "re_rho12", "im_rho12", "trace_drift"]
        _atomic_write(path, lambda fh: _write_rows(fh, header, self.rows()))

    def to_json(self, path) -> None:
        text = json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable)
        _atomic_write(path, lambda fh: fh.write(text + "\n"))


def _write_rows(fh, header, rows):
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([f"{x:.17g}" for x in row])


def _atomic_write(path, writer):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        writer(fh)
    os.replace(tmp, path)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "__dataclass_fields__"):
        d = {"type": type(obj).__name__}
        d.update({k: getattr(obj, k) for k in obj.__dataclass_fields__})
        return d
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def evolve(h: QubitHamiltonian, bath: BathSpec, grid: TimeGrid, kmax: int,
           rho0=None, *, eta: Optional[EtaTable] = None,
           budget: Optional[int] = None) -> Trajectory:
    """Propagate the reduced density matrix with memory span ``kmax``.

    Each step appends one path point to the augmented tensor, multiplies in
    the short-time kernel and the influence factors linking the new point to
    the retained ``kmax`` previous points, reads out the density matrix with
    the last point's half-window coefficients, and finally sums out the
    oldest point once more than ``kmax`` are held.

    ``eta`` may be passed to reuse a table (it must match ``grid.dt`` and
    ``kmax``); otherwise it is built from ``bath``.
    """
    if int(kmax) != kmax or kmax < 1:
        raise ValueError(f"kmax must be an integer >= 1, got {kmax!r}")
    kmax = int(kmax)
    budget = memory_budget() if budget is None else budget
    need = _required_bytes(kmax)
    if need > budget:
        raise MemoryBudgetError(
            f"kmax={kmax} needs about {need} bytes, budget is {budget}")
    rho0 = maximal_coherent() if rho0 is None else density_matrix(rho0)
    if eta is None:
        eta = eta_coefficients(bath, grid, kmax)
    elif eta.kmax != kmax or not np.isclose(eta.dt, grid.dt):
        raise ValueError("eta table does not match grid.dt / kmax")

    T = forward_backward_kernel(free_propagator(h, grid.dt))
    # Propagation factors by lag for a new interior point, and the readout
    # corrections turning them into last-point factors.
    prop = [influence_matrix(c) for c in eta.interior]
    prop_first = [influence_matrix(c) for c in eta.start]
    corr = [influence_matrix(e - i) for e, i in zip(eta.end, eta.interior)]
    corr_first = [influence_matrix(e - s) for e, s in zip(eta.end_start, eta.start)]
    self_prop = _self_factor(eta.interior[0])
    self_corr = _self_factor(eta.end[0] - eta.interior[0])

    n = grid.steps
    states = np.empty((n + 1, 2, 2), dtype=complex)
    drift = np.zeros(n + 1)
    states[0] = rho0
    A = rho0.reshape(4) * _self_factor(eta.start[0])
    for k in range(1, n + 1):
        m = A.ndim
        # B[..., a_{k-1}, a_k] = A[..., a_{k-1}] * T[a_k, a_{k-1}]
        B = A[..., None] * T.T.reshape((1,) * (m - 1) + (4, 4))
        readout = np.ones(B.shape, dtype=complex)
        for lag in range(1, m + 1):
            axis = m - lag
            first = k - lag == 0
            shape = [1] * (m + 1)
            shape[axis] = 4
            shape[m] = 4
            w = (prop_first if first else prop)[lag].T.reshape(shape)
            c = (corr_first if first else corr)[lag].T.reshape(shape)
            B *= w
            readout *= c
        B *= self_prop
        readout *= self_corr
        vec = (B * readout).reshape(-1, 4).sum(axis=0)
        rho = vec.reshape(2, 2)
        tr = np.trace(rho)
        drift[k] = abs(tr - 1.0)
        states[k] = rho / tr
        A = B.sum(axis=0) if B.ndim > kmax else B

    meta = {
        "hamiltonian": h,
        "bath": bath,
        "kmax": kmax,
        "dt": grid.dt,
        "steps": n,
        "rho0": rho0,
        "warnings": list(eta.warnings),
        "max_trace_drift": float(drift.max()),
    }
    return Trajectory(grid=grid, states=states, trace_drift=drift, metadata=meta)
