"""
Discretised influence-functional coefficients on a uniform time grid.

Path point ``k`` sits at ``t_k = k dt`` and owns the window ``w_k`` around
it; the first and last windows are half as long. The coefficient linking
points ``k >= k'`` is the double integral of the response function over
``w_k x w_k'`` (over the lower triangle when ``k == k'``).

Interior windows are congruent, so interior coefficients depend only on the
lag ``k - k'``. Only four lag-indexed families are therefore stored:
interior/interior, interior/first, last/interior and last/first.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from spinbath.bath import (ATOL, RTOL, BathSpec, DiscreteModes, memory_time,
                           response_function)

__all__ = [
    "TimeGrid",
    "EtaTable",
    "TruncationWarning",
    "build_windows",
    "eta_coefficients",
    "window_integral",
    "triangle_integral",
]

CACHE_POINTS_PER_STEP = 64
DEFAULT_ORDER = 16


class TruncationWarning(UserWarning):
    """Memory span shorter than the bath memory time."""


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def total(self) -> float:
        return self.steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


def build_windows(grid: TimeGrid) -> np.ndarray:
    """Windows ``w_0..w_N`` as an ``(N+1, 2)`` array of ``[start, end]``."""
    centres = grid.times
    lo = np.maximum(centres - 0.5 * grid.dt, 0.0)
    hi = np.minimum(centres + 0.5 * grid.dt, grid.total)
    return np.column_stack([lo, hi])


def _rule(order):
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def window_integral(alpha: Callable, a: Tuple[float, float],
                    b: Tuple[float, float], order: int = DEFAULT_ORDER) -> complex:
    """``int_a dt' int_b dt'' alpha(t' - t'')`` by a tensor Gauss rule.

    Window ``a`` must lie after window ``b``.
    """
    x, w = _rule(order)
    ta = a[0] + (a[1] - a[0]) * x
    tb = b[0] + (b[1] - b[0]) * x
    vals = alpha(ta[:, None] - tb[None, :])
    return complex(w @ vals @ w * (a[1] - a[0]) * (b[1] - b[0]))


def triangle_integral(alpha: Callable, a: Tuple[float, float],
                      order: int = DEFAULT_ORDER) -> complex:
    """``int_a dt' int_{a0}^{t'} dt'' alpha(t' - t'')`` by nested Gauss rules."""
    x, w = _rule(order)
    length = a[1] - a[0]
    outer = a[0] + length * x
    inner_len = outer - a[0]
    inner = a[0] + inner_len[:, None] * x[None, :]
    vals = alpha(outer[:, None] - inner)
    return complex(np.sum(w[:, None] * w[None, :] * inner_len[:, None] * vals) * length)


def _interpolated_alpha(bath: BathSpec, horizon: float, dt: float, **quad):
    n = int(np.ceil(horizon / dt * CACHE_POINTS_PER_STEP))
    ts = np.linspace(0.0, horizon, n + 1)
    spline = CubicSpline(ts, np.asarray(response_function(bath, ts, **quad)))

    def alpha(u):
        return spline(np.clip(u, 0.0, horizon))

    return alpha


@dataclass(frozen=True)
class EtaTable:
    """Memory-truncated influence coefficients for a uniform grid.

    Every family is indexed by lag ``L = k - k'`` from 0 to ``kmax``:

    ``interior[L]``
        both points interior; ``interior[0]`` is the full-window triangle.
    ``start[L]``
        interior point ``k = L`` against the first point; ``start[0]`` is
        the first point's own half-window triangle.
    ``end[L]``
        last point against an interior point; ``end[0]`` is the last
        point's half-window triangle.
    ``end_start[L]``
        last point ``k = L`` against the first point (``end_start[0]`` is
        unused and zero).

    The "last" point is the point at which the density matrix is read
    out, so the table serves readouts at any step, not only at ``steps``.
    """

    kmax: int
    dt: float
    steps: int
    interior: np.ndarray
    start: np.ndarray
    end: np.ndarray
    end_start: np.ndarray
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def coefficient(self, k: int, kp: int, last: Optional[int] = None) -> complex:
        """Coefficient for the pair ``k >= kp`` on a path ending at ``last``."""
        last = self.steps if last is None else last
        if not (0 <= kp <= k <= last):
            raise IndexError(f"need 0 <= k' <= k <= last, got ({k}, {kp}, {last})")
        lag = k - kp
        if lag > self.kmax:
            raise IndexError(f"lag {lag} exceeds kmax={self.kmax}")
        if k == 0:
            # Single-point path: every window has zero length.
            return 0j if last == 0 else complex(self.start[0])
        if k == last:
            return complex(self.end_start[lag] if kp == 0 else self.end[lag])
        return complex(self.start[lag] if kp == 0 else self.interior[lag])

    def entries(self):
        """Yield ``(k, k', eta, endpoint)`` for every stored pair on the grid."""
        for k in range(self.steps + 1):
            for kp in range(max(0, k - self.kmax), k + 1):
                endpoint = k in (0, self.steps) or kp in (0, self.steps)
                yield k, kp, self.coefficient(k, kp), endpoint

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["k", "kp", "re_eta", "im_eta"])
            for k, kp, eta, _ in self.entries():
                out.writerow([k, kp, f"{eta.real:.17g}", f"{eta.imag:.17g}"])


def eta_coefficients(bath: BathSpec, grid: TimeGrid, kmax: int, *,
                     order: int = DEFAULT_ORDER,
                     alpha: Optional[Callable] = None,
                     check_memory: bool = True,
                     atol: float = ATOL, rtol: float = RTOL) -> EtaTable:
    """Influence coefficients for ``bath`` on ``grid`` with memory ``kmax``.

    The response function is tabulated once on a ``dt/64`` grid over
    ``[0, (kmax + 1) dt]`` and cubic-spline interpolated inside the window
    quadratures. ``alpha`` overrides that with any vectorised callable.
    """
    if int(kmax) != kmax or kmax < 1:
        raise ValueError(f"kmax must be an integer >= 1, got {kmax!r}")
    kmax = int(kmax)
    dt = grid.dt
    notes = []

    if alpha is None:
        if bath.is_zero():
            alpha = np.zeros_like
        else:
            alpha = _interpolated_alpha(bath, (kmax + 1) * dt, dt, atol=atol, rtol=rtol)

    half = 0.5 * dt
    interior = np.zeros(kmax + 1, dtype=complex)
    start = np.zeros(kmax + 1, dtype=complex)
    end = np.zeros(kmax + 1, dtype=complex)
    end_start = np.zeros(kmax + 1, dtype=complex)

    # Windows are placed relative to an interior point at lag * dt.
    interior[0] = triangle_integral(alpha, (-half, half), order)
    start[0] = triangle_integral(alpha, (0.0, half), order)
    end[0] = triangle_integral(alpha, (-half, 0.0), order)
    for lag in range(1, kmax + 1):
        t = lag * dt
        interior[lag] = window_integral(alpha, (t - half, t + half), (-half, half), order)
        start[lag] = window_integral(alpha, (t - half, t + half), (0.0, half), order)
        end[lag] = window_integral(alpha, (t - half, t), (-half, half), order)
        end_start[lag] = window_integral(alpha, (t - half, t), (0.0, half), order)

    if check_memory and not isinstance(bath.density, DiscreteModes) and not bath.is_zero():
        span = kmax * dt
        horizon = max(8.0 * span, span + 20.0 * dt)
        mt = memory_time(bath, t_max=horizon, dt_scan=min(dt / 4, horizon / 400))
        if mt.time > span:
            msg = (f"kmax*dt = {span:.4g} is shorter than the bath memory time "
                   f"{'>' if not mt.reached else ''}{mt.time:.4g}")
            notes.append(msg)
            warnings.warn(msg, TruncationWarning, stacklevel=2)

    return EtaTable(kmax=kmax, dt=dt, steps=grid.steps, interior=interior,
                    start=start, end=end, end_start=end_start,
                    warnings=tuple(notes))
