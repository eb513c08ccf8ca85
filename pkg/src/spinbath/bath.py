"""
Spectral densities, the bath response function and memory-time estimates.

Units follow the package convention: hbar = 1 and every frequency is an
angular frequency. The CLI additionally fixes the tunnelling splitting to 1,
but nothing in this module depends on that choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "Ohmic",
    "Effective",
    "DiscreteModes",
    "SpectralDensity",
    "FrequencyBand",
    "BathSpec",
    "BandPresets",
    "MemoryTime",
    "QuadratureError",
    "evaluate_j",
    "coth",
    "response_function",
    "memory_time",
    "band_presets",
    "tabulate_density",
    "tabulate_response",
]

# Default quadrature settings for the response function.
ATOL = 1e-10
RTOL = 1e-8
GAUSS_ORDER = 20
MAX_REFINE = 8

# Upper integration limit for an unbanded continuous density, in cutoffs.
UNBANDED_CUTOFFS = 60.0


class QuadratureError(ArithmeticError):
    """Raised when an integral misses its tolerance.

    The error estimate is kept on the ``estimate`` attribute.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


def _check_nonneg(name, value):
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and non-negative, got {value!r}")


def _check_pos(name, value):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be finite and positive, got {value!r}")


@dataclass(frozen=True)
class Ohmic:
    r"""Ohmic density :math:`J(\omega) = \frac{\pi}{2}\xi\omega e^{-\omega/\omega_c}`."""

    kondo: float
    cutoff: float

    def __post_init__(self):
        _check_nonneg("kondo", self.kondo)
        _check_pos("cutoff", self.cutoff)


@dataclass(frozen=True)
class Effective:
    r"""Effective density seen by the qubit through an intermediate oscillator.

    .. math::

        J(\omega) = \frac{\pi}{2}(\lambda\kappa)^2\xi\omega
            \frac{\Omega_0^4}{(\omega^2-\Omega_0^2)^2 e^{\omega/\omega_c}
            + 4\Gamma^2\omega^2 e^{-\omega/\omega_c}}

    The two exponentials carry opposite signs. With ``symmetric_cutoff`` the
    first one becomes :math:`e^{-\omega/\omega_c}` as well.

    The damping relates to the oscillator's friction as
    :math:`\Gamma = \kappa^2\eta/2M`, and the Kondo parameter to the bath
    friction as :math:`\xi = 2\eta/\pi\hbar`.
    """

    coupling_product: float
    kondo: float
    iho_frequency: float
    damping: float
    cutoff: float
    symmetric_cutoff: bool = False

    def __post_init__(self):
        _check_nonneg("coupling_product", self.coupling_product)
        _check_nonneg("kondo", self.kondo)
        _check_pos("iho_frequency", self.iho_frequency)
        _check_nonneg("damping", self.damping)
        _check_pos("cutoff", self.cutoff)


@dataclass(frozen=True)
class DiscreteModes:
    """A finite set of bath modes given as ``(frequency, weight)`` pairs.

    ``weight`` is :math:`c_i^2/(2 m_i \\omega_i)`. The density is a sum of
    delta functions, so it enters the dynamics only through the closed-form
    response sum (see :func:`spinbath.oracle.discrete_alpha`).
    """

    modes: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        modes = tuple((float(w), float(g)) for w, g in self.modes)
        for w, g in modes:
            _check_pos("mode frequency", w)
            _check_nonneg("mode weight", g)
        object.__setattr__(self, "modes", modes)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([w for w, _ in self.modes], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([g for _, g in self.modes], dtype=float)


SpectralDensity = Union[Ohmic, Effective, DiscreteModes]


@dataclass(frozen=True)
class FrequencyBand:
    """Half-open frequency interval ``(omega_min, omega_max]``."""

    omega_min: float
    omega_max: float

    def __post_init__(self):
        _check_nonneg("omega_min", self.omega_min)
        _check_pos("omega_max", self.omega_max)
        if not self.omega_min < self.omega_max:
            raise ValueError(
                f"band needs omega_min < omega_max, got "
                f"({self.omega_min}, {self.omega_max}]")

    @property
    def width(self) -> float:
        return self.omega_max - self.omega_min


@dataclass(frozen=True)
class BathSpec:
    """Spectral density, the band of modes present, and inverse temperature.

    ``band=None`` keeps every mode; continuous densities are then integrated
    up to ``UNBANDED_CUTOFFS`` times their cutoff.
    """

    density: SpectralDensity
    beta: float
    band: Optional[FrequencyBand] = None

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError(
                f"beta must be finite and positive (zero temperature is not "
                f"supported), got {self.beta!r}")

    @property
    def integration_range(self) -> Tuple[float, float]:
        if self.band is not None:
            return self.band.omega_min, self.band.omega_max
        return 0.0, UNBANDED_CUTOFFS * self.density.cutoff

    def is_zero(self) -> bool:
        d = self.density
        if isinstance(d, DiscreteModes):
            return not np.any(d.weights)
        if isinstance(d, Effective):
            return d.kondo == 0 or d.coupling_product == 0
        return d.kondo == 0


def evaluate_j(density: SpectralDensity, omega):
    """Evaluate the spectral density at ``omega`` (scalar or array).

    A :class:`DiscreteModes` density is a distribution and evaluates to 0.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("spectral density is defined for omega >= 0 only")
    if isinstance(density, Ohmic):
        out = 0.5 * np.pi * density.kondo * w * np.exp(-w / density.cutoff)
    elif isinstance(density, Effective):
        d = density
        first = np.exp(-w / d.cutoff) if d.symmetric_cutoff else np.exp(w / d.cutoff)
        den = ((w**2 - d.iho_frequency**2) ** 2 * first
               + 4.0 * d.damping**2 * w**2 * np.exp(-w / d.cutoff))
        out = (0.5 * np.pi * d.coupling_product**2 * d.kondo * w
               * d.iho_frequency**4 / den)
    elif isinstance(density, DiscreteModes):
        out = np.zeros_like(w)
    else:
        raise TypeError(f"unknown spectral density {type(density).__name__}")
    return out if out.ndim else float(out)


def _slope_at_zero(density: SpectralDensity) -> float:
    if isinstance(density, Ohmic):
        return 0.5 * np.pi * density.kondo
    if isinstance(density, Effective):
        return 0.5 * np.pi * density.coupling_product**2 * density.kondo
    return 0.0


def coth(x):
    """``coth`` guarded against overflow and small-argument cancellation."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    small = x < 1e-6
    mid = ~small & (x <= 30.0)
    xs = x[small]
    with np.errstate(divide="ignore"):
        out[small] = 1.0 / xs + xs / 3.0
    out[mid] = 1.0 / np.tanh(x[mid])
    return out


def _integrand(bath: BathSpec, omega: np.ndarray, t: float):
    """Real and imaginary integrands of the response function, including 1/pi."""
    j = evaluate_j(bath.density, omega)
    jc = np.empty_like(omega)
    zero = omega == 0
    jc[~zero] = j[~zero] * coth(0.5 * bath.beta * omega[~zero])
    # J(w) coth(beta w / 2) -> J'(0) * 2 / beta as w -> 0
    jc[zero] = _slope_at_zero(bath.density) * 2.0 / bath.beta
    re = jc * np.cos(omega * t) / np.pi
    im = -j * np.sin(omega * t) / np.pi
    return re, im


_RULES = {}


def _rule(order):
    if order not in _RULES:
        _RULES[order] = leggauss(order)
    return _RULES[order]


def _segment_edges(lo, hi, t, n_base):
    # Break points at the half periods of cos/sin(omega t) keep each segment
    # free of more than one sign change.
    n = n_base
    if t > 0:
        n = max(n, int(math.ceil((hi - lo) * t / math.pi)))
    return np.linspace(lo, hi, n + 1)


def _composite(bath, edges, t, order):
    x, wts = _rule(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x[None, :]
    re, im = _integrand(bath, nodes.ravel(), t)
    scale = (half * wts[None, :]).ravel()
    return (np.dot(re, scale) + 1j * np.dot(im, scale),
            np.dot(np.abs(re) + np.abs(im), scale))


def _alpha_single(bath, t, order, atol, rtol, n_base):
    lo, hi = bath.integration_range
    edges = _segment_edges(lo, hi, t, n_base)
    err = np.inf
    for _ in range(MAX_REFINE):
        coarse, _ = _composite(bath, edges, t, order)
        fine, mag = _composite(bath, edges, t, order + order // 2)
        err = abs(fine - coarse)
        if err <= max(atol, rtol * mag):
            return fine
        mid = 0.5 * (edges[:-1] + edges[1:])
        edges = np.sort(np.concatenate([edges, mid]))
    raise QuadratureError(
        f"response function at t={t} did not converge (error estimate "
        f"{err:.3e})", estimate=float(err))


def response_function(bath: BathSpec, t, *, order: int = GAUSS_ORDER,
                      atol: float = ATOL, rtol: float = RTOL,
                      n_base: int = 16):
    r"""Bath response function

    .. math::

        \alpha(t) = \frac{1}{\pi}\int d\omega\, J(\omega)
            \left[\coth\frac{\beta\omega}{2}\cos\omega t - i\sin\omega t\right]

    integrated over the bath's band only. ``t`` may be a scalar or an array
    of non-negative times.

    The band is split at the half periods :math:`\pi/t` of the oscillating
    factor and every piece gets a Gauss-Legendre rule; the piece count is
    doubled until two rule orders agree to ``max(atol, rtol * int|f|)``.

    A :class:`DiscreteModes` density is delegated to the closed-form mode
    sum.
    """
    ts = np.asarray(t, dtype=float)
    if np.any(ts < 0) or np.any(np.isnan(ts)):
        raise ValueError("response function is evaluated for t >= 0 only")
    if isinstance(bath.density, DiscreteModes):
        from spinbath.oracle import discrete_alpha
        return discrete_alpha(bath.density, bath.beta, ts)
    flat = np.array([_alpha_single(bath, float(x), order, atol, rtol, n_base)
                     for x in ts.ravel()], dtype=complex)
    out = flat.reshape(ts.shape)
    return out if out.ndim else complex(out)


class MemoryTime(NamedTuple):
    time: float
    reached: bool


def memory_time(bath: BathSpec, threshold: float = 0.1, t_max: float = 20.0,
                dt_scan: float = 0.05) -> MemoryTime:
    """Smallest scanned time after which ``alpha`` stays small.

    Returns the first scan point ``t`` such that ``max(|Re a|, |Im a|)`` stays
    at or below ``threshold * max(|Re a(0)|, max |Im a|)`` for every later
    scan point. ``reached`` is False (and ``time == t_max``) when the last
    scan point still violates the bound.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if not 0 < dt_scan < t_max:
        raise ValueError("need 0 < dt_scan < t_max")
    ts = np.arange(0.0, t_max + 0.5 * dt_scan, dt_scan)
    alpha = response_function(bath, ts)
    size = np.maximum(np.abs(alpha.real), np.abs(alpha.imag))
    scale = threshold * max(abs(alpha[0].real), np.max(np.abs(alpha.imag)))
    above = np.nonzero(size > scale)[0]
    if above.size == 0:
        return MemoryTime(float(ts[0]), True)
    last = above[-1]
    if last == ts.size - 1:
        return MemoryTime(float(t_max), False)
    return MemoryTime(float(ts[last + 1]), True)


class BandPresets(NamedTuple):
    low: FrequencyBand
    medium: FrequencyBand
    high: FrequencyBand


def band_presets(delta: float = 1.0) -> BandPresets:
    """Low ``(0, 0.1]``, medium ``(0.1, 11]`` and high ``(11, 100]`` bands,
    in units of ``delta``."""
    _check_pos("delta", delta)
    return BandPresets(
        low=FrequencyBand(0.0, 0.1 * delta),
        medium=FrequencyBand(0.1 * delta, 11.0 * delta),
        high=FrequencyBand(11.0 * delta, 100.0 * delta),
    )


def tabulate_density(omegas, *densities) -> np.ndarray:
    """Rows ``(omega, J_1(omega), J_2(omega), ...)``."""
    w = np.asarray(omegas, dtype=float)
    cols = [w] + [np.asarray(evaluate_j(d, w), dtype=float) for d in densities]
    return np.column_stack(cols)


def tabulate_response(bath: BathSpec, times) -> np.ndarray:
    """Rows ``(t, Re alpha, Im alpha)``."""
    ts = np.asarray(times, dtype=float)
    a = np.asarray(response_function(bath, ts))
    return np.column_stack([ts, a.real, a.imag])
