"""
Conversion between SI inputs and the internal units hbar = delta = 1.

Frequencies are angular throughout. A splitting quoted as ``5e9`` is used
as ``5e9 rad/s``; only ratios such as ``k_B T / (hbar delta)`` reach the
dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy import constants

KB_OVER_HBAR = constants.k / constants.hbar  # rad s^-1 K^-1


def theta_from_kelvin(temperature: float, delta: float) -> float:
    """Dimensionless temperature ``k_B T / (hbar delta)``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return KB_OVER_HBAR * temperature / delta


def kelvin_from_theta(theta: float, delta: float) -> float:
    return theta * delta / KB_OVER_HBAR


@dataclass(frozen=True)
class ReferenceParameters:
    delta_hz: float = 5e9
    kondo: float = 0.01
    temperature_k: float = 0.01
    damping_hz: float = 2.6e11
    iho_frequency: float = 10.0
    coupling_product: float = 1.0

    @property
    def theta(self) -> float:
        return theta_from_kelvin(self.temperature_k, self.delta_hz)

    @property
    def beta(self) -> float:
        return 1.0 / self.theta

    @property
    def damping(self) -> float:
        return self.damping_hz / self.delta_hz


REFERENCE = ReferenceParameters()
