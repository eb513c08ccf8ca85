"""
Run configuration: an INI file with ``[system]``, ``[bath]``, ``[grid]``,
``[numerics]``, ``[output]`` and the optional ``[scenario]``, ``[sweep]``,
``[discrete]`` sections.

Physical quantities are written either relative to the splitting (``epsilon =
10``) or in SI with a suffix (``epsilon_hz = 5e10``, ``temperature_k = 0.01``,
``dt_s = 1e-10``), never both. SI values are converted with ``delta_hz`` and
the stored config is always relative.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Tuple

from spinbath import units
from spinbath.bath import BathSpec, Effective, FrequencyBand, Ohmic, band_presets
from spinbath.influence import TimeGrid
from spinbath.propagator import QubitHamiltonian

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

BANDS = ("low", "medium", "high", "custom")
INITIAL_STATES = ("coherent", "up", "down")
SWEEPABLE = ("epsilon", "kondo", "theta", "coupling_product", "iho_frequency",
             "damping", "cutoff")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


# field -> (section, SI key or None, SI conversion kind)
_LAYOUT = {
    "model": ("system", None, None),
    "delta_hz": ("system", None, None),
    "epsilon": ("system", "epsilon_hz", "freq"),
    "initial_state": ("system", None, None),
    "kondo": ("bath", None, None),
    "theta": ("bath", "temperature_k", "temp"),
    "coupling_product": ("bath", None, None),
    "iho_frequency": ("bath", "iho_frequency_hz", "freq"),
    "damping": ("bath", "damping_hz", "freq"),
    "band": ("bath", None, None),
    "omega_min": ("bath", "omega_min_hz", "freq"),
    "omega_max": ("bath", "omega_max_hz", "freq"),
    "cutoff": ("bath", "cutoff_hz", "freq"),
    "symmetric_cutoff": ("bath", None, None),
    "dt": ("grid", "dt_s", "time"),
    "steps": ("grid", None, None),
    "kmax": ("grid", None, None),
    "atol": ("numerics", None, None),
    "rtol": ("numerics", None, None),
    "memory_budget": ("numerics", None, None),
    "epsilon_tau2": ("numerics", None, None),
    "epsilon_tau1": ("numerics", None, None),
    "directory": ("output", None, None),
    "prefix": ("output", None, None),
    "scenario": ("scenario", None, None),
    "tunneling": ("discrete", None, None),
    "fock_cutoff": ("discrete", None, None),
    "modes": ("discrete", None, None),
}
_REQUIRED = ("model", "epsilon", "steps")


@dataclass(frozen=True)
class RunConfig:
    model: str = "sb"
    delta_hz: float = units.REFERENCE.delta_hz
    epsilon: float = 1.0
    initial_state: str = "coherent"
    kondo: float = units.REFERENCE.kondo
    theta: float = units.REFERENCE.theta
    coupling_product: float = 1.0
    iho_frequency: float = 10.0
    damping: float = units.REFERENCE.damping
    band: str = "medium"
    omega_min: Optional[float] = None
    omega_max: Optional[float] = None
    cutoff: Optional[float] = None
    symmetric_cutoff: bool = False
    dt: float = 0.5
    steps: int = 100
    kmax: int = 3
    atol: float = 1e-10
    rtol: float = 1e-8
    memory_budget: Optional[int] = None
    epsilon_tau2: float = 10.0
    epsilon_tau1: float = 1.0
    directory: str = "out"
    prefix: str = "run"
    scenario: Optional[str] = None
    tunneling: float = 1.0
    fock_cutoff: int = 10
    modes: Tuple[Tuple[float, float], ...] = ()
    sweep: Tuple[Tuple[str, Tuple[float, ...]], ...] = ()

    def __post_init__(self):
        if self.model not in ("sb", "sib"):
            raise ConfigError("model", f"must be 'sb' or 'sib', got {self.model!r}")
        if self.band not in BANDS:
            raise ConfigError("band", f"must be one of {BANDS}, got {self.band!r}")
        if self.initial_state not in INITIAL_STATES:
            raise ConfigError("initial_state", f"must be one of {INITIAL_STATES}")
        if self.band == "custom" and (self.omega_min is None or self.omega_max is None):
            raise ConfigError("omega_max", "custom band needs omega_min and omega_max")
        for name in ("delta_hz", "theta", "dt", "iho_frequency"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        for name in ("kondo", "coupling_product", "damping"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ConfigError("cutoff", "must be positive")
        if self.steps < 1:
            raise ConfigError("steps", "must be >= 1")
        if self.tunneling < 0:
            raise ConfigError("tunneling", "must be non-negative")
        if self.kmax < 1:
            raise ConfigError("kmax", "must be >= 1")
        if self.scenario is not None and self.scenario not in ("fig4", "fig5", "fig6"):
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}")
        if len(self.sweep) > 2:
            raise ConfigError("sweep", "at most two swept parameters")
        for name, values in self.sweep:
            if name not in SWEEPABLE:
                raise ConfigError(f"sweep.{name}", f"not sweepable; choose from {SWEEPABLE}")
        try:
            self.frequency_band()
        except ValueError as exc:
            raise ConfigError("band", str(exc)) from None

    def frequency_band(self) -> FrequencyBand:
        if self.band == "custom":
            return FrequencyBand(self.omega_min, self.omega_max)
        return getattr(band_presets(1.0), self.band)

    def density(self):
        band = self.frequency_band()
        wc = band.omega_max if self.cutoff is None else self.cutoff
        if self.model == "sb":
            return Ohmic(self.kondo, wc)
        return Effective(self.coupling_product, self.kondo, self.iho_frequency,
                         self.damping, wc, symmetric_cutoff=self.symmetric_cutoff)

    def bath(self) -> BathSpec:
        return BathSpec(self.density(), 1.0 / self.theta, self.frequency_band())

    def hamiltonian(self) -> QubitHamiltonian:
        return QubitHamiltonian(self.epsilon, 1.0)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.dt, self.steps)

    def rho0(self):
        import numpy as np
        if self.initial_state == "up":
            return np.diag([1.0, 0.0]).astype(complex)
        if self.initial_state == "down":
            return np.diag([0.0, 1.0]).astype(complex)
        return np.full((2, 2), 0.5, dtype=complex)

    def sweep_points(self) -> List[Dict[str, float]]:
        if not self.sweep:
            return []
        points = [{}]
        for name, values in self.sweep:
            points = [dict(p, **{name: v}) for p in points for v in values]
        return points

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for f in fields(self):
            if f.name == "sweep":
                continue
            value = getattr(self, f.name)
            if value is None or (f.name == "modes" and not value):
                continue
            section = _LAYOUT[f.name][0]
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, f.name, _format(f.name, value))
        if self.sweep:
            cp.add_section("sweep")
            for name, values in self.sweep:
                cp.set("sweep", name, ", ".join(repr(float(v)) for v in values))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _format(name, value):
    if name == "modes":
        return ", ".join(f"{w!r}:{g!r}" for w, g in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name, raw):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    raw = raw.strip()
    try:
        if name == "modes":
            out = []
            for item in filter(None, (s.strip() for s in raw.split(","))):
                w, g = item.split(":")
                out.append((float(w), float(g)))
            return tuple(out)
        if "bool" in ftype:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in ftype and "Tuple" not in ftype:
            return int(float(raw)) if name == "memory_budget" else int(raw)
        if "float" in ftype:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r}") from None


def _convert(kind, value, delta_hz):
    if kind == "freq":
        return value / delta_hz
    if kind == "time":
        return value * delta_hz
    if kind == "temp":
        return units.theta_from_kelvin(value, delta_hz)
    raise AssertionError(kind)


def parse_config(text: str, overrides: Optional[List[str]] = None) -> RunConfig:
    """Parse INI text; ``overrides`` are ``section.key=value`` or ``key=value``."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from None
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError("override", f"expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
        else:
            section = _section_of(key)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value.strip())

    known = set()
    for name, (section, si_key, _) in _LAYOUT.items():
        known.add((section, name))
        if si_key:
            known.add((section, si_key))
    for section in cp.sections():
        if section == "sweep":
            continue
        for key in cp[section]:
            if (section, key) not in known:
                raise ConfigError(f"{section}.{key}", "unknown field")

    delta_hz = units.REFERENCE.delta_hz
    if cp.has_option("system", "delta_hz"):
        delta_hz = _parse_value("delta_hz", cp.get("system", "delta_hz"))
        if not delta_hz > 0:
            raise ConfigError("delta_hz", "must be positive")

    values = {}
    for name, (section, si_key, kind) in _LAYOUT.items():
        rel = cp.has_option(section, name)
        si = si_key is not None and cp.has_option(section, si_key)
        if rel and si:
            raise ConfigError(name, f"give either {name} or {si_key}, not both")
        if rel:
            values[name] = _parse_value(name, cp.get(section, name))
        elif si:
            try:
                raw = float(cp.get(section, si_key))
                values[name] = _convert(kind, raw, delta_hz)
            except ValueError as exc:
                raise ConfigError(si_key, str(exc)) from None
    if values.get("scenario") is None:
        for name in _REQUIRED:
            if name not in values:
                raise ConfigError(name, "required field is missing")

    if cp.has_section("sweep"):
        sweep = []
        for key, raw in cp["sweep"].items():
            try:
                vals = tuple(float(v) for v in raw.split(",") if v.strip())
            except ValueError:
                raise ConfigError(f"sweep.{key}", f"cannot parse {raw!r}") from None
            if not vals:
                raise ConfigError(f"sweep.{key}", "empty sweep grid")
            sweep.append((key, vals))
        if not sweep:
            raise ConfigError("sweep", "empty sweep grid")
        values["sweep"] = tuple(sweep)
    return RunConfig(**values)


def _section_of(key):
    for name, (section, si_key, _) in _LAYOUT.items():
        if key in (name, si_key):
            return section
    raise ConfigError(key, "unknown field")


def load_config(path, overrides: Optional[List[str]] = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    return parse_config(text, overrides)
