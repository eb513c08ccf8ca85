"""
Decoherence and relaxation times, scenario presets and convergence studies.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from spinbath import units
from spinbath.bath import ATOL, RTOL, BathSpec, Effective, Ohmic, band_presets
from spinbath.influence import TimeGrid, eta_coefficients
from spinbath.propagator import (QubitHamiltonian, Trajectory, _atomic_write,
                                 _jsonable, evolve, maximal_coherent)

__all__ = [
    "Timescale",
    "TimescaleReport",
    "UndefinedTimescaleError",
    "Variant",
    "ScenarioPreset",
    "VariantResult",
    "ScenarioBundle",
    "extract_tau2",
    "extract_tau1",
    "equilibrium_rho11",
    "measure_timescales",
    "preset",
    "scenario_run",
    "kmax_convergence",
    "SCENARIOS",
]

TAIL_FRACTION = 0.2
GUARD_PERIODS = 2.0
MIN_POPULATION_CHANGE = 1e-3


class UndefinedTimescaleError(ValueError):
    pass


@dataclass(frozen=True)
class Timescale:
    """A 1/e crossing time; ``time`` is NaN when the crossing is not reached.

    ``final_ratio`` is the decayed quantity at the end of the trajectory
    relative to its initial value.
    """

    time: float
    reached: bool
    final_ratio: float


def _first_crossing(t, ratio, level):
    """Linear-interpolated first time ``ratio`` drops to ``level``."""
    below = np.nonzero(ratio <= level)[0]
    if below.size == 0:
        return None
    i = below[0]
    if i == 0:
        return float(t[0])
    r0, r1 = ratio[i - 1], ratio[i]
    return float(t[i - 1] + (t[i] - t[i - 1]) * (r0 - level) / (r0 - r1))


def extract_tau2(traj: Trajectory) -> Timescale:
    """Time for ``|rho_12|`` to fall to ``1/e`` of its initial value."""
    mag = np.abs(traj.rho12)
    if mag[0] <= 0:
        raise UndefinedTimescaleError("initial coherence is zero; tau2 is undefined")
    ratio = mag / mag[0]
    hit = _first_crossing(traj.times, ratio, 1.0 / math.e)
    if hit is None:
        return Timescale(math.nan, False, float(ratio[-1]))
    return Timescale(hit, True, float(ratio[-1]))


def equilibrium_rho11(traj: Trajectory, tail: float = TAIL_FRACTION) -> float:
    """Mean of ``rho_11`` over the final ``tail`` fraction of samples."""
    n = len(traj.times)
    m = max(1, int(round(tail * n)))
    if m >= n:
        raise UndefinedTimescaleError("trajectory too short for a tail window")
    return float(np.mean(traj.rho11[-m:]))


def extract_tau1(traj: Trajectory, rabi_frequency: Optional[float] = None) -> Timescale:
    """Time for ``rho_11`` to settle to its tail-average equilibrium.

    The crossing is the first time ``|rho_11 - rho_11(inf)|`` drops to
    ``1/e`` of its initial value and stays there for the following two
    periods of the bare qubit oscillation, so oscillating populations report
    their envelope rather than the first node.
    """
    eq = equilibrium_rho11(traj)
    r = traj.rho11
    dev0 = abs(r[0] - eq)
    if dev0 < MIN_POPULATION_CHANGE:
        raise UndefinedTimescaleError(
            f"initial population is within {dev0:.1e} of equilibrium; tau1 is undefined")
    if rabi_frequency is None:
        h = traj.metadata.get("hamiltonian")
        rabi_frequency = h.rabi_frequency if h is not None else 0.0
    guard = GUARD_PERIODS * 2 * math.pi / rabi_frequency if rabi_frequency > 0 else 0.0

    t = traj.times
    ratio = np.abs(r - eq) / dev0
    level = 1.0 / math.e
    above = ratio > level
    # index of the next sample above the level, for every sample
    nxt = np.full(len(t), len(t))
    idx = np.nonzero(above)[0]
    pos = np.searchsorted(idx, np.arange(len(t)))
    ok = pos < idx.size
    nxt[ok] = idx[pos[ok]]
    for i in np.nonzero(~above)[0]:
        j = nxt[i]
        if j == len(t) or t[j] - t[i] > guard:
            if i == 0:
                return Timescale(float(t[0]), True, float(ratio[-1]))
            r0, r1 = ratio[i - 1], ratio[i]
            hit = t[i - 1] + (t[i] - t[i - 1]) * (r0 - level) / (r0 - r1)
            return Timescale(float(hit), True, float(ratio[-1]))
    return Timescale(math.nan, False, float(ratio[-1]))


@dataclass(frozen=True)
class TimescaleReport:
    tau2: Timescale
    tau1: Timescale
    equilibrium_rho11: float
    gibbs_rho11: float
    method: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Variant:
    """One qubit-environment model inside a scenario."""

    label: str
    model: str = "sb"
    coupling_product: float = 1.0
    iho_frequency: float = 10.0

    def __post_init__(self):
        if self.model not in ("sb", "sib"):
            raise ValueError(f"model must be 'sb' or 'sib', got {self.model!r}")


@dataclass(frozen=True)
class ScenarioPreset:
    """Parameters for a family of runs, in units hbar = delta = 1.

    ``epsilon_tau2`` is the bias of the coherence runs and ``epsilon_tau1``
    the bias of the population runs.
    """

    name: str
    variants: Tuple[Variant, ...]
    band: str = "medium"
    kondo: float = units.REFERENCE.kondo
    theta: float = units.REFERENCE.theta
    damping: float = units.REFERENCE.damping
    epsilon_tau2: float = 10.0
    epsilon_tau1: float = 1.0
    dt: float = 0.5
    kmax: int = 3
    duration: float = 4000.0
    cutoff: Optional[float] = None
    symmetric_cutoff: bool = False
    atol: float = ATOL
    rtol: float = RTOL

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def bath(self, variant: Variant) -> BathSpec:
        band = getattr(band_presets(1.0), self.band)
        wc = band.omega_max if self.cutoff is None else self.cutoff
        if variant.model == "sb":
            density = Ohmic(self.kondo, wc)
        else:
            density = Effective(variant.coupling_product, self.kondo,
                                variant.iho_frequency, self.damping, wc,
                                symmetric_cutoff=self.symmetric_cutoff)
        return BathSpec(density, 1.0 / self.theta, band)


def _scenario_variants(name, omegas=(6.0, 8.0, 10.0)):
    if name == "fig4":
        return (Variant("SB", "sb"), Variant("SIB", "sib", 1.0, 10.0))
    if name == "fig5":
        return (Variant("SB", "sb"), Variant("SIB lk=1", "sib", 1.0, 10.0),
                Variant("SIB lk=1.125", "sib", 1.125, 10.0))
    if name == "fig6":
        return tuple(Variant(f"SIB W0={w:g}", "sib", 1.0, float(w)) for w in omegas)
    raise KeyError(f"unknown scenario {name!r}")


SCENARIOS = ("fig4", "fig5", "fig6")


def preset(name: str, **overrides) -> ScenarioPreset:
    """Scenario with the reference parameters; keyword overrides replace fields.

    ``omegas`` replaces the fig6 oscillator frequencies (default 6, 8, 10).
    """
    omegas = overrides.pop("omegas", (6.0, 8.0, 10.0))
    band = "low" if name == "fig4" else "medium"
    base = ScenarioPreset(name=name, variants=_scenario_variants(name, omegas), band=band)
    return replace(base, **overrides)


def _run_pair(args):
    p, variant = args
    bath = p.bath(variant)
    grid = TimeGrid(p.dt, p.steps)
    eta = eta_coefficients(bath, grid, p.kmax, atol=p.atol, rtol=p.rtol)
    coh = evolve(QubitHamiltonian(p.epsilon_tau2, 1.0), bath, grid, p.kmax,
                 maximal_coherent(), eta=eta)
    pop = evolve(QubitHamiltonian(p.epsilon_tau1, 1.0), bath, grid, p.kmax,
                 maximal_coherent(), eta=eta)
    return coh, pop


def measure_timescales(coherence: Trajectory, population: Trajectory,
                       beta: float) -> TimescaleReport:
    h = population.metadata["hamiltonian"]
    return TimescaleReport(
        tau2=extract_tau2(coherence),
        tau1=extract_tau1(population),
        equilibrium_rho11=equilibrium_rho11(population),
        gibbs_rho11=float(h.gibbs_rho11(beta)),
        method={"tau2": "|rho12| 1/e crossing, linear interpolation",
                "tau1": f"|rho11 - tail mean| 1/e crossing held for "
                        f"{GUARD_PERIODS:g} bare periods",
                "tail_fraction": TAIL_FRACTION},
    )


@dataclass
class VariantResult:
    variant: Variant
    coherence: Trajectory
    population: Trajectory
    report: TimescaleReport


@dataclass
class ScenarioBundle:
    preset: ScenarioPreset
    results: List[VariantResult]
    comparisons: List[Dict[str, object]]

    def result(self, label: str) -> VariantResult:
        for r in self.results:
            if r.variant.label == label:
                return r
        raise KeyError(label)

    def report(self) -> Dict[str, object]:
        runs = []
        for r in self.results:
            rep = r.report
            runs.append({
                "params": asdict(r.variant),
                "tau1": _finite(rep.tau1.time),
                "tau2": _finite(rep.tau2.time),
                "equilibrium_rho11": rep.equilibrium_rho11,
                "gibbs_rho11": rep.gibbs_rho11,
                "flags": {"tau1_reached": rep.tau1.reached,
                          "tau2_reached": rep.tau2.reached,
                          "warnings": sorted(set(r.coherence.metadata["warnings"]
                                                 + r.population.metadata["warnings"]))},
            })
        return {"scenario": self.preset.name, "preset": asdict(self.preset),
                "runs": runs, "comparisons": self.comparisons}

    def write(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        for i, r in enumerate(self.results):
            stem = os.path.join(directory, f"run{i}_{_slug(r.variant.label)}")
            for kind, traj in (("coherence", r.coherence), ("population", r.population)):
                traj.to_csv(f"{stem}_{kind}.csv")
                traj.to_json(f"{stem}_{kind}.json")
            _write_dat(f"{stem}_abs_rho12.dat", r.coherence.times, np.abs(r.coherence.rho12))
            _write_dat(f"{stem}_rho11.dat", r.population.times, r.population.rho11)
        text = json.dumps(self.report(), indent=2, sort_keys=True, default=_jsonable)
        _atomic_write(os.path.join(directory, "report.json"), lambda fh: fh.write(text + "\n"))


def _finite(x):
    return None if math.isnan(x) else x


def _slug(label):
    return "".join(c if c.isalnum() else "_" for c in label).strip("_").lower()


def _write_dat(path, x, y):
    def w(fh):
        for a, b in zip(x, y):
            fh.write(f"{a:.17g} {b:.17g}\n")
    _atomic_write(path, w)


def _compare(name, results):
    by = {r.variant.label: r.report for r in results}

    def rel(a, b):
        return abs(a - b) / abs(b) if b else math.inf

    out = []
    if name == "fig4":
        sb, sib = by["SB"], by["SIB"]
        for tau in ("tau2", "tau1"):
            a, b = getattr(sib, tau).time, getattr(sb, tau).time
            out.append({"claim": f"{tau}(SIB) close to {tau}(SB)", "relative_difference": rel(a, b),
                        "holds": bool(rel(a, b) <= 0.15)})
    elif name == "fig5":
        sb, s1, s2 = by["SB"], by["SIB lk=1"], by["SIB lk=1.125"]
        for tau in ("tau2", "tau1"):
            out.append({"claim": f"{tau}(SIB lk=1) > {tau}(SB)",
                        "values": [getattr(s1, tau).time, getattr(sb, tau).time],
                        "holds": bool(getattr(s1, tau).time > getattr(sb, tau).time)})
        d = rel(s2.tau2.time, sb.tau2.time)
        out.append({"claim": "tau2(SIB lk=1.125) within 20% of tau2(SB)",
                    "relative_difference": d, "holds": bool(d <= 0.2)})
        out.append({"claim": "equilibrium rho11(SIB lk=1.125) > equilibrium rho11(SB)",
                    "values": [s2.equilibrium_rho11, sb.equilibrium_rho11],
                    "holds": bool(s2.equilibrium_rho11 > sb.equilibrium_rho11)})
    elif name == "fig6":
        order = sorted(results, key=lambda r: -r.variant.iho_frequency)
        for tau in ("tau2", "tau1"):
            vals = [getattr(r.report, tau).time for r in order]
            out.append({"claim": f"{tau} increases as W0 decreases",
                        "iho_frequency": [r.variant.iho_frequency for r in order],
                        "values": vals,
                        "holds": bool(all(b > a for a, b in zip(vals, vals[1:])))})
    return out


def scenario_run(p: ScenarioPreset, workers: int = 1) -> ScenarioBundle:
    """Run every variant of ``p`` (a coherence run and a population run each)."""
    jobs = [(p, v) for v in p.variants]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(_run_pair, jobs))
    else:
        pairs = [_run_pair(j) for j in jobs]
    results = [VariantResult(v, coh, pop, measure_timescales(coh, pop, 1.0 / p.theta))
               for v, (coh, pop) in zip(p.variants, pairs)]
    return ScenarioBundle(p, results, _compare(p.name, results))


def kmax_convergence(p: ScenarioPreset, kmax_list: Sequence[int],
                     t_max: float = 10.0) -> List[Tuple[int, int, float]]:
    """Max-norm change of ``rho(t)``, ``t <= t_max``, between consecutive kmax.

    Every variant and both biases of ``p`` enter the maximum.
    """
    ks = list(kmax_list)
    if ks != sorted(ks) or len(ks) < 2:
        raise ValueError("kmax_list must be ascending with at least two entries")
    short = replace(p, duration=min(p.duration, t_max))
    traj = {}
    for k in ks:
        runs = [_run_pair((replace(short, kmax=k), v)) for v in p.variants]
        traj[k] = np.concatenate([np.stack([c.states, q.states]) for c, q in runs])
    return [(a, b, float(np.max(np.abs(traj[b] - traj[a]))))
            for a, b in zip(ks, ks[1:])]
