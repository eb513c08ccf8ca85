"""
Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 memory
budget refusal, 5 oracle tolerance failure. Diagnostics go to stderr as
``spinbath:<kind>:<field>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from spinbath import __version__
from spinbath.analysis import (SCENARIOS, ScenarioPreset, UndefinedTimescaleError,
                               Variant, _run_pair, measure_timescales, preset,
                               scenario_run)
from spinbath.bath import (BathSpec, Effective, Ohmic, QuadratureError,
                           evaluate_j, memory_time, tabulate_density,
                           tabulate_response)
from spinbath.config import ConfigError, RunConfig, load_config
from spinbath.influence import eta_coefficients
from spinbath.oracle import DiscreteBath, dephasing_exact, exact_diag_evolve
from spinbath.propagator import (BUDGET_ENV, MemoryBudgetError, QubitHamiltonian,
                                 _atomic_write, _jsonable, _write_rows, evolve,
                                 memory_budget)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_MEMORY = 4
EXIT_TOLERANCE = 5

DEPHASING_RTOL = 1e-3
QUAPI_ATOL = 5e-2


def _diag(kind, field, message):
    print(f"spinbath:{kind}:{field}: {message}", file=sys.stderr)


def _budget(cfg: RunConfig):
    if os.environ.get(BUDGET_ENV):
        return memory_budget()
    return cfg.memory_budget if cfg.memory_budget is not None else memory_budget()


def _out_dir(args, cfg):
    path = args.out or cfg.directory
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    _atomic_write(path, lambda fh: fh.write(text + "\n"))


def _config_preset(cfg: RunConfig, variant: Variant) -> ScenarioPreset:
    return ScenarioPreset(
        name="custom", variants=(variant,), band=cfg.band, kondo=cfg.kondo,
        theta=cfg.theta, damping=cfg.damping, epsilon_tau2=cfg.epsilon_tau2,
        epsilon_tau1=cfg.epsilon_tau1, dt=cfg.dt, kmax=cfg.kmax,
        duration=cfg.dt * cfg.steps, cutoff=cfg.cutoff,
        symmetric_cutoff=cfg.symmetric_cutoff, atol=cfg.atol, rtol=cfg.rtol)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.override)
    if cfg.scenario is not None:
        return _scenario(cfg.scenario, [], args.out or cfg.directory, args.threads)
    out = _out_dir(args, cfg)
    bath = cfg.bath()
    grid = cfg.grid()
    eta = eta_coefficients(bath, grid, cfg.kmax, atol=cfg.atol, rtol=cfg.rtol)
    traj = evolve(cfg.hamiltonian(), bath, grid, cfg.kmax, cfg.rho0(),
                  eta=eta, budget=_budget(cfg))
    traj.metadata.update({"config": cfg.to_ini(), "version": __version__,
                          "numpy": np.__version__})
    stem = os.path.join(out, cfg.prefix)
    traj.to_csv(stem + ".csv")
    traj.to_json(stem + ".json")
    if args.dump_eta:
        eta.to_csv(stem + "_eta.csv")
    for w in traj.metadata["warnings"]:
        _diag("warning", "kmax", w)
    return EXIT_OK


def _parse_preset_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError("override", f"expected KEY=VALUE, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key == "omegas":
            out[key] = tuple(float(v) for v in raw.split(","))
        elif key in ("kmax",):
            out[key] = int(raw)
        elif key in ("band",):
            out[key] = raw
        elif key == "symmetric_cutoff":
            out[key] = raw.lower() in ("1", "true", "yes", "on")
        elif key in ScenarioPreset.__dataclass_fields__ and key not in ("name", "variants"):
            try:
                out[key] = float(raw)
            except ValueError:
                raise ConfigError(key, f"cannot parse {raw!r}") from None
        else:
            raise ConfigError(key, "unknown scenario override")
    return out


def _scenario(name, overrides, out, threads) -> int:
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {name!r}; choose from {SCENARIOS}")
    p = preset(name, **_parse_preset_overrides(overrides))
    bundle = scenario_run(p, workers=max(1, threads))
    directory = os.path.join(out, name)
    bundle.write(directory)
    for c in bundle.comparisons:
        print(f"{name}: {'holds' if c['holds'] else 'fails'}: {c['claim']}")
    return EXIT_OK


def cmd_scenario(args) -> int:
    out = args.out or "out"
    return _scenario(args.name, args.override, out, args.threads)


def cmd_bathinfo(args) -> int:
    cfg = load_config(args.config, args.override)
    out = _out_dir(args, cfg)
    band = cfg.frequency_band()
    wc = band.omega_max if cfg.cutoff is None else cfg.cutoff
    ohm = Ohmic(cfg.kondo, wc)
    eff = Effective(cfg.coupling_product, cfg.kondo, cfg.iho_frequency, cfg.damping,
                    wc, symmetric_cutoff=cfg.symmetric_cutoff)
    omegas = np.linspace(band.omega_min, band.omega_max, args.points)
    dens = tabulate_density(omegas, ohm, eff)
    bath = cfg.bath()
    times = np.linspace(0.0, args.t_max, args.points)
    resp = tabulate_response(bath, times)
    mt = memory_time(bath, t_max=args.memory_horizon, dt_scan=args.memory_horizon / 2000)

    je = dens[:, 2]
    inner = np.nonzero((je[1:-1] > je[:-2]) & (je[1:-1] > je[2:]))[0] + 1
    summary = {
        "model": cfg.model,
        "band": [band.omega_min, band.omega_max],
        "cutoff": wc,
        "ohmic_peak": float(omegas[np.argmax(dens[:, 1])]),
        "effective_local_maxima": [float(omegas[i]) for i in inner],
        "iho_frequency_in_band": bool(band.omega_min < cfg.iho_frequency <= band.omega_max),
        "effective_at_iho_frequency": float(evaluate_j(eff, cfg.iho_frequency)),
        "memory_time": mt.time,
        "memory_time_reached": mt.reached,
    }
    _atomic_write(os.path.join(out, "density.csv"),
                  lambda fh: _write_rows(fh, ["omega", "j_ohmic", "j_effective"], dens))
    _atomic_write(os.path.join(out, "response.csv"),
                  lambda fh: _write_rows(fh, ["t", "re_alpha", "im_alpha"], resp))
    _write_json(os.path.join(out, "bathinfo.json"), summary)
    print(f"memory time: {mt.time:.6g}{'' if mt.reached else ' (not reached)'}")
    return EXIT_OK


def oracle_check(cfg: RunConfig):
    """Compare the propagator, exact diagonalisation and the dephasing formula.

    The qubit splitting is ``[discrete] tunneling`` (in units of the
    configured splitting); with zero tunneling the analytic dephasing
    formula is added as a third leg. Returns a report with one entry per
    check and an overall ``passed`` flag.
    """
    db = DiscreteBath(cfg.modes, fock_cutoff=cfg.fock_cutoff)
    beta = 1.0 / cfg.theta
    h = QubitHamiltonian(cfg.epsilon, cfg.tunneling)
    grid = cfg.grid()
    rho0 = cfg.rho0()
    exact = exact_diag_evolve(h, db, rho0, grid, beta)
    bath = BathSpec(db.as_density(), beta)
    quapi = evolve(h, bath, grid, grid.steps, rho0, budget=_budget(cfg))
    checks = []
    dev = float(np.max(np.abs(quapi.states - exact.states)))
    checks.append({"check": "propagator vs exact diagonalization",
                   "max_abs_deviation": dev, "tolerance": QUAPI_ATOL,
                   "passed": bool(dev <= QUAPI_ATOL)})
    if cfg.tunneling == 0.0:
        ana = dephasing_exact(db, cfg.epsilon, rho0, grid.times, beta=beta)
        mask = np.abs(ana) > 1e-12
        rel = float(np.max(np.abs(ana - exact.rho12)[mask] / np.abs(ana)[mask],
                           initial=0.0))
        checks.append({"check": "dephasing formula vs exact diagonalization",
                       "max_rel_deviation": rel, "tolerance": DEPHASING_RTOL,
                       "passed": bool(rel <= DEPHASING_RTOL)})
    return {"checks": checks, "passed": all(c["passed"] for c in checks),
            "warnings": list(exact.metadata["warnings"]) + list(quapi.metadata["warnings"])}


def cmd_oracle_check(args) -> int:
    cfg = load_config(args.config, args.override)
    out = _out_dir(args, cfg)
    report = oracle_check(cfg)
    _write_json(os.path.join(out, f"{cfg.prefix}_oracle.json"), report)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}")
    return EXIT_OK if report["passed"] else EXIT_TOLERANCE


def _sweep_point(args):
    cfg, point = args
    cfg = replace(cfg, **point)
    variant = Variant("point", cfg.model, cfg.coupling_product, cfg.iho_frequency)
    p = _config_preset(cfg, variant)
    try:
        coh, pop = _run_pair((p, variant))
        rep = measure_timescales(coh, pop, 1.0 / cfg.theta)
        return {**point, "tau1": rep.tau1.time, "tau2": rep.tau2.time,
                "equilibrium_rho11": rep.equilibrium_rho11, "error": ""}
    except (ArithmeticError, MemoryError, ValueError) as exc:
        return {**point, "tau1": math.nan, "tau2": math.nan,
                "equilibrium_rho11": math.nan, "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.override)
    points = cfg.sweep_points()
    if not points:
        raise ConfigError("sweep", "empty sweep grid")
    out = _out_dir(args, cfg)
    jobs = [(cfg, p) for p in points]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    names = [name for name, _ in cfg.sweep]
    header = names + ["tau1", "tau2", "equilibrium_rho11"]

    def write(fh):
        fh.write(",".join(header + ["error"]) + "\n")
        for r in rows:
            nums = [f"{r[k]:.17g}" for k in header]
            fh.write(",".join(nums + [r["error"].replace(",", ";")]) + "\n")

    _atomic_write(os.path.join(out, f"{cfg.prefix}_sweep.csv"), write)
    failed = [r for r in rows if r["error"]]
    for r in failed:
        _diag("numerical", "sweep", f"{ {k: r[k] for k in names} }: {r['error']}")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinbath",
        description="Path-integral dynamics of a qubit in an Ohmic bath, "
                    "coupled directly or through an intermediate oscillator.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="INI configuration file")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for independent runs")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")

    p = sub.add_parser("simulate", help="propagate one configuration")
    common(p)
    p.add_argument("--dump-eta", action="store_true", help="also write the eta table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario", help="run a reference scenario (fig4, fig5, fig6)")
    p.add_argument("name", choices=SCENARIOS)
    common(p, config_required=False)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("bathinfo", help="tabulate J(omega), alpha(t) and the memory time")
    common(p)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--t-max", type=float, default=5.0)
    p.add_argument("--memory-horizon", type=float, default=100.0)
    p.set_defaults(func=cmd_bathinfo)

    p = sub.add_parser("oracle-check", help="cross-check against exact solutions")
    common(p)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("sweep", help="timescales over one or two swept parameters")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _diag("validation", exc.field, exc.message)
        return EXIT_VALIDATION
    except MemoryBudgetError as exc:
        _diag("memory", "kmax", str(exc))
        return EXIT_MEMORY
    except (QuadratureError, UndefinedTimescaleError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        _diag("numerical", type(exc).__name__, str(exc))
        return EXIT_NUMERICAL
    except ValueError as exc:
        _diag("validation", "input", str(exc))
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
