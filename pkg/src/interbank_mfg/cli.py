"""Command-line entry point.

Every subcommand resolves its parameters and runs to completion before any
file is written, so a failed run leaves the output directory untouched.
Errors print one line, ``error: <category>: <message>``, and exit with a
status specific to the category.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    FIGURE_SCENARIOS,
    DEFAULT_A_VALUES,
    DEFAULT_G_VALUES,
    NoMatchingPathError,
    SimSettings,
    convergence_study,
    export_phi,
    export_trajectories,
    sweep_friction_a,
    sweep_size_G,
)
from .io import csv_text, json_text, loss_table, risk_table, sha256_file, trajectory_rows
from .model import ConfigError, MarketParams, ParameterError, load_config, validate_params
from .riccati import RiccatiError, StrategyMode, solve_riccati
from .risk import RISK_COLUMNS, estimate_risk_report, loss_distribution
from .simulate import SimGrid, SimulationError, simulate_finite, simulate_limiting
from .validate import evaluate_cost, minor_gap_study, mode_comparison

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PARAMETER = 4
EXIT_NUMERICAL = 5
EXIT_NO_MATCH = 6

STOCHASTIC = {"simulate", "sweep-g", "sweep-a", "converge", "export", "validate", "loss-dist"}


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seed: int | None
    mode: str
    settings: dict
    version: str = __version__
    outputs: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _seed(text: str) -> int:
    try:
        s = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= s < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return s


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value parameter file")
    common.add_argument("--seed", type=_seed, help="master seed (required for simulations)")
    common.add_argument("--mode", default="derivation", help="theorem | derivation | oracle")
    common.add_argument("--paths", type=_positive, help="number of Monte Carlo paths")
    common.add_argument("--steps", type=_positive, help="time steps (simulation grid; Riccati grid for `riccati`)")
    common.add_argument("--riccati-steps", type=_positive, default=1000)
    common.add_argument("--workers", type=_positive, default=1)
    common.add_argument("--chunk-size", type=_positive, default=5000)
    common.add_argument("--retain-costs", action="store_true")
    common.add_argument("--retain-trajectories", type=int, default=0, metavar="N")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    parser = argparse.ArgumentParser(prog="interbank-mfg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("riccati", parents=[common], help="coefficient paths phi, phi0 and the matrix oracle")

    p = sub.add_parser("simulate", parents=[common], help="one ensemble with per-path summaries")
    p.add_argument("--N", type=_positive, default=10, help="minor banks (finite market)")
    p.add_argument("--limiting", action="store_true", help="simulate the limiting market instead")
    p.add_argument("--M", type=_positive, default=10_000, help="representative minors (limiting market)")

    for name in ("sweep-g", "sweep-a"):
        p = sub.add_parser(name, parents=[common], help=f"risk table over {name[-1]}")
        p.add_argument("--N", type=_positive, default=10)
        p.add_argument("--no-crn", action="store_true", help="independent noise per row")
        p.add_argument("--no-loss", action="store_true", help="skip the loss-histogram CSV")

    sub.add_parser("converge", parents=[common], help="finite vs limiting distances for each N in n_list")

    p = sub.add_parser("export", parents=[common], help="plot-ready CSV for a named figure")
    p.add_argument("--figure", required=True, choices=sorted(FIGURE_SCENARIOS) + ["fig5"])
    p.add_argument("--panel", action="append", help="export only this panel (repeatable)")

    p = sub.add_parser("validate", parents=[common], help="best-response gaps and strategy-variant report")
    p.add_argument("--directions", type=_positive, default=20)
    p.add_argument("--skip-modes", action="store_true", help="only the minor-bank gap study")

    p = sub.add_parser("loss-dist", parents=[common], help="distribution of the number of defaulted minors")
    p.add_argument("--N", type=_positive, default=10)
    return parser


def _resolve(args):
    if args.config is not None:
        params, lists = load_config(args.config)
    else:
        params, lists = validate_params(MarketParams()), {}
    try:
        mode = StrategyMode.parse(args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.command in STOCHASTIC and not (args.command == "export" and args.figure == "fig5"):
        if args.seed is None:
            raise UsageError(f"`{args.command}` needs --seed (all randomness derives from it)")
    if args.retain_trajectories < 0:
        raise UsageError("--retain-trajectories must be >= 0")
    return params, lists, mode


def _settings(args, mode, default_paths, **kw) -> SimSettings:
    return SimSettings(
        seed=args.seed if args.seed is not None else 0,
        N=getattr(args, "N", 10),
        n_paths=args.paths or default_paths,
        n_steps=args.steps or 100,
        riccati_steps=args.riccati_steps,
        mode=mode,
        chunk_size=args.chunk_size,
        workers=args.workers,
        retain_trajectories=args.retain_trajectories,
        **kw,
    )


# -- subcommands: each returns ({filename: text}, settings dict, extra) --------

def _cmd_riccati(args, p, lists, mode):
    rows = export_phi(p, mode, args.steps or args.riccati_steps)
    header = ["t", "phi", "phi0", "implied_phi0_oracle", "minor_rate", "major_rate"]
    return {"riccati.csv": csv_text(header, rows)}, {"riccati_steps": args.steps or args.riccati_steps}, {}


def _cmd_simulate(args, p, lists, mode):
    s = _settings(args, mode, 50_000 if not args.limiting else 5000)
    rs = solve_riccati(p, mode, s.riccati_steps)
    grid = s.grid(p)
    sim = simulate_limiting if args.limiting else simulate_finite
    width = args.M if args.limiting else args.N
    e = sim(p, rs, width, grid, s.n_paths, s.rng(), mode, chunk_size=s.chunk_size, workers=s.workers,
            retain_trajectories=s.retain_trajectories, retain_costs=args.retain_costs)
    r = estimate_risk_report(e)
    files = {}
    frac = r.minor_default_fraction
    header = ["path", "major_min", "average_min", "market_min", "minor_default_fraction",
              "major_default", "systemic_event"]
    rows = [
        (j, e.major_min[j], e.average_min[j], e.market_min[j], frac[j],
         e.major_min[j] <= p.D, e.market_min[j] <= p.D)
        for j in range(e.n_paths)
    ]
    files["summary.csv"] = csv_text(header, rows)
    d = r.row()
    files["risk.csv"] = csv_text(RISK_COLUMNS, [[d[c] for c in RISK_COLUMNS]])
    if e.trajectories is not None:
        files["trajectories.csv"] = csv_text(["path", "t", "bank_id", "x"], trajectory_rows(e.trajectories))
    extra = {"kind": e.kind, "width": width, "noise_checksum": e.noise_checksum}
    if args.retain_costs:
        _, _, major = evaluate_cost(e, "major")
        _, _, minors = evaluate_cost(e, "minors")
        _, _, first = evaluate_cost(e, 0)
        files["costs.csv"] = csv_text(["path", "major_cost", "minor_1_cost", "mean_minor_cost"],
                                      [(j, major[j], first[j], minors[j]) for j in range(e.n_paths)])
        extra["mean_cost"] = {"major": float(major.mean()), "minor": float(minors.mean())}
    return files, s.to_dict(), extra


def _sweep(args, p, lists, mode, fn, key, default):
    s = _settings(args, mode, 50_000, crn=not args.no_crn)
    values = lists.get(key, default)
    sweep = fn(p, values, s)
    files = {"risk.csv": csv_text(*risk_table(sweep))}
    if not args.no_loss:
        files["loss.csv"] = csv_text(*loss_table(sweep))
    checksums = sorted({r.noise_checksum for r in sweep.rows})
    return files, s.to_dict(), {key: values, "noise_checksums": checksums}


def _cmd_sweep_g(args, p, lists, mode):
    return _sweep(args, p, lists, mode, sweep_size_G, "g_values", DEFAULT_G_VALUES)


def _cmd_sweep_a(args, p, lists, mode):
    return _sweep(args, p, lists, mode, sweep_friction_a, "a_values", DEFAULT_A_VALUES)


def _cmd_converge(args, p, lists, mode):
    s = _settings(args, mode, 1000)
    N_list = lists.get("n_list", [10, 100])
    c = convergence_study(p, N_list, s)
    files = {"convergence.csv": csv_text(["N", "median_sup_average", "median_sup_market"],
                                         [[r["N"], r["median_sup_average"], r["median_sup_market"]]
                                          for r in c.rows()])}
    header = ["t", "limiting_average", "limiting_market"]
    cols = [c.limiting_average, c.limiting_market]
    for n in c.N_values:
        header += [f"average_N{n}", f"market_N{n}"]
        cols += [c.finite_average[n], c.finite_market[n]]
    files["convergence_path.csv"] = csv_text(header, np.column_stack([c.times] + cols).tolist())
    return files, s.to_dict(), {"n_list": N_list, "example_path": c.example_path}


def _cmd_export(args, p, lists, mode):
    if args.figure == "fig5":
        return _cmd_riccati(args, p, lists, mode)
    s = _settings(args, mode, 0)
    s = SimSettings(**{**s.__dict__, "retain_trajectories": args.retain_trajectories or 64})
    try:
        panels = export_trajectories(p, args.figure, s, panels=args.panel)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    files = {f"{args.figure}_{name}.csv": csv_text(["path", "t", "bank_id", "x"], rows)
             for name, rows in panels.items()}
    return files, s.to_dict(), {"figure": args.figure}


def _cmd_validate(args, p, lists, mode):
    s = _settings(args, mode, 5000)
    N_values = lists.get("n_list", [10, 100])
    study = minor_gap_study(p, s, N_values=N_values, n_directions=args.directions)
    report = {"minor_gaps": study.to_dict()}
    if not args.skip_modes:
        report["mode_comparison"] = mode_comparison(p, s)
    return {"validation.json": json_text(report)}, s.to_dict(), {"n_list": N_values}


def _cmd_loss_dist(args, p, lists, mode):
    s = _settings(args, mode, 50_000)
    rs = solve_riccati(p, mode, s.riccati_steps)
    e = simulate_finite(p, rs, s.N, s.grid(p), s.n_paths, s.rng(), mode, chunk_size=s.chunk_size,
                        workers=s.workers, retain_trajectories=0)
    h = loss_distribution(e)
    return ({"loss.csv": csv_text(["histogram", "k", "mass"], h.rows())}, s.to_dict(),
            {"p0": h.p0, "noise_checksum": e.noise_checksum})


COMMANDS = {
    "riccati": _cmd_riccati,
    "simulate": _cmd_simulate,
    "sweep-g": _cmd_sweep_g,
    "sweep-a": _cmd_sweep_a,
    "converge": _cmd_converge,
    "export": _cmd_export,
    "validate": _cmd_validate,
    "loss-dist": _cmd_loss_dist,
}


def run(argv=None) -> int:
    """Execute one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    started = time.perf_counter()
    try:
        p, lists, mode = _resolve(args)
        files, settings, extra = COMMANDS[args.command](args, p, lists, mode)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except ParameterError as exc:
        return _fail("parameter", exc, EXIT_PARAMETER)
    except (SimulationError, RiccatiError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except NoMatchingPathError as exc:
        return _fail("no-matching-path", exc, EXIT_NO_MATCH)
    except ValueError as exc:
        return _fail("usage", exc, EXIT_USAGE)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        (out / name).write_text(text)
        written.append({"file": name, "sha256": sha256_file(out / name)})
    manifest = RunManifest(
        subcommand=args.command,
        params=p.to_dict(),
        seed=args.seed,
        mode=mode.value,
        settings=settings,
        outputs=written,
        wall_clock_seconds=round(time.perf_counter() - started, 3),
        extra=extra,
    )
    (out / "manifest.json").write_text(json_text(manifest.to_dict()))
    for w in written:
        print(out / w["file"])
    return EXIT_OK


def _fail(category: str, exc: Exception, status: int) -> int:
    msg = " ".join(str(exc).split())
    print(f"error: {category}: {msg}", file=sys.stderr)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
