"""Scenario sweeps, the finite-to-limiting convergence study and plot exports.

Every sweep row draws its noise from the same master seed and path indices,
so row-to-row differences are purely parametric (common random numbers).
Outputs are plain rows ready for CSV; see :mod:`interbank_mfg.io`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import MarketParams, validate_params
from .riccati import StrategyMode, build_extended_system, solve_major_lqr_oracle, solve_riccati
from .risk import LossHistogram, RiskReport, estimate_risk_report, loss_distribution
from .simulate import (
    RngPolicy,
    SimGrid,
    chunk_bounds,
    run_finite_chunk,
    run_limiting_chunk,
    simulate_finite,
    simulate_limiting,
)

__all__ = [
    "SimSettings",
    "SweepRow",
    "ScenarioSweep",
    "ConvergenceResult",
    "NoMatchingPathError",
    "sweep_size_G",
    "sweep_friction_a",
    "convergence_study",
    "export_trajectories",
    "export_phi",
    "FIGURE_SCENARIOS",
    "DEFAULT_G_VALUES",
    "DEFAULT_A_VALUES",
]

DEFAULT_G_VALUES = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
DEFAULT_A_VALUES = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]


@dataclass(frozen=True)
class SimSettings:
    """Monte Carlo knobs shared by every experiment."""

    seed: int
    N: int = 10
    n_paths: int = 50_000
    n_steps: int = 100
    riccati_steps: int = 1000
    mode: StrategyMode = StrategyMode.DERIVATION
    crn: bool = True
    antithetic: bool = False
    chunk_size: int = 5000
    workers: int = 1
    retain_trajectories: int = 16
    limiting: bool = False
    M: int = 10_000
    limiting_paths: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "mode", StrategyMode.parse(self.mode))

    def rng(self, scenario: int = 0) -> RngPolicy:
        return RngPolicy(self.seed, scenario_crn=self.crn, antithetic=self.antithetic).for_scenario(scenario)

    def grid(self, p: MarketParams) -> SimGrid:
        return SimGrid(self.n_steps, p.T)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mode"] = self.mode.value
        return d


@dataclass
class SweepRow:
    parameter: str
    value: float
    variant: str                 # "with_major", "no_major" or "baseline"
    params: MarketParams
    report: RiskReport
    losses: LossHistogram
    noise_checksum: str
    limiting: RiskReport | None = None

    @property
    def has_major(self) -> bool:
        return self.params.G > 0


@dataclass
class ScenarioSweep:
    parameter: str
    values: list
    base: MarketParams
    settings: SimSettings
    rows: list = field(default_factory=list)

    def select(self, variant: str):
        return [r for r in self.rows if r.variant == variant]

    def series(self, variant: str, name: str):
        """``(values, estimates, standard_errors)`` for one report column."""
        rows = self.select(variant)
        est = np.array([getattr(r.report, name) for r in rows], dtype=float)
        se = np.array([getattr(r.report, "se_" + name) for r in rows], dtype=float)
        return np.array([r.value for r in rows]), est, se


def _run_row(p, settings: SimSettings, scenario: int, parameter, value, variant):
    validate_params(p)
    rs = solve_riccati(p, settings.mode, settings.riccati_steps)
    e = simulate_finite(p, rs, settings.N, settings.grid(p), settings.n_paths, settings.rng(scenario),
                        settings.mode, chunk_size=settings.chunk_size, workers=settings.workers,
                        retain_trajectories=0)
    lim = None
    if settings.limiting:
        el = simulate_limiting(p, rs, settings.M, settings.grid(p), settings.limiting_paths,
                               settings.rng(scenario), settings.mode, chunk_size=settings.chunk_size,
                               workers=settings.workers, retain_trajectories=0)
        lim = estimate_risk_report(el)
    return SweepRow(parameter, float(value), variant, p, estimate_risk_report(e), loss_distribution(e),
                    e.noise_checksum, lim)


def sweep_size_G(base: MarketParams, values, settings: SimSettings) -> ScenarioSweep:
    """Tables 1-2 layout: a ``G = 0`` baseline row, then one row per ``G``.

    ``a`` is held at ``base.a``; ``a0`` and ``F`` are re-derived per row.
    """
    values = [float(g) for g in values]
    sweep = ScenarioSweep("G", values, base, settings)
    sweep.rows.append(_run_row(base.with_clearing(G=0.0), settings, 0, "G", 0.0, "baseline"))
    for j, g in enumerate(values, start=1):
        sweep.rows.append(_run_row(base.with_clearing(G=g), settings, j, "G", g, "with_major"))
    return sweep


def sweep_friction_a(base: MarketParams, values, settings: SimSettings) -> ScenarioSweep:
    """Tables 3-4 layout: for each ``a``, a no-major row and a with-major row.

    The with-major rows keep ``G = base.G`` (0.5 in the published design), so
    ``a0 = a G``.  No-major rows use ``G = 0, F = 1`` in the same engine.
    """
    values = [float(a) for a in values]
    sweep = ScenarioSweep("a", values, base, settings)
    for j, a in enumerate(values):
        sweep.rows.append(_run_row(base.with_clearing(a=a, G=0.0), settings, 2 * j, "a", a, "no_major"))
        sweep.rows.append(_run_row(base.with_clearing(a=a), settings, 2 * j + 1, "a", a, "with_major"))
    return sweep


# -- convergence -----------------------------------------------------------------

@dataclass
class ConvergenceResult:
    N_values: list
    median_sup_average: np.ndarray   # per N
    median_sup_market: np.ndarray
    sup_average: dict                # N -> per-path sup_t |x^(N) - xbar|
    times: np.ndarray
    example_path: int
    limiting_average: np.ndarray     # designated path
    limiting_market: np.ndarray
    finite_average: dict             # N -> designated path
    finite_market: dict

    def rows(self):
        return [
            {"N": n, "median_sup_average": float(a), "median_sup_market": float(m)}
            for n, a, m in zip(self.N_values, self.median_sup_average, self.median_sup_market)
        ]


def convergence_study(p: MarketParams, N_list, settings: SimSettings, n_paths: int | None = None,
                      example_path: int = 0) -> ConvergenceResult:
    """Distance between ``x^(N)`` and the mean field with shared major noise.

    For each path the finite systems (one per ``N``) and the limiting
    ``(x0, xbar)`` subsystem are driven by the same major-bank increments.
    """
    validate_params(p)
    n_paths = settings.n_paths if n_paths is None else n_paths
    rs = solve_riccati(p, settings.mode, settings.riccati_steps)
    grid = settings.grid(p)
    phi_k, phi0_k = rs.at(grid.times)
    rng = settings.rng()
    N_list = [int(n) for n in N_list]
    sup_avg = {n: [] for n in N_list}
    sup_mkt = {n: [] for n in N_list}
    fin_avg, fin_mkt = {}, {}
    lim_avg = lim_mkt = None
    width = max(N_list)
    chunk = max(1, min(settings.chunk_size, int(2e7 // (grid.n_steps * width))))
    for lo, hi in chunk_bounds(n_paths, chunk):
        ids = np.arange(lo, hi)
        z0 = rng.major_normals(ids, grid.n_steps)
        lim = run_limiting_chunk(p, phi_k, phi0_k, settings.mode, grid, z0,
                                 rng.minor_normals(ids, grid.n_steps, 1), record_paths=True, offset=lo)
        if lo <= example_path < hi:
            lim_avg = lim["average_path"][example_path - lo].copy()
            lim_mkt = lim["market_path"][example_path - lo].copy()
        for n in N_list:
            fin = run_finite_chunk(p, phi_k, phi0_k, settings.mode, grid, z0,
                                   rng.minor_normals(ids, grid.n_steps, n), record_paths=True, offset=lo)
            sup_avg[n].append(np.max(np.abs(fin["average_path"] - lim["average_path"]), axis=1))
            sup_mkt[n].append(np.max(np.abs(fin["market_path"] - lim["market_path"]), axis=1))
            if lo <= example_path < hi:
                fin_avg[n] = fin["average_path"][example_path - lo].copy()
                fin_mkt[n] = fin["market_path"][example_path - lo].copy()
    sup_avg = {n: np.concatenate(v) for n, v in sup_avg.items()}
    sup_mkt = {n: np.concatenate(v) for n, v in sup_mkt.items()}
    return ConvergenceResult(
        N_values=N_list,
        median_sup_average=np.array([np.median(sup_avg[n]) for n in N_list]),
        median_sup_market=np.array([np.median(sup_mkt[n]) for n in N_list]),
        sup_average=sup_avg,
        times=grid.times,
        example_path=example_path,
        limiting_average=lim_avg,
        limiting_market=lim_mkt,
        finite_average=fin_avg,
        finite_market=fin_mkt,
    )


# -- figure exports -------------------------------------------------------------

class NoMatchingPathError(LookupError):
    pass


# panel name -> (parameter overrides, major defaults?)
FIGURE_SCENARIOS = {
    "fig2": {
        "a_G0.1_major_survives": ({"a": 5.0, "G": 0.1}, False),
        "b_G0.9_major_survives": ({"a": 5.0, "G": 0.9}, False),
        "c_G0.1_major_defaults": ({"a": 5.0, "G": 0.1}, True),
        "d_G0.9_major_defaults": ({"a": 5.0, "G": 0.9}, True),
    },
    "fig4": {
        "a_a1_major_survives": ({"a": 1.0, "G": 0.5}, False),
        "b_a10_major_survives": ({"a": 10.0, "G": 0.5}, False),
        "c_a1_major_defaults": ({"a": 1.0, "G": 0.5}, True),
        "d_a10_major_defaults": ({"a": 10.0, "G": 0.5}, True),
    },
}


def export_trajectories(p: MarketParams, scenario: str, settings: SimSettings, n_minors: int = 10,
                        panels=None):
    """Trajectory panels for a named figure configuration.

    Panels with the same conditioning share one path index, chosen as the
    first retained path meeting the condition in every such panel, so the
    underlying noise is identical across them.  ``panels`` restricts the
    export to a subset of panel names.  Returns
    ``{panel: [(path, t, bank_id, x), ...]}``.
    """
    if scenario not in FIGURE_SCENARIOS:
        raise KeyError(f"unknown figure scenario {scenario!r}; choose from {sorted(FIGURE_SCENARIOS)}")
    available = FIGURE_SCENARIOS[scenario]
    if panels is None:
        panels = available
    else:
        unknown = set(panels) - set(available)
        if unknown:
            raise KeyError(f"unknown panels {sorted(unknown)} for {scenario}; choose from {sorted(available)}")
        panels = {name: available[name] for name in available if name in set(panels)}
    R = max(1, settings.retain_trajectories)
    runs = {}
    for name, (over, _) in panels.items():
        key = tuple(sorted(over.items()))
        if key not in runs:
            q = p.with_clearing(**over)
            validate_params(q)
            rs = solve_riccati(q, settings.mode, settings.riccati_steps)
            runs[key] = simulate_finite(q, rs, n_minors, settings.grid(q), R, settings.rng(),
                                        settings.mode, chunk_size=settings.chunk_size,
                                        retain_trajectories=R)
    chosen = {}
    for defaults in (False, True):
        keys = [tuple(sorted(o.items())) for o, d in panels.values() if d is defaults]
        if not keys:
            continue
        ok = np.ones(R, dtype=bool)
        for key in keys:
            e = runs[key]
            ok &= (e.major_min[:R] <= e.params.D) == defaults
        if not ok.any():
            which = "defaulting" if defaults else "non-defaulting"
            raise NoMatchingPathError(
                f"no retained path has a {which} major bank in every panel; "
                f"retain more trajectories (currently {R})"
            )
        chosen[defaults] = int(np.argmax(ok))
    out = {}
    for name, (over, defaults) in panels.items():
        tr = runs[tuple(sorted(over.items()))].trajectories
        j = chosen[defaults]
        rows = []
        for k, t in enumerate(tr.times):
            for b in range(tr.minors.shape[2]):
                rows.append((j, float(t), f"minor_{b + 1}", float(tr.minors[j, k, b])))
            rows.append((j, float(t), "major", float(tr.major[j, k])))
            rows.append((j, float(t), "market", float(tr.market[j, k])))
        out[name] = rows
    return out


def export_phi(p: MarketParams, mode=StrategyMode.DERIVATION, steps: int = 1000):
    """Rows ``(t, phi, phi0, implied_phi0_oracle, minor_rate, major_rate)``.

    ``minor_rate = a + q - phi`` and ``major_rate = a0 + q0 - phi0`` are the
    effective mean-reversion levels once the central-bank trades are added.
    """
    validate_params(p)
    rs = solve_riccati(p, mode, steps)
    oracle = solve_major_lqr_oracle(build_extended_system(p), replace(rs, phi0=None), steps)
    minor_rate, major_rate = rs.mean_reversion_levels(p)
    return [
        (float(t), float(a), float(b), float(c), float(d), float(e))
        for t, a, b, c, d, e in zip(rs.grid, rs.phi, rs.phi0, oracle.implied_phi0, minor_rate, major_rate)
    ]
