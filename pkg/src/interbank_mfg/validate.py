"""Numerical checks of the equilibrium: cost functionals and best-response gaps.

A best-response gap is the change in one bank's expected cost when it alone
deviates from its feedback rule, ``u -> u* + delta * omega``, while every
other bank keeps its rule.  All deviations of one study are simulated on the
same noise as the unperturbed market, so ``gap(0) = 0`` exactly and the
gaps' standard errors come from per-path differences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .experiments import SimSettings
from .model import MarketParams, validate_params
from .riccati import RiccatiSolution, StrategyMode, solve_riccati
from .risk import UnsupportedEnsembleError
from .simulate import (
    CostIntegrals,
    PathEnsemble,
    Perturbation,
    SimGrid,
    chunk_bounds,
    coefficients_on_grid,
    run_finite_chunk,
    run_limiting_chunk,
)

__all__ = [
    "PerturbationSpec",
    "BestResponseResult",
    "GapStudy",
    "evaluate_cost",
    "path_cost",
    "random_directions",
    "best_response_gap",
    "best_response_study",
    "measure_epsilon",
    "minor_gap_study",
    "mode_comparison",
    "MODE_VARIANTS",
]


def path_cost(times, u, g, q: float, eps: float, c: float) -> float:
    """Cost of one control/gap path, trapezoid rule in time.

    ``int (u^2/2 - q u g + eps g^2/2) dt + c g_T^2 / 2``.
    """
    times, u, g = (np.asarray(v, dtype=float) for v in (times, u, g))
    f = 0.5 * u * u - q * u * g + 0.5 * eps * g * g
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(times)) + 0.5 * c * g[-1] ** 2)


def _target_cost(costs: CostIntegrals, who, p: MarketParams) -> np.ndarray:
    if who == "major":
        return CostIntegrals.combine(costs.major, p.q0, p.eps0, p.c0)
    per_minor = CostIntegrals.combine(costs.minors, p.q, p.eps, p.c)
    if who == "minors":
        return per_minor.mean(axis=1)
    return per_minor[:, int(who)]


def evaluate_cost(e: PathEnsemble, who="major", p: MarketParams | None = None):
    """Mean cost of one bank over the ensemble, with its standard error.

    ``who`` is ``"major"``, a minor index, or ``"minors"`` for the average
    over all minors of each path.  Returns ``(mean, se, per_path)``.
    """
    if e.costs is None:
        raise UnsupportedEnsembleError("ensemble was simulated without cost integrals (retain_costs=False)")
    p = e.params if p is None else p
    x = _target_cost(e.costs, who, p)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se, x


# -- deviations -------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """Deviation ``delta * omega_t`` (open loop) or ``delta * omega_t * gap_t`` (feedback).

    ``direction`` holds values on the simulation grid.
    """

    target: object
    direction: np.ndarray
    magnitudes: tuple = (-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2)
    kind: str = "open_loop"
    label: str = ""

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.ndim != 1 or not np.isfinite(d).all():
            raise ValueError("direction must be a finite 1-d array on the grid")
        if 0.0 not in self.magnitudes:
            raise ValueError("magnitudes must include 0")
        if self.kind not in ("open_loop", "feedback"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not (self.target == "major" or (isinstance(self.target, (int, np.integer)) and self.target >= 0)):
            raise ValueError(f"target must be 'major' or a minor index, got {self.target!r}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "magnitudes", tuple(float(m) for m in self.magnitudes))

    def l2_norm(self, dt: float) -> float:
        return float(math.sqrt(np.sum(self.direction ** 2) * dt))


def random_directions(grid: SimGrid, n: int, seed: int):
    """``n`` seeded deterministic directions cycling through tilted
    constants, single bumps and random step functions.

    Each is scaled to unit mean square over ``[0, T]``.  Returns a list of
    ``(label, omega, description)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    t = grid.times
    out = []
    for j in range(n):
        kind = ("affine", "bump", "steps")[j % 3]
        if kind == "affine":
            # a constant shift plus a random tilt, so repeats are distinct
            tilt = float(rng.uniform(-3.0, 3.0))
            w = 1.0 + tilt * (t / grid.T - 0.5)
            desc = {"type": kind, "tilt": tilt}
        elif kind == "bump":
            lo, hi = np.sort(rng.uniform(0, grid.T, size=2))
            if hi - lo < 0.1 * grid.T:
                hi = min(grid.T, lo + 0.1 * grid.T)
                lo = hi - 0.1 * grid.T
            w = ((t >= lo) & (t <= hi)).astype(float)
            desc = {"type": kind, "start": float(lo), "end": float(hi)}
        else:
            pieces = int(rng.integers(2, 6))
            heights = rng.standard_normal(pieces)
            w = heights[np.minimum((t / grid.T * pieces).astype(int), pieces - 1)]
            desc = {"type": kind, "heights": heights.tolist()}
        w = w / math.sqrt(np.mean(w ** 2))
        out.append((f"{kind}_{j}", w, desc))
    return out


@dataclass
class BestResponseResult:
    """Paired gaps ``J(delta) - J(0)`` for one deviation direction."""

    target: object
    label: str
    kind: str
    deltas: np.ndarray
    cost: np.ndarray
    cost_se: np.ndarray
    gap: np.ndarray
    gap_se: np.ndarray
    curvature: float        # kappa in gap ~ beta delta + kappa delta^2
    curvature_se: float
    slope: float
    slope_se: float
    n_paths: int
    _diffs: dict = field(default_factory=dict, repr=False)

    def nonnegative(self, z: float = 2.0) -> bool:
        return bool(np.all(self.gap >= -z * self.gap_se))

    def convex(self) -> bool:
        return self.curvature > 0

    def passes(self) -> bool:
        return self.nonnegative() and self.convex()

    def evenness(self):
        """``[(delta, gap(delta) - gap(-delta), se)]`` for each ``delta > 0`` with a mirror."""
        return [(d, *self._diffs[d]) for d in sorted(self._diffs)]

    def even(self, z: float = 2.0) -> bool:
        return all(abs(diff) <= z * se for _, diff, se in self.evenness())

    def worst(self):
        """Most negative gap and its SE."""
        j = int(np.argmin(self.gap))
        return float(self.gap[j]), float(self.gap_se[j])

    def to_dict(self) -> dict:
        return {
            "target": self.target, "label": self.label, "kind": self.kind, "n_paths": self.n_paths,
            "deltas": self.deltas.tolist(), "cost": self.cost.tolist(), "cost_se": self.cost_se.tolist(),
            "gap": self.gap.tolist(), "gap_se": self.gap_se.tolist(),
            "curvature": self.curvature, "curvature_se": self.curvature_se,
            "slope": self.slope, "slope_se": self.slope_se,
            "evenness": [list(row) for row in self.evenness()],
            "nonnegative_2se": self.nonnegative(), "convex": self.convex(), "even_2se": self.even(),
        }


def _mean_se(x: np.ndarray, pairs: bool):
    if pairs:
        x = 0.5 * (x[0::2] + x[1::2])
    n = len(x)
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(x.mean()), se


def _summarise(spec: PerturbationSpec, J: np.ndarray, pairs: bool) -> BestResponseResult:
    deltas = np.array(spec.magnitudes)
    i0 = spec.magnitudes.index(0.0)
    D = J - J[:, [i0]]
    cost = np.array([_mean_se(J[:, j], pairs) for j in range(len(deltas))])
    gap = np.array([_mean_se(D[:, j], pairs) for j in range(len(deltas))])
    gap[i0] = 0.0, 0.0
    # per-path least squares of gap on (delta, delta^2); averaging is linear
    X = np.column_stack([deltas, deltas ** 2])
    coef = D @ np.linalg.pinv(X).T
    slope, slope_se = _mean_se(coef[:, 0], pairs)
    curv, curv_se = _mean_se(coef[:, 1], pairs)
    diffs = {}
    for j, d in enumerate(deltas):
        if d > 0 and -d in spec.magnitudes:
            diffs[float(d)] = _mean_se(D[:, j] - D[:, spec.magnitudes.index(-d)], pairs)
    return BestResponseResult(
        target=spec.target, label=spec.label, kind=spec.kind, deltas=deltas,
        cost=cost[:, 0], cost_se=cost[:, 1], gap=gap[:, 0], gap_se=gap[:, 1],
        curvature=curv, curvature_se=curv_se, slope=slope, slope_se=slope_se,
        n_paths=len(J), _diffs=diffs,
    )


def best_response_study(p: MarketParams, rs: RiccatiSolution, mode, specs, settings: SimSettings,
                        system: str = "finite"):
    """Gaps for many deviation specs, all sharing one set of noise draws.

    Noise is drawn once per chunk of paths and reused for the unperturbed
    run and every ``(spec, delta)`` pair.  With ``settings.antithetic`` the
    standard errors are computed over antithetic pair averages.
    """
    validate_params(p)
    mode = StrategyMode.parse(mode)
    grid = settings.grid(p)
    phi_k, phi0_k = coefficients_on_grid(rs, grid)
    rng = settings.rng()
    width = settings.N if system == "finite" else settings.M
    kernel = run_finite_chunk if system == "finite" else run_limiting_chunk
    for s in specs:
        if len(s.direction) != grid.n_steps + 1:
            raise ValueError(f"direction {s.label!r} has {len(s.direction)} points, grid has {grid.n_steps + 1}")
        if s.target != "major" and s.target >= width:
            raise ValueError(f"minor index {s.target} out of range for {width} minors")
    pairs = settings.antithetic
    if pairs and settings.n_paths % 2:
        raise ValueError("antithetic pairing needs an even number of paths")
    chunk = max(1, min(settings.chunk_size, int(2e7 // (grid.n_steps * width))))
    if pairs:
        chunk = max(2, chunk - chunk % 2)

    J = [np.empty((settings.n_paths, len(s.magnitudes))) for s in specs]
    for lo, hi in chunk_bounds(settings.n_paths, chunk):
        ids = np.arange(lo, hi)
        z0 = rng.major_normals(ids, grid.n_steps)
        zi = rng.minor_normals(ids, grid.n_steps, width)
        base = kernel(p, phi_k, phi0_k, mode, grid, z0, zi, costs=True, offset=lo)["costs"]
        base = CostIntegrals(*base)
        for s, Js in zip(specs, J):
            for j, d in enumerate(s.magnitudes):
                if d == 0.0:
                    Js[lo:hi, j] = _target_cost(base, s.target, p)
                    continue
                pert = Perturbation(s.target, s.direction, d, s.kind)
                res = kernel(p, phi_k, phi0_k, mode, grid, z0, zi, perturbation=pert, costs=True, offset=lo)
                Js[lo:hi, j] = _target_cost(CostIntegrals(*res["costs"]), s.target, p)
    return [_summarise(s, Js, pairs) for s, Js in zip(specs, J)]


def best_response_gap(p: MarketParams, rs: RiccatiSolution, mode, spec: PerturbationSpec,
                      settings: SimSettings, system: str = "finite") -> BestResponseResult:
    """Single-direction form of :func:`best_response_study`."""
    return best_response_study(p, rs, mode, [spec], settings, system)[0]


def measure_epsilon(results) -> tuple[float, float]:
    """Empirical epsilon: the most negative gap (floored at 0) and its SE."""
    worst = min((r.worst() for r in results), key=lambda ws: ws[0])
    return max(0.0, -worst[0]), worst[1]


@dataclass
class GapStudy:
    """Minor-bank gaps over seeded directions at several population sizes."""

    mode: StrategyMode
    seed: int
    directions: list                  # (label, description)
    results: dict                     # N -> list[BestResponseResult]

    def epsilon(self, N):
        return measure_epsilon(self.results[N])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "directions": [{"label": lab, **desc} for lab, desc in self.directions],
            "results": {str(N): [r.to_dict() for r in rs] for N, rs in self.results.items()},
            "epsilon": {str(N): dict(zip(("value", "se"), self.epsilon(N))) for N in self.results},
        }


def minor_gap_study(p: MarketParams, settings: SimSettings, N_values=(10, 100), n_directions: int = 20,
                    deltas=(-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2), direction_seed: int | None = None,
                    target: int = 0) -> GapStudy:
    """Best-response gaps of one minor bank at each ``N`` in ``N_values``."""
    validate_params(p)
    rs = solve_riccati(p, settings.mode, settings.riccati_steps)
    grid = settings.grid(p)
    dseed = settings.seed if direction_seed is None else direction_seed
    dirs = random_directions(grid, n_directions, dseed)
    specs = [PerturbationSpec(target, w, tuple(deltas), "open_loop", lab) for lab, w, _ in dirs]
    results = {}
    for N in N_values:
        results[int(N)] = best_response_study(p, rs, settings.mode, specs, _with(settings, N=int(N)))
    return GapStudy(settings.mode, settings.seed, [(lab, desc) for lab, _, desc in dirs], results)


def _with(settings: SimSettings, **kw) -> SimSettings:
    d = dict(settings.__dict__)
    d.update(kw)
    return SimSettings(**d)


# -- strategy variants -------------------------------------------------------------

# name -> (control-law mode, scalar phi0 form or None for the mode default)
MODE_VARIANTS = {
    "theorem": (StrategyMode.THEOREM, None),
    "sign_flipped": (StrategyMode.DERIVATION, "sign_flipped"),
    "derivation": (StrategyMode.DERIVATION, None),
    "oracle": (StrategyMode.ORACLE, None),
}


def _major_specs(grid: SimGrid, deltas):
    t = grid.times / grid.T
    shapes = {
        "constant": np.ones_like(t),
        "early": (t <= 0.5).astype(float),
        "late": (t >= 0.5).astype(float),
        "ramp": 2 * t - 1,
    }
    specs = []
    for kind in ("feedback", "open_loop"):
        for name, w in shapes.items():
            specs.append(PerturbationSpec("major", w, tuple(deltas), kind, f"{kind}_{name}"))
    return specs


def mode_comparison(p: MarketParams, settings: SimSettings,
                    deltas=(-0.4, -0.2, -0.1, 0.0, 0.1, 0.2, 0.4)) -> dict:
    """Compare the major-bank strategy variants.

    Tabulates the largest pairwise difference between the ``phi0`` paths and
    the major bank's best-response gaps under each variant, using both
    feedback deviations (``delta * omega_t * gap_t``, which can reveal a
    mis-specified gain) and open-loop ones.  The variant whose worst gap is
    least negative is reported as ``best_variant``.
    """
    validate_params(p)
    sols = {name: solve_riccati(p, m, settings.riccati_steps, form=form)
            for name, (m, form) in MODE_VARIANTS.items()}
    names = list(sols)
    divergence = {
        f"{x}-{y}": float(np.max(np.abs(sols[x].phi0 - sols[y].phi0)))
        for x, y in itertools.combinations(names, 2)
    }
    specs = _major_specs(settings.grid(p), deltas)
    per_mode = {}
    for name in names:
        m, _ = MODE_VARIANTS[name]
        res = best_response_study(p, sols[name], m, specs, settings)
        eps, eps_se = measure_epsilon(res)
        worst = min(r.worst()[0] for r in res)
        per_mode[name] = {
            "control_mode": m.value,
            "phi0_form": sols[name].phi0_form,
            "phi0_at_0": float(sols[name].phi0[0]),
            "epsilon": eps,
            "epsilon_se": eps_se,
            "worst_gap": worst,
            "gaps": [r.to_dict() for r in res],
        }
    best = max(names, key=lambda n: per_mode[n]["worst_gap"])
    return {
        "params": p.to_dict(),
        "settings": settings.to_dict(),
        "phi0_divergence": divergence,
        "modes": per_mode,
        "best_variant": best,
    }
