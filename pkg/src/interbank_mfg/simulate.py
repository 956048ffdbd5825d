"""Euler-Maruyama simulation of the finite and limiting interbank markets.

Randomness is organised per path: path ``i`` draws its major-bank
increments from substream ``(i, 0)`` and its minor-bank increments from
``(i, 1)`` of a :class:`numpy.random.SeedSequence` rooted at the master seed.
Paths are processed in fixed-size chunks, so results do not depend on the
number of workers or on execution order.  Sharing the major substream makes
the finite and limiting systems directly comparable path by path.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .model import MarketParams, market_state
from .riccati import RiccatiSolution, StrategyMode, major_control, meanfield_drift

__all__ = [
    "SimGrid",
    "RngPolicy",
    "PathEnsemble",
    "Trajectories",
    "CostIntegrals",
    "Perturbation",
    "SimulationError",
    "euler_step",
    "simulate_finite",
    "simulate_limiting",
    "run_finite_chunk",
    "run_limiting_chunk",
]

DEFAULT_STEPS = 100
DEFAULT_CHUNK = 5000
DEFAULT_RETAIN = 16
MAX_CHUNK_FLOATS = 2e7

MAJOR, MINOR = 0, 1


class SimulationError(ArithmeticError):
    def __init__(self, path_index, time):
        self.path_index = int(path_index)
        self.time = float(time)
        super().__init__(f"non-finite state on path {self.path_index} at t={self.time:.6g}")


@dataclass(frozen=True)
class SimGrid:
    n_steps: int = DEFAULT_STEPS
    T: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.T
        return t

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = self.dt / 2
        return w


@dataclass(frozen=True)
class RngPolicy:
    """Deterministic per-path Gaussian streams.

    With ``scenario_crn`` (the default) every scenario reuses the same
    streams; otherwise ``scenario`` is mixed into the spawn key.  With
    ``antithetic`` the odd path ``2k + 1`` replays path ``2k`` with negated
    increments.
    """

    master_seed: int
    scenario_crn: bool = True
    scenario: int = 0
    antithetic: bool = False

    def for_scenario(self, index: int) -> "RngPolicy":
        return replace(self, scenario=int(index))

    def _stream(self, path: int, role: int) -> np.random.Generator:
        key = (path, role) if self.scenario_crn else (path, role, self.scenario)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.master_seed, spawn_key=key)))

    def _draw(self, paths, role, shape):
        paths = np.asarray(paths, dtype=np.int64)
        out = np.empty((len(paths),) + shape)
        cache = {}
        for j, i in enumerate(paths):
            base = int(i) - 1 if self.antithetic and i % 2 else int(i)
            if base not in cache:
                cache[base] = self._stream(base, role).standard_normal(shape)
            out[j] = -cache[base] if base != i else cache[base]
        return out

    def major_normals(self, paths, n_steps: int) -> np.ndarray:
        """Standard normals of shape ``(len(paths), n_steps)``."""
        return self._draw(paths, MAJOR, (n_steps,))

    def minor_normals(self, paths, n_steps: int, width: int) -> np.ndarray:
        """Standard normals of shape ``(len(paths), n_steps, width)``."""
        return self._draw(paths, MINOR, (n_steps, width))


@dataclass
class Trajectories:
    """Full paths for a retained subset of the ensemble."""

    path_index: np.ndarray   # (K,)
    times: np.ndarray        # (S+1,)
    major: np.ndarray        # (K, S+1)
    minors: np.ndarray       # (K, S+1, n)
    average: np.ndarray      # (K, S+1)  x^(N) or xbar
    market: np.ndarray       # (K, S+1)


@dataclass
class CostIntegrals:
    """Per-path pieces of the cost functionals.

    For each bank: ``half_u2 = int u^2/2``, ``cross = int u g``,
    ``half_g2 = int g^2/2`` (trapezoid in time) and ``terminal = g_T^2/2``,
    where ``g`` is the bank's tracking gap.  Major arrays are ``(P,)``,
    minor arrays ``(P, n)``.
    """

    major: dict
    minors: dict

    @staticmethod
    def combine(parts: dict, q: float, eps: float, c: float):
        return parts["half_u2"] - q * parts["cross"] + eps * parts["half_g2"] + c * parts["terminal"]


@dataclass(frozen=True)
class Perturbation:
    """Unilateral deviation ``u -> u* + delta * omega`` for one bank.

    ``target`` is ``"major"`` or a minor index.  ``omega`` holds values on
    the simulation grid (``n_steps + 1`` points).  With ``kind="feedback"``
    the deviation is ``delta * omega_t * g_t`` where ``g_t`` is the bank's
    own tracking gap.
    """

    target: object
    omega: np.ndarray
    delta: float
    kind: str = "open_loop"


@dataclass
class PathEnsemble:
    kind: str                      # "finite" or "limiting"
    params: MarketParams
    mode: StrategyMode
    grid: SimGrid
    major_min: np.ndarray
    minor_min: np.ndarray
    market_min: np.ndarray
    average_min: np.ndarray
    minor_default_counts: np.ndarray | None
    trajectories: Trajectories | None = None
    costs: CostIntegrals | None = None
    noise_checksum: str = ""
    seed: int | None = None

    @property
    def n_paths(self) -> int:
        return len(self.major_min)

    @property
    def n_minors(self) -> int:
        return self.minor_min.shape[1]


def euler_step(x, drift, control, dt, sigma, noise):
    """One Euler-Maruyama step; ``noise`` must have variance ``dt``."""
    return x + (drift + control) * dt + sigma * noise


# -- chunk kernels --------------------------------------------------------------

def _perturb_term(pert, k, gap):
    w = pert.omega[k] * pert.delta
    return w * gap if pert.kind == "feedback" else w


def _new_costs(P, n):
    return ({k: np.zeros(P) for k in ("half_u2", "cross", "half_g2", "terminal")},
            {k: np.zeros((P, n)) for k in ("half_u2", "cross", "half_g2", "terminal")})


def _accumulate(parts, w, u, g):
    parts["half_u2"] += w * 0.5 * u * u
    parts["cross"] += w * u * g
    parts["half_g2"] += w * 0.5 * g * g


def _check_finite(x0, xi, offset, t):
    if np.isfinite(x0).all() and np.isfinite(xi).all():
        return
    bad = ~np.isfinite(x0) | ~np.isfinite(xi).all(axis=1)
    raise SimulationError(offset + int(np.argmax(bad)), t)


def run_finite_chunk(p, phi_k, phi0_k, mode, grid, z0, zi, *, perturbation=None,
                     costs=False, keep=0, record_paths=False, offset=0):
    """Simulate one chunk of the finite market.

    ``z0`` is ``(P, S)`` and ``zi`` is ``(P, S, N)`` standard normals.
    Returns a dict of per-path summaries; see :func:`simulate_finite`.
    """
    P, S, N = zi.shape
    dt, sq = grid.dt, np.sqrt(grid.dt)
    times = grid.times
    w = grid.trapezoid_weights()
    x0 = np.full(P, float(p.x0_init))
    xi = np.full((P, N), float(p.xi_init))
    target = None if perturbation is None else perturbation.target

    x0_min, xi_min = x0.copy(), xi.copy()
    xbar = xi.mean(axis=1)
    m = market_state(xbar, x0, p.F, p.G)
    avg_min, m_min = xbar.copy(), m.copy()
    if keep or record_paths:
        avg_path = np.empty((P, S + 1))
        m_path = np.empty((P, S + 1))
        avg_path[:, 0], m_path[:, 0] = xbar, m
    if keep:
        tr_major = np.empty((keep, S + 1))
        tr_minor = np.empty((keep, S + 1, N))
        tr_major[:, 0], tr_minor[:, 0] = x0[:keep], xi[:keep]
    if costs:
        c_major, c_minor = _new_costs(P, N)

    for k in range(S + 1):
        g0 = xbar - x0
        gi = m[:, None] - xi
        u0 = major_control(phi0_k[k], xbar, x0, p, mode)
        ui = (p.q - phi_k[k]) * gi
        if target is not None:
            if target == "major":
                u0 = u0 + _perturb_term(perturbation, k, g0)
            else:
                ui = ui.copy()
                ui[:, target] += _perturb_term(perturbation, k, gi[:, target])
        if costs:
            _accumulate(c_major, w[k], u0, g0)
            _accumulate(c_minor, w[k], ui, gi)
        if k == S:
            break
        x0 = euler_step(x0, p.a0 * g0, u0, dt, p.sigma0, sq * z0[:, k])
        xi = euler_step(xi, p.a * gi, ui, dt, p.sigma, sq * zi[:, k])
        _check_finite(x0, xi, offset, times[k + 1])
        xbar = xi.mean(axis=1)
        m = market_state(xbar, x0, p.F, p.G)
        np.minimum(x0_min, x0, out=x0_min)
        np.minimum(xi_min, xi, out=xi_min)
        np.minimum(avg_min, xbar, out=avg_min)
        np.minimum(m_min, m, out=m_min)
        if keep or record_paths:
            avg_path[:, k + 1], m_path[:, k + 1] = xbar, m
        if keep:
            tr_major[:, k + 1], tr_minor[:, k + 1] = x0[:keep], xi[:keep]

    out = dict(major_min=x0_min, minor_min=xi_min, average_min=avg_min, market_min=m_min)
    if costs:
        c_major["terminal"] = 0.5 * g0 * g0
        c_minor["terminal"] = 0.5 * gi * gi
        out["costs"] = (c_major, c_minor)
    if record_paths:
        out["average_path"], out["market_path"] = avg_path, m_path
        out["major_final"] = x0
    if keep:
        out["traj"] = (tr_major, tr_minor, avg_path[:keep].copy(), m_path[:keep].copy())
    return out


def run_limiting_chunk(p, phi_k, phi0_k, mode, grid, z0, zi, *, perturbation=None,
                       costs=False, keep=0, record_paths=False, offset=0):
    """Simulate one chunk of the limiting market with ``M = zi.shape[2]`` representative minors.

    The mean field follows the noise-free drift on the same grid; the
    representative minors do not feed back into it.
    """
    P, S, M = zi.shape
    dt, sq = grid.dt, np.sqrt(grid.dt)
    times = grid.times
    w = grid.trapezoid_weights()
    x0 = np.full(P, float(p.x0_init))
    xbar = np.full(P, float(p.xi_init))
    xi = np.full((P, M), float(p.xi_init))
    target = None if perturbation is None else perturbation.target

    x0_min, xi_min, avg_min = x0.copy(), xi.copy(), xbar.copy()
    m = market_state(xbar, x0, p.F, p.G)
    m_min = m.copy()
    if keep or record_paths:
        avg_path = np.empty((P, S + 1))
        m_path = np.empty((P, S + 1))
        avg_path[:, 0], m_path[:, 0] = xbar, m
    if keep:
        tr_major = np.empty((keep, S + 1))
        tr_minor = np.empty((keep, S + 1, M))
        tr_major[:, 0], tr_minor[:, 0] = x0[:keep], xi[:keep]
    if costs:
        c_major, c_minor = _new_costs(P, M)

    for k in range(S + 1):
        g0 = xbar - x0
        gi = m[:, None] - xi
        u0 = major_control(phi0_k[k], xbar, x0, p, mode)
        ui = (p.q - phi_k[k]) * gi
        if target is not None:
            if target == "major":
                u0 = u0 + _perturb_term(perturbation, k, g0)
            else:
                ui = ui.copy()
                ui[:, target] += _perturb_term(perturbation, k, gi[:, target])
        if costs:
            _accumulate(c_major, w[k], u0, g0)
            _accumulate(c_minor, w[k], ui, gi)
        if k == S:
            break
        dbar = meanfield_drift(phi_k[k], xbar, x0, p, mode)
        x0 = euler_step(x0, p.a0 * g0, u0, dt, p.sigma0, sq * z0[:, k])
        xbar = euler_step(xbar, dbar, 0.0, dt, 0.0, 0.0)
        xi = euler_step(xi, p.a * gi, ui, dt, p.sigma, sq * zi[:, k])
        _check_finite(x0, xi, offset, times[k + 1])
        m = market_state(xbar, x0, p.F, p.G)
        np.minimum(x0_min, x0, out=x0_min)
        np.minimum(xi_min, xi, out=xi_min)
        np.minimum(avg_min, xbar, out=avg_min)
        np.minimum(m_min, m, out=m_min)
        if keep or record_paths:
            avg_path[:, k + 1], m_path[:, k + 1] = xbar, m
        if keep:
            tr_major[:, k + 1], tr_minor[:, k + 1] = x0[:keep], xi[:keep]

    out = dict(major_min=x0_min, minor_min=xi_min, average_min=avg_min, market_min=m_min)
    if costs:
        c_major["terminal"] = 0.5 * g0 * g0
        c_minor["terminal"] = 0.5 * gi * gi
        out["costs"] = (c_major, c_minor)
    if record_paths:
        out["average_path"], out["market_path"] = avg_path, m_path
        out["major_final"] = x0
        out["minor_final"] = xi
    if keep:
        out["traj"] = (tr_major, tr_minor, avg_path[:keep].copy(), m_path[:keep].copy())
    return out


# -- drivers --------------------------------------------------------------------

def coefficients_on_grid(rs: RiccatiSolution, grid: SimGrid):
    if abs(rs.T - grid.T) > 1e-12 * max(1.0, grid.T):
        raise ValueError(f"Riccati horizon {rs.T} does not match simulation horizon {grid.T}")
    return rs.at(grid.times)


def chunk_bounds(n_paths: int, chunk_size: int):
    return [(s, min(s + chunk_size, n_paths)) for s in range(0, n_paths, chunk_size)]


def _simulate(kind, p, rs, width, grid, n_paths, rng, mode, chunk_size, workers,
              retain_trajectories, retain_costs, perturbation):
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if width < 1:
        raise ValueError("need at least one minor bank")
    if rs.phi0 is None:
        raise ValueError("Riccati solution has no phi0 path")
    mode = StrategyMode.parse(rs.mode if mode is None else mode)
    if abs(grid.T - p.T) > 1e-12 * max(1.0, p.T):
        raise ValueError(f"simulation grid horizon {grid.T} does not match T = {p.T}")
    # bound the noise block of one chunk to ~160 MB
    chunk_size = max(1, min(chunk_size, int(MAX_CHUNK_FLOATS // (grid.n_steps * width))))
    phi_k, phi0_k = coefficients_on_grid(rs, grid)
    kernel = run_finite_chunk if kind == "finite" else run_limiting_chunk
    keep_total = min(retain_trajectories, n_paths)
    bounds = chunk_bounds(n_paths, chunk_size)

    def work(b):
        lo, hi = b
        ids = np.arange(lo, hi)
        z0 = rng.major_normals(ids, grid.n_steps)
        zi = rng.minor_normals(ids, grid.n_steps, width)
        # per-path digests keep the checksum independent of the chunk layout
        digest = b"".join(hashlib.sha256(a.tobytes() + b.tobytes()).digest() for a, b in zip(z0, zi))
        keep = max(0, min(keep_total - lo, hi - lo))
        res = kernel(p, phi_k, phi0_k, mode, grid, z0, zi, perturbation=perturbation,
                     costs=retain_costs, keep=keep, offset=lo)
        res["digest"] = digest
        return res

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, bounds))
    else:
        results = [work(b) for b in bounds]

    cat = lambda key: np.concatenate([r[key] for r in results])  # noqa: E731
    checksum = hashlib.sha256(b"".join(r["digest"] for r in results)).hexdigest()
    minor_min = cat("minor_min")

    traj = None
    with_traj = [r["traj"] for r in results if "traj" in r]
    if with_traj:
        traj = Trajectories(
            path_index=np.arange(keep_total),
            times=grid.times,
            major=np.concatenate([t[0] for t in with_traj]),
            minors=np.concatenate([t[1] for t in with_traj]),
            average=np.concatenate([t[2] for t in with_traj]),
            market=np.concatenate([t[3] for t in with_traj]),
        )
    costs = None
    if retain_costs:
        costs = CostIntegrals(
            major={k: np.concatenate([r["costs"][0][k] for r in results]) for k in results[0]["costs"][0]},
            minors={k: np.concatenate([r["costs"][1][k] for r in results]) for k in results[0]["costs"][1]},
        )
    counts = (minor_min <= p.D).sum(axis=1) if kind == "finite" else None
    return PathEnsemble(
        kind=kind, params=p, mode=mode, grid=grid,
        major_min=cat("major_min"), minor_min=minor_min,
        market_min=cat("market_min"), average_min=cat("average_min"),
        minor_default_counts=counts, trajectories=traj, costs=costs,
        noise_checksum=checksum, seed=rng.master_seed,
    )


def simulate_finite(p: MarketParams, rs: RiccatiSolution, N: int, grid: SimGrid, n_paths: int,
                    rng: RngPolicy, mode=None, *, chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
                    retain_trajectories: int = DEFAULT_RETAIN, retain_costs: bool = False,
                    perturbation: Perturbation | None = None) -> PathEnsemble:
    """One major and ``N`` minor banks on the limiting feedback strategies.

    The empirical average ``x^(N)`` stands in for the mean field in every
    control law.  Banks stay in the market after crossing ``D``.
    """
    return _simulate("finite", p, rs, N, grid, n_paths, rng, mode, chunk_size, workers,
                     retain_trajectories, retain_costs, perturbation)


def simulate_limiting(p: MarketParams, rs: RiccatiSolution, M: int, grid: SimGrid, n_paths: int,
                      rng: RngPolicy, mode=None, *, chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
                      retain_trajectories: int = DEFAULT_RETAIN, retain_costs: bool = False,
                      perturbation: Perturbation | None = None) -> PathEnsemble:
    """Major bank, deterministic-given-``x0`` mean field, and ``M`` representative minors."""
    return _simulate("limiting", p, rs, M, grid, n_paths, rng, mode, chunk_size, workers,
                     retain_trajectories, retain_costs, perturbation)
