import numpy as np
import pytest

from interbank_mfg.model import MarketParams, market_state, validate_params
from interbank_mfg.riccati import StrategyMode, solve_riccati
from interbank_mfg.simulate import (
    RngPolicy,
    SimGrid,
    SimulationError,
    euler_step,
    run_finite_chunk,
    simulate_finite,
    simulate_limiting,
)


@pytest.fixture(scope="module")
def base():
    p = validate_params(MarketParams())
    return p, solve_riccati(p)


def _same(e1, e2):
    for k in ("major_min", "minor_min", "market_min", "average_min"):
        if not np.array_equal(getattr(e1, k), getattr(e2, k)):
            return False
    return e1.noise_checksum == e2.noise_checksum


def test_euler_step_examples():
    assert euler_step(0.3, 0.0, 0.0, 0.01, 0.0, 1.7) == 0.3
    assert euler_step(0.0, 2.5 * 0.4, 0.1, 0.01, 0.0, 0.0) == pytest.approx(0.011)
    w = 0.123
    assert euler_step(0.2, -0.5, 0.25, 0.02, 0.7, w) == 0.2 + (-0.5 + 0.25) * 0.02 + 0.7 * w


def test_grid():
    g = SimGrid(3, 1.0)
    assert g.times[-1] == 1.0 and len(g.times) == 4
    assert abs(g.n_steps * g.dt - g.T) <= np.spacing(g.T)
    with pytest.raises(ValueError):
        SimGrid(0, 1.0)


@pytest.mark.parametrize("mode, level", [("derivation", 0.3), ("oracle", -0.4), ("theorem", 0.0)])
def test_zero_noise_consensus(mode, level):
    # the printed major law (q - phi0)(F xbar - x0) only vanishes at consensus level 0
    p = validate_params(MarketParams(sigma=0.0, sigma0=0.0, x0_init=level, xi_init=level))
    rs = solve_riccati(p, mode, 200)
    e = simulate_finite(p, rs, 5, SimGrid(50), 6, RngPolicy(1), retain_trajectories=2)
    assert np.all(e.trajectories.minors == level) and np.all(e.trajectories.major == level)
    el = simulate_limiting(p, rs, 5, SimGrid(50), 6, RngPolicy(1), retain_trajectories=2)
    assert np.all(el.trajectories.average == level) and np.all(el.trajectories.minors == level)


def test_printed_major_law_drifts_away_from_nonzero_consensus():
    p = validate_params(MarketParams(sigma=0.0, sigma0=0.0, x0_init=0.3, xi_init=0.3))
    e = simulate_finite(p, solve_riccati(p, "theorem"), 5, SimGrid(50), 2, RngPolicy(1), retain_trajectories=1)
    assert e.trajectories.major[0, -1] < 0.3


def test_limiting_zero_major_noise_keeps_mean_field_fixed(base):
    p, _ = base
    p = validate_params(MarketParams(sigma0=0.0))
    rs = solve_riccati(p)
    e = simulate_limiting(p, rs, 50, SimGrid(50), 4, RngPolicy(2), retain_trajectories=4)
    assert np.all(e.trajectories.major == 0.0) and np.all(e.trajectories.average == 0.0)
    assert e.trajectories.minors.std() > 0.05


def test_determinism_across_workers_and_chunks(base):
    p, rs = base
    g = SimGrid(40)
    runs = [
        simulate_finite(p, rs, 7, g, 1000, RngPolicy(11), chunk_size=1000, workers=1),
        simulate_finite(p, rs, 7, g, 1000, RngPolicy(11), chunk_size=137, workers=3),
        simulate_finite(p, rs, 7, g, 1000, RngPolicy(11), chunk_size=250, workers=2),
    ]
    assert _same(runs[0], runs[1]) and _same(runs[0], runs[2])
    assert not _same(runs[0], simulate_finite(p, rs, 7, g, 1000, RngPolicy(12)))


def test_streams_are_per_path():
    rng = RngPolicy(5)
    a = rng.minor_normals([3, 4, 5], 10, 2)
    b = rng.minor_normals([5, 3], 10, 2)
    assert np.array_equal(a[2], b[0]) and np.array_equal(a[0], b[1])
    assert not np.array_equal(rng.major_normals([3], 10), rng.minor_normals([3], 10, 1)[:, :, 0])
    assert np.array_equal(rng.for_scenario(3).major_normals([1], 4), rng.major_normals([1], 4))
    off = RngPolicy(5, scenario_crn=False)
    assert not np.array_equal(off.for_scenario(1).major_normals([1], 4), off.for_scenario(2).major_normals([1], 4))
    anti = RngPolicy(5, antithetic=True).major_normals([6, 7], 4)
    assert np.array_equal(anti[1], -anti[0])


def test_minima_and_retained_paths(base):
    p, rs = base
    e = simulate_finite(p, rs, 4, SimGrid(60), 300, RngPolicy(3), retain_trajectories=9, chunk_size=5)
    assert np.all(e.major_min <= p.x0_init) and np.all(e.minor_min <= p.xi_init)
    tr = e.trajectories
    assert tr.major.shape == (9, 61) and tr.minors.shape == (9, 61, 4)
    avg = tr.minors.mean(axis=2)
    m = market_state(avg, tr.major, p.F, p.G)
    assert np.allclose(m, tr.market, atol=1e-14)
    assert np.allclose(m.min(axis=1), e.market_min[:9], atol=1e-14)
    assert np.array_equal(tr.minors.min(axis=1), e.minor_min[:9])
    assert np.array_equal(e.minor_default_counts, (e.minor_min <= p.D).sum(axis=1))


def test_limiting_law_of_large_numbers(base):
    p, rs = base
    g = SimGrid(50)
    M = 10_000
    phi_k, phi0_k = rs.at(g.times)
    rng = RngPolicy(9)
    ids = np.arange(3)
    out = __import__("interbank_mfg.simulate", fromlist=["x"]).run_limiting_chunk(
        p, phi_k, phi0_k, StrategyMode.DERIVATION, g, rng.major_normals(ids, 50), rng.minor_normals(ids, 50, M),
        record_paths=True)
    xbar = out["average_path"][:, -1]
    xi = out["minor_final"]
    assert np.all(np.abs(xi.mean(axis=1) - xbar) <= 3 * xi.std(axis=1) / np.sqrt(M))


def test_driftless_banks_have_unbiased_means():
    p = MarketParams(a=0.0, a0=0.0, q=1.0, q0=1.0, xi_init=0.25, x0_init=-0.1)
    g = SimGrid(20)
    P = 4000
    rng = RngPolicy(21)
    ids = np.arange(P)
    gains_off = np.full(21, p.q)  # q - phi = 0 switches every control off
    out = run_finite_chunk(p, gains_off, np.full(21, p.q0), StrategyMode.DERIVATION, g,
                           rng.major_normals(ids, 20), rng.minor_normals(ids, 20, 3), record_paths=True)
    x0T = out["major_final"]
    assert abs(x0T.mean() - p.x0_init) <= 4 * x0T.std() / np.sqrt(P)
    avgT = out["average_path"][:, -1]
    assert abs(avgT.mean() - p.xi_init) <= 4 * avgT.std() / np.sqrt(P)


def test_weak_euler_convergence():
    p = validate_params(MarketParams(x0_init=0.8, xi_init=-0.2))
    rs = solve_riccati(p)
    means = []
    for S in (50, 100):
        e = simulate_finite(p, rs, 5, SimGrid(S), 4000, RngPolicy(4), retain_trajectories=4000)
        x = e.trajectories.major[:, -1]
        means.append((x.mean(), x.std() / np.sqrt(len(x))))
    (m1, s1), (m2, s2) = means
    assert abs(m1 - m2) <= 4 * np.hypot(s1, s2) + 0.05


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_aborts_with_location():
    p = MarketParams()
    g = SimGrid(10)
    rng = RngPolicy(0)
    ids = np.arange(4)
    huge = np.full(11, -1e307)
    with pytest.raises(SimulationError) as info:
        run_finite_chunk(p, huge, huge, StrategyMode.DERIVATION, g, rng.major_normals(ids, 10),
                         rng.minor_normals(ids, 10, 3), offset=100)
    assert info.value.path_index >= 100 and 0 < info.value.time <= 1.0


def test_horizon_mismatch(base):
    p, rs = base
    with pytest.raises(ValueError):
        simulate_finite(p, rs, 3, SimGrid(10, T=2.0), 5, RngPolicy(0))


def test_no_major_leaves_minors_untouched():
    """With G = 0 the minors' paths cannot depend on anything the major does."""
    p = validate_params(MarketParams.from_clearing(5.0, 0.0))
    e1 = simulate_finite(p, solve_riccati(p), 6, SimGrid(30), 200, RngPolicy(8))
    p2 = validate_params(MarketParams.from_clearing(5.0, 0.0, sigma0=3.0, q0=0.0, eps0=0.0, x0_init=1.0))
    e2 = simulate_finite(p2, solve_riccati(p2), 6, SimGrid(30), 200, RngPolicy(8))
    assert np.array_equal(e1.minor_min, e2.minor_min)
    assert np.array_equal(e1.average_min, e2.average_min)
    assert not np.array_equal(e1.major_min, e2.major_min)
