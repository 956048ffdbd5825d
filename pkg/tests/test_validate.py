import numpy as np
import pytest

from interbank_mfg.experiments import SimSettings
from interbank_mfg.model import MarketParams, validate_params
from interbank_mfg.riccati import solve_riccati
from interbank_mfg.risk import UnsupportedEnsembleError
from interbank_mfg.simulate import RngPolicy, SimGrid, simulate_finite
from interbank_mfg.validate import (
    PerturbationSpec,
    best_response_gap,
    best_response_study,
    evaluate_cost,
    measure_epsilon,
    minor_gap_study,
    mode_comparison,
    path_cost,
    random_directions,
)

S = SimSettings(seed=5, n_paths=800, n_steps=40, riccati_steps=200, chunk_size=300)


@pytest.fixture(scope="module")
def base():
    p = validate_params(MarketParams())
    return p, solve_riccati(p, "derivation", 200)


def test_path_cost_zero_and_toy():
    t = np.linspace(0, 2.0, 11)
    assert path_cost(t, np.zeros(11), np.zeros(11), 1.0, 10.0, 1.0) == 0.0
    u, g, q, eps, c, T = 0.3, -0.2, 1.0, 10.0, 0.5, 2.0
    expected = T * (u * u / 2 - q * u * g + eps * g * g / 2) + c * g * g / 2
    assert path_cost(t, np.full(11, u), np.full(11, g), q, eps, c) == pytest.approx(expected, rel=1e-14)


def test_doubling_controls_quadruples_the_quadratic_term():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 51)
    u, g = rng.standard_normal(51), np.zeros(51)
    assert path_cost(t, 2 * u, g, 0, 0, 0) == pytest.approx(4 * path_cost(t, u, g, 0, 0, 0), rel=1e-14)


def test_cost_integrals_match_path_cost(base):
    p, rs = base
    e = simulate_finite(p, rs, 4, SimGrid(40), 3, RngPolicy(1), retain_trajectories=3, retain_costs=True)
    tr = e.trajectories
    phi_k, phi0_k = rs.at(tr.times)
    xbar = tr.minors.mean(axis=2)
    for j in range(3):
        g0 = xbar[j] - tr.major[j]
        u0 = (p.q0 - phi0_k) * g0
        assert evaluate_cost(e, "major")[2][j] == pytest.approx(path_cost(tr.times, u0, g0, p.q0, p.eps0, p.c0),
                                                                rel=1e-12)
        gi = p.F * xbar[j] + p.G * tr.major[j] - tr.minors[j, :, 2]
        ui = (p.q - phi_k) * gi
        assert evaluate_cost(e, 2)[2][j] == pytest.approx(path_cost(tr.times, ui, gi, p.q, p.eps, p.c), rel=1e-12)


def test_evaluate_cost_needs_costs(base):
    p, rs = base
    e = simulate_finite(p, rs, 2, SimGrid(10), 5, RngPolicy(0))
    with pytest.raises(UnsupportedEnsembleError):
        evaluate_cost(e)


def test_zero_state_zero_cost():
    p = validate_params(MarketParams(sigma=0.0, sigma0=0.0))
    e = simulate_finite(p, solve_riccati(p, steps=100), 3, SimGrid(10), 4, RngPolicy(0), retain_costs=True)
    assert evaluate_cost(e, "major")[0] == 0.0 and evaluate_cost(e, "minors")[0] == 0.0


def test_spec_validation():
    w = np.ones(41)
    with pytest.raises(ValueError, match="include 0"):
        PerturbationSpec(0, w, (0.1, 0.2))
    with pytest.raises(ValueError):
        PerturbationSpec("someone", w)
    with pytest.raises(ValueError):
        PerturbationSpec(0, w, kind="other")
    with pytest.raises(ValueError):
        PerturbationSpec(0, np.full(41, np.nan))
    assert PerturbationSpec(0, w).l2_norm(1 / 40) == pytest.approx(np.sqrt(41 / 40))


def test_random_directions_are_seeded_and_normalised():
    g = SimGrid(40)
    d1, d2 = random_directions(g, 6, 9), random_directions(g, 6, 9)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(d1, d2))
    assert [x[2]["type"] for x in d1] == ["affine", "bump", "steps"] * 2
    for _, w, _ in d1:
        assert np.mean(w ** 2) == pytest.approx(1.0)


def test_minor_gap_is_zero_at_zero_and_positive(base):
    p, rs = base
    spec = PerturbationSpec(0, np.ones(41), (-0.2, 0.0, 0.2), label="const")
    r = best_response_gap(p, rs, "derivation", spec, S)
    assert r.gap[1] == 0.0 and r.gap_se[1] == 0.0
    assert r.passes() and r.even()
    assert r.curvature > 0
    assert r.to_dict()["nonnegative_2se"]


def test_zero_control_deviation_is_not_better(base):
    p, rs = base
    phi_k, _ = rs.at(S.grid(p).times)
    spec = PerturbationSpec(0, -(p.q - phi_k), (0.0, 1.0), "feedback", "switch_off")
    r = best_response_gap(p, rs, "derivation", spec, S)
    assert r.gap[1] >= -2 * r.gap_se[1]


def test_study_shares_noise_with_single_runs(base):
    p, rs = base
    specs = [PerturbationSpec(1, np.ones(41), (0.0, 0.1)), PerturbationSpec("major", np.ones(41), (0.0, 0.1))]
    together = best_response_study(p, rs, "derivation", specs, S)
    alone = best_response_gap(p, rs, "derivation", specs[1], S)
    assert np.array_equal(together[1].gap, alone.gap)


def test_antithetic_pairs_cancel_the_first_order_term(base):
    p, rs = base
    s = SimSettings(**{**S.__dict__, "antithetic": True})
    r = best_response_gap(p, rs, "derivation", PerturbationSpec(0, np.ones(41), (-0.1, 0.0, 0.1)), s)
    assert abs(r.gap[0] - r.gap[2]) < 1e-10
    with pytest.raises(ValueError, match="even"):
        best_response_gap(p, rs, "derivation", PerturbationSpec(0, np.ones(41)),
                          SimSettings(**{**s.__dict__, "n_paths": 801}))


def test_bad_direction_length(base):
    p, rs = base
    with pytest.raises(ValueError, match="points"):
        best_response_gap(p, rs, "derivation", PerturbationSpec(0, np.ones(7)), S)


def test_minor_gap_study_and_epsilon():
    study = minor_gap_study(MarketParams(), S, N_values=(5,), n_directions=3, deltas=(-0.1, 0.0, 0.1))
    assert len(study.results[5]) == 3
    eps, se = study.epsilon(5)
    assert eps >= 0.0 and se >= 0.0
    d = study.to_dict()
    assert d["directions"][0]["label"] == "affine_0" and "5" in d["epsilon"]
    assert measure_epsilon(study.results[5]) == (eps, se)


def test_mode_comparison_degenerate_case():
    p = validate_params(MarketParams.from_clearing(5.0, 0.0, eps0=1.0, q0=1.0, c0=0.0))
    s = SimSettings(**{**S.__dict__, "n_paths": 40})
    rep = mode_comparison(p, s, deltas=(0.0, 0.1))
    assert all(v == 0.0 for v in rep["phi0_divergence"].values())
    assert set(rep["modes"]) == {"theorem", "sign_flipped", "derivation", "oracle"}


def test_mode_comparison_report_shape(fig5_params):
    s = SimSettings(**{**S.__dict__, "n_paths": 200})
    rep = mode_comparison(fig5_params, s, deltas=(-0.2, 0.0, 0.2))
    assert rep["phi0_divergence"]["derivation-oracle"] < 1e-12
    assert rep["phi0_divergence"]["theorem-derivation"] > 0.1
    assert rep["best_variant"] in rep["modes"]
    assert rep == mode_comparison(fig5_params, s, deltas=(-0.2, 0.0, 0.2))
