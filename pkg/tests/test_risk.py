from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interbank_mfg.model import MarketParams, validate_params
from interbank_mfg.riccati import StrategyMode, solve_riccati
from interbank_mfg.risk import (
    UnsupportedEnsembleError,
    estimate_risk_report,
    loss_distribution,
    path_default_indicator,
    total_probability_residual,
)
from interbank_mfg.simulate import PathEnsemble, RngPolicy, SimGrid, simulate_finite, simulate_limiting


def hand_ensemble(major_min, minor_min, market_min=None, D=-0.65):
    minor_min = np.asarray(minor_min, dtype=float)
    major_min = np.asarray(major_min, dtype=float)
    market_min = np.zeros(len(major_min)) if market_min is None else np.asarray(market_min, dtype=float)
    return PathEnsemble(
        kind="finite", params=MarketParams(D=D), mode=StrategyMode.DERIVATION, grid=SimGrid(1),
        major_min=major_min, minor_min=minor_min, market_min=market_min,
        average_min=minor_min.mean(axis=1), minor_default_counts=(minor_min <= D).sum(axis=1),
    )


@pytest.fixture(scope="module")
def ensemble():
    p = validate_params(MarketParams())
    return simulate_finite(p, solve_riccati(p), 10, SimGrid(100), 4000, RngPolicy(17))


def test_path_default_indicator_examples():
    assert path_default_indicator(-0.7, -0.65)
    assert path_default_indicator(-0.65, -0.65)
    assert not path_default_indicator(0.1, -0.65)


def test_no_defaults_gives_zeros_and_undefined_conditionals():
    r = estimate_risk_report(hand_ensemble([0.0] * 4, [[0.0]] * 4))
    assert (r.p0, r.pi, r.pSE) == (0.0, 0.0, 0.0)
    assert r.pi_given_MD is None and r.pSE_given_MD is None and r.se_pi_given_MD is None
    assert r.pi_given_MS == 0.0
    assert total_probability_residual(r) is None
    assert r.ci95("pi_given_MD") is None


def test_hand_count_example():
    r = estimate_risk_report(hand_ensemble([0.0] * 4, [[-0.7], [-0.2], [-0.8], [0.1]]))
    assert r.pi == 0.5 and r.pi_given_MS == 0.5 and r.pi_given_MD is None


def test_boundary_counts_as_default():
    r = estimate_risk_report(hand_ensemble([-0.65, 0.0], [[-0.65, 0.0], [0.0, 0.0]], market_min=[-0.65, 0.0]))
    assert r.p0 == 0.5 and r.pSE == 0.5 and r.pi == 0.25
    assert r.pi_given_MD == 0.5 and r.pi_given_MS == 0.0


def test_standard_errors():
    r = estimate_risk_report(hand_ensemble([-1.0, 0.0, 0.0, 0.0], [[-1.0, 0.0], [-1.0, -1.0], [0.0, 0.0], [0.0, 0.0]]))
    assert r.se_p0 == pytest.approx(np.sqrt(0.25 * 0.75 / 4))
    frac = np.array([0.5, 1.0, 0.0, 0.0])
    assert r.se_pi == pytest.approx(frac.std(ddof=1) / 2)


def test_total_probability_identity(ensemble):
    r = estimate_risk_report(ensemble)
    ri, rse = total_probability_residual(r)
    assert abs(ri) <= 1e-12 and abs(rse) <= 1e-12
    bad = replace(r, pi=r.pi + 0.01)
    assert total_probability_residual(bad)[0] == pytest.approx(0.01, abs=1e-12)


def test_total_probability_hand_arithmetic():
    r = estimate_risk_report(hand_ensemble([-1.0, -1.0, 0.0, 0.0],
                                           [[-1.0] * 4 + [0.0]] * 2 + [[-1.0] + [0.0] * 4] * 2))
    assert r.p0 == 0.5 and r.pi_given_MD == pytest.approx(0.8) and r.pi_given_MS == pytest.approx(0.2)
    assert r.pi == pytest.approx(0.5)


def test_probabilities_in_unit_interval(ensemble):
    d = estimate_risk_report(ensemble).row()
    for k in ("p0", "pi", "pSE", "pi_given_MD", "pi_given_MS", "pSE_given_MD", "pSE_given_MS"):
        assert 0.0 <= d[k] <= 1.0


@given(st.floats(-2.0, 0.5), st.floats(0.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_monotone_in_threshold(ensemble, D, step):
    lo, hi = estimate_risk_report(ensemble, D), estimate_risk_report(ensemble, D + step)
    assert hi.p0 >= lo.p0 and hi.pi >= lo.pi and hi.pSE >= lo.pSE


def test_loss_histogram_examples():
    h = loss_distribution(hand_ensemble([0.0] * 3, [[0.0] * 10] * 3))
    assert h.total[0] == 1.0 and h.total.sum() == 1.0
    mm = np.zeros((2, 10))
    mm[0, :2] = -1.0
    mm[1, :5] = -1.0
    h = loss_distribution(hand_ensemble([0.0, 0.0], mm))
    assert h.total[2] == 0.5 and h.total[5] == 0.5 and h.given_MD is None


def test_loss_histogram_recombination(ensemble):
    h = loss_distribution(ensemble)
    assert h.recombination_residual() <= 1e-12
    for v in (h.total, h.given_MD, h.given_MS):
        assert v.sum() == pytest.approx(1.0, abs=1e-12)
    assert len(h.rows()) == 3 * 11


def test_loss_distribution_rejects_limiting():
    p = validate_params(MarketParams())
    e = simulate_limiting(p, solve_riccati(p), 5, SimGrid(10), 4, RngPolicy(0))
    with pytest.raises(UnsupportedEnsembleError):
        loss_distribution(e)
    assert estimate_risk_report(e).n_paths == 4


def test_no_major_market_state_is_the_average():
    p = validate_params(MarketParams.from_clearing(5.0, 0.0))
    e = simulate_finite(p, solve_riccati(p), 10, SimGrid(50), 2000, RngPolicy(2))
    assert np.array_equal(e.market_min, e.average_min)
    r = estimate_risk_report(e)
    assert r.pSE == float((e.average_min <= p.D).mean())
