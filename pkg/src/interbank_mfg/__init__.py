"""Major-minor mean-field model of an interbank lending market.

Equilibrium feedback strategies come from backward Riccati equations; default
and systemic-risk probabilities are estimated by Monte Carlo.
"""

from .model import MarketParams, ParameterError, ConfigError, derive_clearing, validate_params, market_state, load_config
from .riccati import (
    StrategyMode,
    RiccatiSolution,
    solve_minor_phi,
    solve_major_phi0,
    solve_riccati,
    build_extended_system,
    solve_major_lqr_oracle,
    minor_control,
    major_control,
    meanfield_drift,
)
from .simulate import SimGrid, RngPolicy, PathEnsemble, simulate_finite, simulate_limiting, euler_step
from .risk import RiskReport, LossHistogram, estimate_risk_report, total_probability_residual, loss_distribution
from .experiments import SimSettings, ScenarioSweep, sweep_size_G, sweep_friction_a, convergence_study
from .validate import PerturbationSpec, BestResponseResult, evaluate_cost, best_response_gap, mode_comparison

__version__ = "0.1.0"
