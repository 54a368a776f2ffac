"""Risk-sensitive preference games.

Risk-adjusted preference operators, sampled oracles with quantified bias,
extragradient solvers with two-timescale bias tracking, and the offline
sample-complexity experiment.
"""

__version__ = "0.1.0"

from .exceptions import (
    ConfigError,
    ConvergenceError,
    CoverageError,
    DomainError,
    InvalidArgumentError,
    MonotonicityError,
    RSPGError,
)
from .game import (
    Policy,
    Preconditioner,
    PreferenceGame,
    ProjectionBall,
    gauge_fix,
    kl_divergence,
    load_game,
    make_bradley_terry,
    make_game,
    make_preconditioner,
    project_onto_ball,
    save_game,
    softmax_policy,
)
from .risk import (
    DistortionDiagnostics,
    RiskMeasure,
    RiskOperator,
    distortion_eigenvalue,
    joint_pseudogradient,
    risk_adjusted_operator,
    risk_eval_exact,
    risk_jacobian,
    single_player_operator,
)
from .estimate import (
    OracleSample,
    PluginOracle,
    cvar_ru_estimator,
    delta_method_bias,
    oracle_constants,
    plugin_oracle,
)
from .solve import (
    RunRecord,
    Schedule,
    SolverConfig,
    gap_vi_estimate,
    run_joint,
    run_solver,
    run_tt,
    solve_deterministic,
    step_eg,
    step_md,
)
from .diagnose import fit_floor_scaling, regime_table, verify_stability
from .offline import draw_dataset, empirical_equilibrium, empirical_operator, rate_sweep
from .estimators import OfflineRQRE, RiskAdjustedOperator, RiskAdjustedQRE, StochasticRQRESolver
