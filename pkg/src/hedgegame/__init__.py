"""Exponential-weights (HEDGE) learning in finite N-player games."""

from .analysis import (
    BasinSpec,
    NoiseLedger,
    RateFit,
    basin_margin,
    fenchel_coupling,
    fit_rate,
    in_basin,
    kl_divergence,
    l1_distance,
    logit_gradient_check,
    noise_sums,
    step_size_admissible,
    verify_kl_step,
    z_gaps,
)
from .dynamics import (
    FeedbackModel,
    StepSchedule,
    Trajectory,
    hedge_step,
    initial_scores,
    logit,
    observe,
    run_batch,
    run_trajectory,
    sample_action,
    schedule_gamma,
)
from .estimators import ConvergenceRateEstimator, HedgeLearner
from .exceptions import NotStrictEquilibriumError
from .game import (
    EquilibriumReport,
    Game,
    check_global_strictness,
    expected_payoff,
    find_strict_equilibria,
    load_game,
    make_game,
    payoff_vector,
    pure_payoff_vector,
    save_game,
)

__version__ = "0.1.0"
