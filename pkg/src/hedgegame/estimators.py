"""scikit-learn style wrappers around the simulator and the rate fit.

``HedgeLearner.fit(game)`` plays the game with HEDGE and keeps the learned
strategies; ``ConvergenceRateEstimator.fit(trajectory)`` regresses the
log-distance to an equilibrium on elapsed "time". Both follow the usual
conventions: hyper-parameters in ``__init__``, learned state in trailing
underscore attributes, ``get_params``/``set_params`` via ``BaseEstimator``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .analysis import RateFit, abscissa_values, distance_series, fit_rate, l1_distance
from .dynamics import FeedbackModel, StepSchedule, Trajectory, initial_scores, run_trajectory
from .game import Game, find_strict_equilibria, pure_profile_distribution
from .validation import check_pure_profile, check_scores


class HedgeLearner(BaseEstimator):
    """Exponential-weights learning on a normal-form game.

    Parameters
    ----------
    schedule : {"constant", "power_law"}
    gamma, beta : float
        Step-size ``gamma / t**beta`` (``beta`` ignored when constant).
    feedback : {"perfect", "noisy"}
    noise : {"gaussian", "uniform"}
    noise_scale : float
        Per-component standard deviation (gaussian) or half-width (uniform).
    init : {"basin", "cold"} or list of arrays
        ``"basin"`` puts ``init_margin`` on the target equilibrium action of
        every player; ``"cold"`` starts from zero scores.
    init_margin : float
    n_steps : int
    recenter : bool
    random_state : int or None
    """

    def __init__(
        self,
        schedule="constant",
        gamma=0.1,
        beta=0.0,
        feedback="perfect",
        noise="gaussian",
        noise_scale=1.0,
        init="basin",
        init_margin=2.0,
        n_steps=1000,
        recenter=True,
        random_state=None,
    ):
        self.schedule = schedule
        self.gamma = gamma
        self.beta = beta
        self.feedback = feedback
        self.noise = noise
        self.noise_scale = noise_scale
        self.init = init
        self.init_margin = init_margin
        self.n_steps = n_steps
        self.recenter = recenter
        self.random_state = random_state

    def _schedule(self) -> StepSchedule:
        if self.schedule == "constant":
            return StepSchedule.constant(self.gamma)
        return StepSchedule(self.schedule, self.gamma, self.beta)

    def _feedback(self) -> FeedbackModel:
        if self.feedback == "perfect":
            return FeedbackModel.perfect()
        return FeedbackModel("noisy", self.noise, self.noise_scale)

    def fit(self, game: Game, equilibrium=None):
        """Run ``n_steps`` rounds of HEDGE on ``game``.

        ``equilibrium`` selects the strict equilibrium used by ``init="basin"``;
        by default the first strict equilibrium found.
        """
        if not isinstance(game, Game):
            raise TypeError(f"expected a Game, got {type(game).__name__}")
        if equilibrium is None and isinstance(self.init, str) and self.init == "basin":
            report = find_strict_equilibria(game)
            if not report.strict_equilibria:
                raise ValueError("game has no strict equilibrium to initialise near")
            equilibrium = report.strict_equilibria[0]
        if equilibrium is not None:
            equilibrium = check_pure_profile(game, equilibrium)

        if isinstance(self.init, str):
            if self.init == "basin":
                y0 = initial_scores(game, equilibrium, self.init_margin)
            elif self.init == "cold":
                y0 = initial_scores(game)
            else:
                raise ValueError(f"unknown init {self.init!r}")
        else:
            y0 = check_scores(game, self.init)

        seed = 0 if self.random_state is None else int(self.random_state)
        self.trajectory_ = run_trajectory(
            game,
            y0,
            self._schedule(),
            self._feedback(),
            self.n_steps,
            seed,
            recenter=self.recenter,
            reference=equilibrium,
        )
        self.equilibrium_ = equilibrium
        self.strategies_ = self.trajectory_.final_strategies()
        self.scores_ = self.trajectory_.final_scores()
        self.n_players_ = game.num_players
        return self

    def predict(self, game: Game | None = None) -> tuple[int, ...]:
        """Most likely pure action of every player under the learned strategies."""
        check_is_fitted(self, "strategies_")
        return tuple(int(np.argmax(x)) for x in self.strategies_)

    def score(self, game: Game, equilibrium=None) -> float:
        """Negative L1 distance from the learned strategies to ``equilibrium``."""
        check_is_fitted(self, "strategies_")
        if equilibrium is None:
            equilibrium = self.equilibrium_
        if equilibrium is None:
            raise ValueError("no equilibrium to score against")
        return -l1_distance(self.strategies_, pure_profile_distribution(game, equilibrium))


class ConvergenceRateEstimator(BaseEstimator):
    """Exponential rate of a trajectory's approach to a pure profile.

    Parameters
    ----------
    abscissa : {"theta", "t", "t_power"}
        Regress against the step-size sum, the step index, or ``t**power``.
    power : float or None
    window : (int, int) or None
        Inclusive step range; ``None`` skips the first ``skip_fraction``.
    skip_fraction : float
    floor : float
        Distances at or below this value end the window early.
    """

    def __init__(self, abscissa="theta", power=None, window=None, skip_fraction=0.1, floor=0.0):
        self.abscissa = abscissa
        self.power = power
        self.window = window
        self.skip_fraction = skip_fraction
        self.floor = floor

    def fit(self, trajectory: Trajectory, equilibrium=None):
        if equilibrium is None:
            equilibrium = trajectory.reference
        if equilibrium is None:
            raise ValueError("an equilibrium profile is required")
        window = self.window
        if window is None:
            T = trajectory.horizon
            window = (max(1, int(np.ceil(self.skip_fraction * T))), T)
        fit: RateFit = fit_rate(
            trajectory, equilibrium, self.abscissa, window, self.power, self.floor
        )
        self.fit_ = fit
        self.slope_ = fit.slope
        self.intercept_ = fit.intercept
        self.residual_rms_ = fit.residual_rms
        self.window_ = fit.fit_window
        self.truncated_ = fit.truncated
        self.equilibrium_ = tuple(equilibrium)
        return self

    def predict(self, abscissa):
        """Predicted L1 distance ``exp(intercept + slope * abscissa)``."""
        check_is_fitted(self, "slope_")
        return np.exp(self.intercept_ + self.slope_ * np.asarray(abscissa, dtype=float))

    def score(self, trajectory: Trajectory, equilibrium=None) -> float:
        """Negative RMS error of the log-distance over the fitted window."""
        check_is_fitted(self, "slope_")
        eq = self.equilibrium_ if equilibrium is None else equilibrium
        lo, hi = self.window_
        sel = (trajectory.steps >= lo) & (trajectory.steps <= hi)
        xs = abscissa_values(trajectory, self.abscissa, self.power)[sel]
        d = distance_series(trajectory, eq)[sel]
        pred = self.intercept_ + self.slope_ * xs
        return -float(np.sqrt(np.mean((np.log(d) - pred) ** 2)))
