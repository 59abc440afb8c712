"""Exponential-weights (HEDGE) learning with variable step-size.

The simulator advances a batch of independent runs in lock-step so that a
Monte Carlo study over hundreds of seeds costs roughly one numpy call per
player per step. Each run owns a ``numpy.random.Generator`` seeded from its
own seed; random numbers are drawn in fixed-size blocks per run, so a run's
trajectory does not depend on which other seeds share its batch.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .game import Game, payoff_vectors_batch, pure_payoff_vector
from .validation import (
    check_mixed_profile,
    check_probability_vector,
    check_pure_profile,
    check_rng,
    check_scores,
)

# random numbers are drawn per run in blocks of this many steps
DRAW_BLOCK = 1024


def logit(y) -> np.ndarray:
    """Softmax of a score vector, stabilised by subtracting the maximum."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0 or not np.all(np.isfinite(y)):
        raise ValueError(f"logit needs a finite non-empty 1-d vector, got {y!r}")
    e = np.exp(y - y.max())
    return e / e.sum()


def _softmax_rows(y: np.ndarray) -> np.ndarray:
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _inverse_cdf(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling; ``x`` is (R, S), ``u`` is (R,)."""
    cdf = np.cumsum(x, axis=-1)
    s = (u[:, None] >= cdf).sum(axis=-1)
    return np.minimum(s, x.shape[-1] - 1)


def sample_action(x_i, rng) -> int:
    """Draw an action index with probability ``x_i[s]``."""
    x_i = check_probability_vector(x_i)
    u = check_rng(rng).random()
    return int(_inverse_cdf(x_i[None], np.array([u]))[0])


def neumaier_cumsum(values) -> np.ndarray:
    """Cumulative sum with Neumaier compensation."""
    out = np.empty(len(values))
    total = comp = 0.0
    for k, v in enumerate(values):
        v = float(v)
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[k] = total + comp
    return out


@dataclass(frozen=True)
class StepSchedule:
    """``gamma_t = gamma`` (constant) or ``gamma / t**beta`` (power_law)."""

    kind: str = "constant"
    gamma: float = 0.1
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power_law"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kind == "power_law" and not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")

    @classmethod
    def constant(cls, gamma: float) -> "StepSchedule":
        return cls("constant", gamma, 0.0)

    @classmethod
    def power_law(cls, gamma: float, beta: float) -> "StepSchedule":
        return cls("power_law", gamma, beta)

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.kind == "constant" else self.beta

    def gammas(self, T: int) -> np.ndarray:
        """``gamma_1, ..., gamma_T``."""
        t = np.arange(1, T + 1, dtype=float)
        if self.kind == "constant":
            return np.full(T, float(self.gamma))
        return self.gamma / t**self.beta

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "gamma": self.gamma}
        if self.kind == "power_law":
            d["beta"] = self.beta
        return d


def schedule_gamma(sched: StepSchedule, t: int) -> tuple[float, float, float]:
    """Return ``(gamma_t, theta_t, sum_{j<=t} gamma_j**2)``.

    Both sums are accumulated term by term rather than in closed form.
    """
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t!r}")
    g = sched.gammas(int(t))
    return float(g[-1]), math.fsum(g), math.fsum(g * g)


@dataclass(frozen=True)
class FeedbackModel:
    """Payoff observation channel.

    ``perfect`` returns the mixed payoff vectors ``v_i(x)``. ``noisy`` returns
    the pure payoff vectors ``v_i(s)`` of a sampled profile plus i.i.d.
    zero-mean noise: ``gaussian`` with per-component standard deviation
    ``scale``, or ``uniform`` on ``[-scale, scale]``.
    """

    kind: str = "perfect"
    noise: str = "gaussian"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("perfect", "noisy"):
            raise ValueError(f"unknown feedback kind {self.kind!r}")
        if self.noise not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise family {self.noise!r}")
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise ValueError("noise scale must be finite and nonnegative")

    @classmethod
    def perfect(cls) -> "FeedbackModel":
        return cls("perfect")

    @classmethod
    def gaussian(cls, sigma: float) -> "FeedbackModel":
        return cls("noisy", "gaussian", sigma)

    @classmethod
    def uniform(cls, b: float) -> "FeedbackModel":
        return cls("noisy", "uniform", b)

    @property
    def is_noisy(self) -> bool:
        return self.kind == "noisy"

    @property
    def component_std(self) -> float:
        if not self.is_noisy:
            return 0.0
        return self.scale if self.noise == "gaussian" else self.scale / math.sqrt(3.0)

    def mse_bound(self, n_actions: int) -> float:
        """Upper bound on ``E ||xi_i||_inf**2`` for a player with ``n_actions``.

        Gaussian noise is bounded through ``||xi||_inf**2 <= ||xi||_2**2``;
        uniform noise is bounded almost surely by ``scale**2``.
        """
        if not self.is_noisy:
            return 0.0
        if self.noise == "gaussian":
            return n_actions * self.scale**2
        return self.scale**2

    def sigma(self, game: Game) -> float:
        """Noise constant ``sigma`` with ``E ||xi_i||_inf**2 <= sigma**2`` for all i."""
        return math.sqrt(max(self.mse_bound(n) for n in game.action_counts))

    def payoff_bound(self, game: Game) -> float:
        """``L``: the largest absolute payoff plus the noise constant."""
        return game.max_abs_payoff + self.sigma(game)

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.noise == "gaussian":
            return rng.normal(0.0, self.scale, size)
        return rng.uniform(-self.scale, self.scale, size)

    def to_dict(self) -> dict:
        if not self.is_noisy:
            return {"kind": "perfect"}
        return {"kind": "noisy", "noise": self.noise, "scale": self.scale}


def observe(model: FeedbackModel, game: Game, x, s=None, rng=None) -> list[np.ndarray]:
    """One round of payoff feedback for every player."""
    x = check_mixed_profile(game, x)
    if not model.is_noisy:
        return [v[0] for v in payoff_vectors_batch(game, [xi[None] for xi in x])]
    if s is None:
        raise ValueError("noisy feedback needs the drawn pure profile")
    s = check_pure_profile(game, s)
    rng = check_rng(rng)
    return [
        pure_payoff_vector(game, s, i) + model.draw(rng, n)
        for i, n in enumerate(game.action_counts)
    ]


def hedge_step(state, feedback, gamma_t: float) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """``y_i <- y_i + gamma_t * v_i`` and ``x_i = logit(y_i)`` for every player."""
    if len(state) != len(feedback):
        raise ValueError("feedback and scores cover different numbers of players")
    if not gamma_t > 0:
        raise ValueError("gamma_t must be positive")
    y_new, x_new = [], []
    for yi, vi in zip(state, feedback):
        yi = np.asarray(yi, dtype=float)
        vi = np.asarray(vi, dtype=float)
        if yi.shape != vi.shape:
            raise ValueError(f"feedback shape {vi.shape} does not match scores {yi.shape}")
        yn = yi + gamma_t * vi
        y_new.append(yn)
        x_new.append(logit(yn))
    return y_new, x_new


def initial_scores(game: Game, s_star=None, margin: float = 2.0) -> list[np.ndarray]:
    """Scores with ``y_{i s*_i} = margin`` and zero elsewhere.

    With ``s_star=None`` this is the cold start ``y = 0``.
    """
    y = [np.zeros(n) for n in game.action_counts]
    if s_star is not None:
        s_star = check_pure_profile(game, s_star)
        for yi, a in zip(y, s_star):
            yi[a] = margin
    return y


@dataclass
class Trajectory:
    """Recorded run of the simulator.

    Index ``k`` of every per-step array refers to step ``steps[k]``. Step 0 is
    the initial state; at step ``t >= 1`` the arrays hold the step-size
    ``gamma_t``, the running sum ``theta_t``, the scores and strategies after
    the round-``t`` update, the profile drawn in round ``t`` (noisy feedback)
    and the feedback used. ``true_payoffs`` holds ``v(x)`` at the strategies
    played in round ``t``; it is only kept for noisy, unthinned runs.
    """

    game: Game
    steps: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    scores: list[np.ndarray]
    strategies: list[np.ndarray]
    actions: np.ndarray | None = None
    feedback: list[np.ndarray] | None = None
    true_payoffs: list[np.ndarray] | None = None
    seed: int | None = None
    reference: tuple[int, ...] | None = None
    sup_gap: float | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.steps[-1])

    @property
    def horizon(self) -> int:
        return int(self.steps[-1])

    @property
    def is_full(self) -> bool:
        return len(self.steps) == self.horizon + 1

    def final_strategies(self) -> list[np.ndarray]:
        return [x[-1].copy() for x in self.strategies]

    def final_scores(self) -> list[np.ndarray]:
        return [y[-1].copy() for y in self.scores]

    def off_mass(self, s_star) -> np.ndarray:
        """Per-step ``sum_i (1 - x_{i s*_i})``, computed from the off-equilibrium
        components so it stays accurate far below machine epsilon."""
        total = np.zeros(len(self.steps))
        for x, a in zip(self.strategies, s_star):
            total += np.delete(x, a, axis=1).sum(axis=1)
        return total


def _recorded_steps(T: int, stride: int) -> np.ndarray:
    steps = np.arange(0, T + 1, stride)
    if steps[-1] != T:
        steps = np.append(steps, T)
    return steps


def run_batch(
    game: Game,
    init,
    sched: StepSchedule,
    model: FeedbackModel,
    T: int,
    seeds: Sequence[int],
    *,
    recenter: bool = True,
    stride: int = 1,
    reference=None,
    record_true_payoffs: bool | None = None,
) -> list[Trajectory]:
    """Simulate one independent run per seed, all sharing ``init``.

    When ``reference`` (a pure profile) is given, each trajectory's
    ``sup_gap`` is the largest off-equilibrium score gap
    ``y_{is} - y_{is*_i}`` seen at any step, thinned or not.
    """
    if int(T) != T or T < 1:
        raise ValueError("T must be a positive integer")
    if int(stride) != stride or stride < 1:
        raise ValueError("stride must be a positive integer")
    T, stride = int(T), int(stride)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    init = check_scores(game, init)
    if reference is not None:
        reference = check_pure_profile(game, reference)
    n_players = game.num_players
    counts = game.action_counts
    R = len(seeds)
    noisy = model.is_noisy
    if record_true_payoffs is None:
        record_true_payoffs = noisy and stride == 1
    record_feedback = stride == 1

    gammas = sched.gammas(T)
    theta = neumaier_cumsum(gammas)
    steps = _recorded_steps(T, stride)
    K = len(steps)

    y = [np.repeat(yi[None], R, axis=0) for yi in init]
    x = [_softmax_rows(yi) for yi in y]

    rec_y = [np.empty((R, K, n)) for n in counts]
    rec_x = [np.empty((R, K, n)) for n in counts]
    rec_fb = [np.zeros((R, K, n)) for n in counts] if record_feedback else None
    rec_v = [np.zeros((R, K, n)) for n in counts] if record_true_payoffs else None
    rec_s = np.full((R, K, n_players), -1, dtype=np.int64) if noisy else None
    for i in range(n_players):
        rec_y[i][:, 0] = y[i]
        rec_x[i][:, 0] = x[i]

    if reference is not None:
        off = [np.arange(n) != a for n, a in zip(counts, reference)]

        def max_gap():
            g = np.full(R, -np.inf)
            for yi, a, o in zip(y, reference, off):
                if o.any():
                    g = np.maximum(g, (yi[:, o] - yi[:, [a]]).max(axis=1))
            return g

        sup_gap = max_gap()

    # player i's payoff tensor with its own axis last, for pure lookups
    moved = [np.moveaxis(game.payoffs[i], i, -1) for i in range(n_players)]
    rngs = [np.random.default_rng(s) for s in seeds]
    total_s = sum(counts)
    splits = np.cumsum(counts)[:-1]

    k_next = 1
    for t in range(1, T + 1):
        b = (t - 1) % DRAW_BLOCK
        if noisy and b == 0:
            u_block = np.empty((R, DRAW_BLOCK, n_players))
            xi_block = np.empty((R, DRAW_BLOCK, total_s))
            for r, rng in enumerate(rngs):
                u_block[r] = rng.random((DRAW_BLOCK, n_players))
                xi_block[r] = model.draw(rng, (DRAW_BLOCK, total_s))
        gamma = gammas[t - 1]

        if noisy:
            s = [_inverse_cdf(x[j], u_block[:, b, j]) for j in range(n_players)]
            noise = np.split(xi_block[:, b], splits, axis=1)
            fb = []
            for i in range(n_players):
                idx = tuple(s[j] for j in range(n_players) if j != i)
                fb.append(moved[i][idx] + noise[i])
            v_true = payoff_vectors_batch(game, x) if record_true_payoffs else None
        else:
            fb = payoff_vectors_batch(game, x)
            v_true = None

        for i in range(n_players):
            yi = y[i] + gamma * fb[i]
            if recenter:
                yi -= yi.max(axis=1, keepdims=True)
            y[i] = yi
            x[i] = _softmax_rows(yi)

        if reference is not None:
            np.maximum(sup_gap, max_gap(), out=sup_gap)

        if k_next < K and steps[k_next] == t:
            k = k_next
            for i in range(n_players):
                rec_y[i][:, k] = y[i]
                rec_x[i][:, k] = x[i]
                if record_feedback:
                    rec_fb[i][:, k] = fb[i]
                if v_true is not None:
                    rec_v[i][:, k] = v_true[i]
            if noisy and stride == 1:
                rec_s[:, k] = np.stack(s, axis=1)
            k_next += 1

    rec_gamma = np.concatenate([[0.0], gammas])[steps]
    rec_theta = np.concatenate([[0.0], theta])[steps]
    meta = {
        "schedule": sched.to_dict(),
        "feedback": model.to_dict(),
        "recenter": recenter,
        "stride": stride,
    }
    out = []
    for r, seed in enumerate(seeds):
        out.append(
            Trajectory(
                game=game,
                steps=steps,
                gamma=rec_gamma,
                theta=rec_theta,
                scores=[a[r] for a in rec_y],
                strategies=[a[r] for a in rec_x],
                actions=rec_s[r] if (noisy and stride == 1) else None,
                feedback=[a[r] for a in rec_fb] if record_feedback else None,
                true_payoffs=[a[r] for a in rec_v] if record_true_payoffs else None,
                seed=seed,
                reference=reference,
                sup_gap=float(sup_gap[r]) if reference is not None else None,
                meta=dict(meta),
            )
        )
    return out


def run_trajectory(
    game: Game,
    init,
    sched: StepSchedule,
    model: FeedbackModel,
    T: int,
    rng_seed: int = 0,
    **kwargs,
) -> Trajectory:
    """Run HEDGE for ``T`` rounds from the scores ``init``.

    Keyword arguments are passed to :func:`run_batch`.
    """
    return run_batch(game, init, sched, model, T, [rng_seed], **kwargs)[0]


def trajectory_header(game: Game) -> list[str]:
    cols = ["t", "gamma_t", "theta_t"]
    for prefix in ("y", "x"):
        for i, n in enumerate(game.action_counts):
            cols += [f"{prefix}_{i}_{s}" for s in range(n)]
    cols += [f"s_{i}" for i in range(game.num_players)]
    return cols


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write one row per recorded step; drawn actions are -1 when none was drawn."""
    n = traj.game.num_players
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(traj.game))
        for k, t in enumerate(traj.steps):
            row = [str(int(t)), _fmt(traj.gamma[k]), _fmt(traj.theta[k])]
            for arrs in (traj.scores, traj.strategies):
                for a in arrs:
                    row += [_fmt(v) for v in a[k]]
            if traj.actions is not None:
                row += [str(int(a)) for a in traj.actions[k]]
            else:
                row += ["-1"] * n
            w.writerow(row)


def read_trajectory_csv(path, game: Game) -> Trajectory:
    """Inverse of :func:`write_trajectory_csv` for the recorded columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != trajectory_header(game):
        raise ValueError("trajectory header does not match the game")
    data = rows[1:]
    steps = np.array([int(r[0]) for r in data])
    num = np.array([[float(v) for v in r[1:-game.num_players]] for r in data])
    acts = np.array([[int(v) for v in r[-game.num_players:]] for r in data], dtype=np.int64)
    gamma, theta = num[:, 0], num[:, 1]
    col = 2
    blocks = []
    for _ in range(2):
        per = []
        for n in game.action_counts:
            per.append(num[:, col:col + n])
            col += n
        blocks.append(per)
    return Trajectory(
        game=game,
        steps=steps,
        gamma=gamma,
        theta=theta,
        scores=blocks[0],
        strategies=blocks[1],
        actions=None if np.all(acts == -1) else acts,
    )
