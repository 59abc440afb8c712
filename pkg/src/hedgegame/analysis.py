"""Convergence diagnostics for HEDGE trajectories.

Distances are measured in the L1 norm on mixed profiles; score displacements
in its dual, the max-absolute-value norm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .dynamics import StepSchedule, Trajectory, logit
from .game import Game, payoff_vectors_batch, require_strict, strict_margin
from .validation import check_pure_profile


def _as_profile(x) -> list[np.ndarray]:
    return [np.asarray(xi, dtype=float) for xi in x]


def _pure_support(x_star) -> tuple[int, ...] | None:
    """Action indices if every vector is a unit vector, else None."""
    out = []
    for xi in x_star:
        k = int(np.argmax(xi))
        if xi[k] != 1.0 or np.count_nonzero(xi) != 1:
            return None
        out.append(k)
    return tuple(out)


def _check_same_shape(a, b):
    if len(a) != len(b) or any(ai.shape != bi.shape for ai, bi in zip(a, b)):
        raise ValueError("profiles have mismatched dimensions")


def l1_distance(x, x_star) -> float:
    """``sum_i ||x_i - x*_i||_1``.

    For pure ``x*`` this is evaluated as twice the probability mass off the
    equilibrium actions, which keeps tiny distances exact instead of
    rounding ``1 - x_{is*}`` to zero.
    """
    x, x_star = _as_profile(x), _as_profile(x_star)
    _check_same_shape(x, x_star)
    s = _pure_support(x_star)
    if s is not None:
        return 2.0 * sum(float(np.delete(xi, a).sum()) for xi, a in zip(x, s))
    return float(sum(np.abs(xi - si).sum() for xi, si in zip(x, x_star)))


def kl_divergence(x_star, x) -> float:
    """``sum_i sum_s x*_is log(x*_is / x_is)``; ``inf`` if ``x`` misses support of ``x*``."""
    x, x_star = _as_profile(x), _as_profile(x_star)
    _check_same_shape(x, x_star)
    s = _pure_support(x_star)
    if s is not None:
        total = 0.0
        for xi, a in zip(x, s):
            if xi[a] <= 0:
                return math.inf
            off = float(np.delete(xi, a).sum())
            # log1p(-off) is accurate for small off-mass, log(x_a) for small x_a
            total -= math.log1p(-off) if off < 0.5 else math.log(xi[a])
        return total
    total = 0.0
    for si, xi in zip(x_star, x):
        if np.any((si > 0) & (xi <= 0)):
            return math.inf
        m = si > 0
        total += float(np.sum(si[m] * (np.log(si[m]) - np.log(xi[m]))))
    return total


def _kl_from_scores(x_star, y) -> float:
    """KL divergence to ``logit(y)`` using log-softmax directly."""
    total = 0.0
    for si, yi in zip(x_star, y):
        m = si > 0
        logx = yi - logsumexp(yi)
        total += float(np.sum(si[m] * (np.log(si[m]) - logx[m])))
    return total


def fenchel_coupling(x_star, y) -> float:
    """``sum_i h(x*_i) + log sum_s exp(y_is) - <y_i, x*_i>`` with ``h`` the negative entropy."""
    x_star, y = _as_profile(x_star), _as_profile(y)
    _check_same_shape(x_star, y)
    if not all(np.all(np.isfinite(yi)) for yi in y):
        raise ValueError("scores must be finite")
    return float(
        sum(xlogy(si, si).sum() + logsumexp(yi) - yi @ si for si, yi in zip(x_star, y))
    )


def z_gaps(y, s_star) -> list[np.ndarray]:
    """Score gaps ``y_is - y_{i s*_i}`` relative to the equilibrium action."""
    y = _as_profile(y)
    s_star = tuple(s_star)
    if len(s_star) != len(y) or any(
        not 0 <= a < yi.size for a, yi in zip(s_star, y)
    ):
        raise ValueError(f"invalid profile {s_star} for scores of sizes {[yi.size for yi in y]}")
    return [yi - yi[a] for yi, a in zip(y, s_star)]


@dataclass(frozen=True)
class BasinSpec:
    """Score region ``U_M``: every off-equilibrium gap is at most ``-threshold``."""

    equilibrium: tuple[int, ...]
    threshold: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("basin threshold must be positive")
        object.__setattr__(self, "equilibrium", tuple(int(a) for a in self.equilibrium))


def in_basin(y, basin: BasinSpec) -> bool:
    for z, a in zip(z_gaps(y, basin.equilibrium), basin.equilibrium):
        if np.any(np.delete(z, a) > -basin.threshold):
            return False
    return True


def basin_radius(action_counts, threshold: float) -> float:
    """L1 radius of a ball around x* that contains ``U_M``: ``2 sum_i (S_i - 1) e^{-M}``."""
    return 2.0 * sum(n - 1 for n in action_counts) * math.exp(-threshold)


def basin_margin(game: Game, s_star, threshold: float, max_vertices: int = 1_000_000) -> float:
    """Exact ``min_{x in U_M} min_i min_{s != s*_i} [v_{is*_i}(x) - v_{is}(x)]``.

    The closure of ``U_M`` in player j's simplex is the polytope
    ``x_js <= e^{-M} x_{js*}``, whose vertices put mass ``r/(1 + k r)`` on a
    subset of k off-equilibrium actions (``r = e^{-M}``). The gaps are
    multilinear, so the minimum is attained on products of such vertices.
    """
    s_star = check_pure_profile(game, s_star)
    r = math.exp(-threshold)
    per_player = []
    for n, a in zip(game.action_counts, s_star):
        others = [s for s in range(n) if s != a]
        verts = []
        for k in range(len(others) + 1):
            for subset in itertools.combinations(others, k):
                v = np.zeros(n)
                v[a] = 1.0
                v[list(subset)] = r
                verts.append(v / v.sum())
        per_player.append(np.array(verts))
    total = int(np.prod([len(v) for v in per_player]))
    if total > max_vertices:
        raise ValueError(f"basin has {total} vertex combinations; too many to enumerate")
    idx = np.array(list(itertools.product(*(range(len(v)) for v in per_player))))
    xs = [v[idx[:, j]] for j, v in enumerate(per_player)]
    vs = payoff_vectors_batch(game, xs)
    worst = math.inf
    for v, a in zip(vs, s_star):
        gap = v[:, [a]] - v
        gap = np.delete(gap, a, axis=1)
        if gap.size:
            worst = min(worst, float(gap.min()))
    return worst


def find_basin_threshold(game: Game, s_star, fraction: float = 0.5, start: float = 1.0) -> float:
    """Smallest ``M`` on the grid ``start * 2**k`` whose basin margin is at
    least ``fraction`` of the strict margin."""
    target = fraction * require_strict(game, s_star)
    M = start
    for _ in range(60):
        if basin_margin(game, s_star, M) >= target:
            return M
        M *= 2.0
    raise RuntimeError("no basin threshold found")


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit ``log ||x(t) - x*||_1 ~ intercept + slope * abscissa``."""

    slope: float
    intercept: float
    fit_window: tuple[int, int]
    residual_rms: float
    abscissa_kind: str
    power: float | None = None
    n_points: int = 0
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "window_start": self.fit_window[0],
            "window_end": self.fit_window[1],
            "residual_rms": self.residual_rms,
            "abscissa": self.abscissa_kind,
            "power": self.power,
            "n_points": self.n_points,
            "truncated": self.truncated,
        }


def distance_series(traj: Trajectory, s_star) -> np.ndarray:
    """``||x(t) - x*||_1`` at every recorded step, for a pure ``x*``."""
    return 2.0 * traj.off_mass(s_star)


def abscissa_values(traj: Trajectory, kind: str = "theta", power: float | None = None):
    if kind == "theta":
        return traj.theta
    if kind == "t":
        return traj.steps.astype(float)
    if kind == "t_power":
        if power is None:
            raise ValueError("t_power abscissa needs a power")
        return traj.steps.astype(float) ** power
    raise ValueError(f"unknown abscissa {kind!r}")


def default_window(T: int, skip_fraction: float = 0.1) -> tuple[int, int]:
    return (max(1, int(math.ceil(skip_fraction * T))), T)


def fit_rate(
    traj: Trajectory,
    s_star,
    abscissa: str = "theta",
    window: tuple[int, int] | None = None,
    power: float | None = None,
    floor: float = 0.0,
) -> RateFit:
    """Fit the exponential decay rate of the distance to ``s_star``.

    ``window`` is an inclusive step range; the default drops the first 10% of
    steps. If a distance at or below ``floor`` occurs inside the window, the
    window is cut just before it and the fit is flagged as truncated.
    """
    if window is None:
        window = default_window(traj.horizon)
    lo, hi = int(window[0]), int(window[1])
    if lo > hi:
        raise ValueError(f"empty fit window {window}")
    xs = abscissa_values(traj, abscissa, power)
    d = distance_series(traj, s_star)
    sel = np.flatnonzero((traj.steps >= lo) & (traj.steps <= hi))
    truncated = False
    bad = np.flatnonzero(~(d[sel] > floor) | ~np.isfinite(d[sel]))
    if bad.size:
        sel = sel[: bad[0]]
        truncated = True
    if sel.size < 2:
        raise ValueError(f"fit window {window} has fewer than two usable points")
    a = xs[sel]
    b = np.log(d[sel])
    A = np.column_stack([a, np.ones_like(a)])
    (slope, intercept), *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - (slope * a + intercept)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        fit_window=(int(traj.steps[sel[0]]), int(traj.steps[sel[-1]])),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        abscissa_kind=abscissa,
        power=power,
        n_points=int(sel.size),
        truncated=truncated,
    )


def verify_kl_step(x_star, y, y_next, tol: float = 1e-9) -> tuple[float, float, bool]:
    """One-step bound on the KL divergence under a score displacement.

    ``lhs = D(x*, logit(y'))`` and
    ``rhs = D(x*, logit(y)) + <y' - y, logit(y) - x*> + 1/2 ||y' - y||_inf**2``,
    each summed over players.
    """
    x_star, y, y_next = _as_profile(x_star), _as_profile(y), _as_profile(y_next)
    lhs = _kl_from_scores(x_star, y_next)
    rhs = _kl_from_scores(x_star, y)
    for si, yi, yn in zip(x_star, y, y_next):
        dy = yn - yi
        rhs += float(dy @ (logit(yi) - si)) + 0.5 * float(np.max(np.abs(dy))) ** 2
    return lhs, rhs, bool(lhs <= rhs + tol)


def logit_gradient_check(y, h: float = 1e-5) -> float:
    """Max deviation between central differences of log-sum-exp and ``logit(y)``."""
    y = np.asarray(y, dtype=float)
    grad = np.empty_like(y)
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = h
        grad[k] = (logsumexp(y + e) - logsumexp(y - e)) / (2 * h)
    return float(np.max(np.abs(grad - logit(y))))


@dataclass(frozen=True)
class NoiseLedger:
    """Cumulative weighted noise ``X_is(t) = sum_{j<=t} gamma_j eta_is(j)``.

    ``sums[i]`` has one row per step ``t = 0..T`` (row 0 is zero).
    """

    steps: np.ndarray
    sums: list[np.ndarray]
    gamma2: np.ndarray

    def sup_abs(self) -> list[np.ndarray]:
        """``sup_t |X_is(t)|`` for every player and action."""
        return [np.abs(x).max(axis=0) for x in self.sums]


def noise_sums(traj: Trajectory, s_star) -> NoiseLedger:
    """Martingale noise sums relative to the equilibrium action.

    ``eta_is(t) = (vhat_is - v_is(x)) - (vhat_{is*} - v_{is*}(x))`` where
    ``v(x)`` is the true mixed payoff vector at the strategies played.
    """
    if not traj.is_full or traj.feedback is None:
        raise ValueError("noise sums need an unthinned trajectory with recorded feedback")
    s_star = tuple(int(a) for a in s_star)
    g = traj.gamma
    gamma2 = np.cumsum(g * g)
    if traj.true_payoffs is None:
        if traj.meta.get("feedback", {}).get("kind", "perfect") != "perfect":
            raise ValueError("noisy trajectory was recorded without true payoffs")
        sums = [np.zeros_like(f) for f in traj.feedback]
        return NoiseLedger(traj.steps, sums, gamma2)
    sums = []
    for fb, v, a in zip(traj.feedback, traj.true_payoffs, s_star):
        err = fb - v
        eta = err - err[:, [a]]
        eta[0] = 0.0
        sums.append(np.cumsum(g[:, None] * eta, axis=0))
    return NoiseLedger(traj.steps, sums, gamma2)


def _zeta_tail_sum(p: float, n: int = 10_000) -> float:
    """``sum_{t>=1} t**-p`` for ``p > 1``: direct sum to n, then Euler-Maclaurin."""
    head = math.fsum(float(t) ** -p for t in range(1, n + 1))
    # remainder sum_{t>n} t^-p ~ integral_n^inf - f(n)/2 - f'(n)/12 - ...
    f = n ** -p
    integral = n ** (1 - p) / (p - 1)
    d1 = -p * n ** (-p - 1)
    d3 = -p * (p + 1) * (p + 2) * n ** (-p - 3)
    return head + integral - f / 2 - d1 / 12 + d3 / 720


def squared_step_sum(sched: StepSchedule) -> float:
    """``Gamma_2 = sum_t gamma_t**2``; ``inf`` when the series diverges."""
    if sched.kind == "constant" or sched.beta <= 0.5:
        return math.inf
    return sched.gamma**2 * _zeta_tail_sum(2 * sched.beta)


def step_size_admissible(
    sched: StepSchedule, eps: float, M: float, game: Game, sigma: float
) -> tuple[float, float, bool]:
    """Check ``Gamma_2 <= eps M^2 / (2 N (S - 1) sigma^2)`` with ``S`` the
    largest action count. Returns ``(Gamma_2, threshold, admissible)``."""
    gamma2 = squared_step_sum(sched)
    S = max(game.action_counts)
    denom = 2 * game.num_players * (S - 1) * sigma**2
    threshold = math.inf if denom == 0 else eps * M**2 / denom
    return gamma2, threshold, bool(math.isfinite(gamma2) and gamma2 <= threshold)


def kl_series(traj: Trajectory, s_star) -> np.ndarray:
    """``D(x*, x(t))`` at every recorded step for pure ``x*``."""
    out = np.zeros(len(traj.steps))
    for x, a in zip(traj.strategies, s_star):
        off = np.delete(x, a, axis=1).sum(axis=1)
        with np.errstate(divide="ignore"):
            out -= np.where(off < 0.5, np.log1p(-np.minimum(off, 0.5)), np.log(x[:, a]))
    return out


def gap_series(traj: Trajectory, s_star) -> list[np.ndarray]:
    """Per-step off-equilibrium score gaps, one (K, S_i - 1) array per player."""
    return [np.delete(y - y[:, [a]], a, axis=1) for y, a in zip(traj.scores, s_star)]


def trajectory_diagnostics(
    traj: Trajectory, s_star, threshold: float | None = None, rate: float | None = None
) -> dict:
    """Slack of every inequality the convergence analysis relies on.

    Every ``*_slack`` entry is ``rhs - lhs`` of its inequality, so it should
    be nonnegative. ``rate`` defaults to the basin margin when a
    ``threshold`` is given and to the strict margin otherwise. The z-descent,
    telescoped and distance-bound series are evaluated only at steps whose
    predecessor lies in the basin.
    """
    s_star = tuple(int(a) for a in s_star)
    game = traj.game
    if rate is None:
        rate = (
            basin_margin(game, s_star, threshold)
            if threshold is not None
            else strict_margin(game, s_star)
        )
    l1 = distance_series(traj, s_star)
    kl = kl_series(traj, s_star)
    out = {
        "step": traj.steps,
        "l1": l1,
        "kl": kl,
        "kl_l1_slack": kl - 0.5 * l1,
        "rate": rate,
    }
    star = [np.eye(n)[a] for n, a in zip(game.action_counts, s_star)]
    fen = np.full(len(traj.steps), np.nan)
    for k in range(1, len(traj.steps)):
        y0 = [y[k - 1] for y in traj.scores]
        y1 = [y[k] for y in traj.scores]
        lhs, rhs, _ = verify_kl_step(star, y0, y1)
        fen[k] = rhs - lhs
    out["fenchel_slack"] = fen

    if threshold is not None:
        gaps = gap_series(traj, s_star)
        zmax = np.max(np.concatenate(gaps, axis=1), axis=1) if gaps else np.zeros(len(l1))
        inside = zmax <= -threshold
        out["in_basin"] = inside
        prev_in = np.concatenate([[False], inside[:-1]])
        # all earlier steps in the basin, for the telescoped bounds
        always = np.logical_and.accumulate(inside)
        prev_always = np.concatenate([[False], always[:-1]])
        dz = np.full(len(l1), np.nan)
        tele = np.full(len(l1), np.nan)
        dist = np.full(len(l1), np.nan)
        g = traj.gamma
        for k in range(1, len(l1)):
            if traj.steps[k] - traj.steps[k - 1] != 1:
                continue
            if prev_in[k]:
                # z(t) <= z(t-1) - a gamma_t for every off-equilibrium gap
                dz[k] = min(
                    float(np.min(gp[k - 1] - rate * g[k] - gp[k])) for gp in gaps if gp.size
                )
            if prev_always[k]:
                tele[k] = -threshold - rate * traj.theta[k] - zmax[k]
                bound = basin_radius(game.action_counts, threshold) * math.exp(
                    -rate * traj.theta[k]
                )
                dist[k] = bound - l1[k]
        out["z_descent_slack"] = dz
        out["telescoped_slack"] = tele
        out["distance_bound_slack"] = dist
    return out
