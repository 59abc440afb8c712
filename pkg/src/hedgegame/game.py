"""Finite N-player normal-form games.

Payoffs live in a dense array of shape ``(N, S_1, ..., S_N)`` so that
``payoffs[i][s]`` is player ``i``'s utility at the joint pure profile ``s``.
Flattening ``payoffs[i]`` gives the row-major joint-profile order used by
the on-disk format.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import NotStrictEquilibriumError
from .validation import check_mixed_profile, check_player, check_pure_profile


@dataclass(frozen=True, eq=False)
class Game:
    """Immutable normal-form game.

    Parameters
    ----------
    payoffs : array-like of shape (N, S_1, ..., S_N)
        ``payoffs[i][s_1, ..., s_N]`` is the utility of player ``i``.
    """

    payoffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.payoffs, dtype=float)
        if arr.ndim < 2 or arr.shape[0] != arr.ndim - 1:
            raise ValueError(
                f"payoffs must have shape (N, S_1, ..., S_N), got {arr.shape}"
            )
        if any(n < 1 for n in arr.shape[1:]):
            raise ValueError("every player needs at least one action")
        if not np.all(np.isfinite(arr)):
            raise ValueError("payoffs must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "payoffs", arr)

    @property
    def num_players(self) -> int:
        return self.payoffs.shape[0]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(self.payoffs.shape[1:])

    @property
    def max_abs_payoff(self) -> float:
        return float(np.max(np.abs(self.payoffs)))

    @classmethod
    def from_flat(cls, action_counts: Sequence[int], payoffs) -> "Game":
        """Build from per-player lists in row-major joint-profile order."""
        counts = tuple(int(c) for c in action_counts)
        arr = np.asarray(payoffs, dtype=float)
        expected = (len(counts), int(np.prod(counts)))
        if arr.shape != expected:
            raise ValueError(f"payoffs must have shape {expected}, got {arr.shape}")
        return cls(arr.reshape((len(counts),) + counts))

    def to_dict(self) -> dict:
        return {
            "players": self.num_players,
            "actions": list(self.action_counts),
            "payoffs": self.payoffs.reshape(self.num_players, -1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Game":
        unknown = set(data) - {"players", "actions", "payoffs"}
        if unknown:
            raise ValueError(f"unknown game field(s): {sorted(unknown)}")
        missing = {"players", "actions", "payoffs"} - set(data)
        if missing:
            raise ValueError(f"missing game field(s): {sorted(missing)}")
        if int(data["players"]) != len(data["actions"]):
            raise ValueError("'players' does not match the length of 'actions'")
        return cls.from_flat(data["actions"], data["payoffs"])

    def __eq__(self, other):
        if not isinstance(other, Game):
            return NotImplemented
        return self.payoffs.shape == other.payoffs.shape and bool(
            np.array_equal(self.payoffs, other.payoffs)
        )

    def __hash__(self):
        return hash((self.payoffs.shape, self.payoffs.tobytes()))

    def __repr__(self):
        return f"Game(num_players={self.num_players}, action_counts={self.action_counts})"


def save_game(game: Game, path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(game.to_dict(), indent=2) + "\n")


def load_game(path) -> Game:
    return Game.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class EquilibriumReport:
    strict_equilibria: list[tuple[int, ...]]
    margins: list[float]
    globally_strict: "GlobalStrictness | None" = None


@dataclass(frozen=True)
class GlobalStrictness:
    """Outcome of a sampled global strictness check.

    ``holds`` is only ever a statement about the points that were tested.
    """

    holds: bool
    points_tested: int
    witness: list[np.ndarray] | None = None
    excess: float = 0.0

    @property
    def label(self) -> str:
        return "holds_on_samples" if self.holds else "violated"


def make_game(kind: str, num_players: int = 2, action_counts=None, seed=None) -> Game:
    """Construct one of the named games, or a random generic game.

    ``random_generic`` draws every payoff i.i.d. from U[0, 1]; ties occur with
    probability zero and are not re-drawn.
    """
    if kind == "prisoners_dilemma":
        # actions: 0 = cooperate, 1 = defect
        row = np.array([[3.0, 0.0], [5.0, 1.0]])
        return Game(np.stack([row, row.T]))
    if kind == "coordination":
        row = np.array([[2.0, 0.0], [0.0, 1.0]])
        return Game(np.stack([row, row]))
    if kind == "matching_pennies":
        row = np.array([[1.0, -1.0], [-1.0, 1.0]])
        return Game(np.stack([row, -row]))
    if kind == "random_generic":
        if action_counts is None:
            action_counts = [2] * num_players
        counts = tuple(int(c) for c in action_counts)
        if num_players < 1 or len(counts) != num_players or min(counts) < 1:
            raise ValueError(
                f"invalid dimensions: num_players={num_players}, action_counts={counts}"
            )
        rng = np.random.default_rng(seed)
        return Game(rng.uniform(0.0, 1.0, size=(num_players,) + counts))
    raise ValueError(f"unknown game kind {kind!r}")


def _contract(tensor: np.ndarray, x, skip: int | None) -> np.ndarray:
    """Contract axis j of ``tensor`` with ``x[j]`` for every j except ``skip``."""
    out = tensor
    # walk axes from the back so remaining axis numbers stay valid
    for j in range(len(x) - 1, -1, -1):
        if j == skip:
            continue
        out = np.tensordot(out, x[j], axes=([j], [0]))
    return out


def expected_payoff(game: Game, x, i: int) -> float:
    """Expected utility of player ``i`` under the mixed profile ``x``."""
    x = check_mixed_profile(game, x)
    check_player(game, i)
    return float(_contract(game.payoffs[i], x, None))


def payoff_vector(game: Game, x, i: int) -> np.ndarray:
    """Payoff of each pure action of player ``i`` against ``x_{-i}``."""
    x = check_mixed_profile(game, x)
    check_player(game, i)
    return _contract(game.payoffs[i], x, i)


def pure_payoff_vector(game: Game, s, i: int) -> np.ndarray:
    """Payoff of each pure action of player ``i`` against the pure ``s_{-i}``."""
    s = check_pure_profile(game, s)
    check_player(game, i)
    index = list(s)
    index[i] = slice(None)
    return game.payoffs[i][tuple(index)].copy()


def pure_profile_distribution(game: Game, s) -> list[np.ndarray]:
    """The degenerate mixed profile concentrated on ``s``."""
    out = []
    for n, a in zip(game.action_counts, s):
        e = np.zeros(n)
        e[a] = 1.0
        out.append(e)
    return out


def deviation_gains(game: Game, s_star) -> list[np.ndarray]:
    """``u_i(s*) - u_i(s_i; s*_{-i})`` for every player and action (0 at s*_i)."""
    gains = []
    for i in range(game.num_players):
        v = pure_payoff_vector(game, s_star, i)
        gains.append(v[s_star[i]] - v)
    return gains


def strict_margin(game: Game, s_star) -> float:
    """Smallest deviation loss at ``s_star``; positive iff ``s_star`` is strict.

    Returns ``inf`` when no player has an alternative action.
    """
    worst = np.inf
    for i, g in enumerate(deviation_gains(game, s_star)):
        others = np.delete(g, s_star[i])
        if others.size:
            worst = min(worst, float(others.min()))
    return worst


def find_strict_equilibria(game: Game) -> EquilibriumReport:
    """Enumerate all pure profiles and keep those where every player has a
    unique best response."""
    profiles, margins = [], []
    for s in itertools.product(*(range(n) for n in game.action_counts)):
        m = strict_margin(game, s)
        if m > 0:
            profiles.append(tuple(int(a) for a in s))
            margins.append(m)
    return EquilibriumReport(profiles, margins)


def require_strict(game: Game, s_star) -> float:
    s_star = check_pure_profile(game, s_star)
    a = strict_margin(game, s_star)
    if not a > 0:
        raise NotStrictEquilibriumError(f"{s_star} is not a strict equilibrium")
    return a


def payoff_vectors_batch(game: Game, xs: list[np.ndarray]) -> list[np.ndarray]:
    """Mixed payoff vectors for a batch of profiles.

    ``xs[j]`` has shape (R, S_j); returns one (R, S_i) array per player.
    """
    n = game.num_players
    out = []
    for i in range(n):
        t = np.moveaxis(game.payoffs[i], i, -1)
        batched = False
        for j in range(n):
            if j == i:
                continue
            # once batched, axis 0 is the run index and axis 1 is player j
            t = np.einsum("ra,ra...->r...", xs[j], t) if batched else np.einsum(
                "ra,a...->r...", xs[j], t
            )
            batched = True
        if not batched:
            t = np.broadcast_to(t, (xs[i].shape[0],) + t.shape).copy()
        out.append(t)
    return out


def variational_gap(game: Game, xs: list[np.ndarray], s_star, a: float) -> np.ndarray:
    """``<v(x), x - x*> + (a/2) ||x - x*||_1`` for a batch of profiles.

    Nonpositive values satisfy the variational inequality characterising
    strict equilibria.
    """
    vs = payoff_vectors_batch(game, xs)
    total = np.zeros(xs[0].shape[0])
    for i, (x, v) in enumerate(zip(xs, vs)):
        d = x.copy()
        d[:, s_star[i]] -= 1.0
        total += np.einsum("rs,rs->r", v, d)
        # for pure x*, ||x_i - x*_i||_1 = 2 * (mass off s*_i)
        off = x.sum(axis=1) - x[:, s_star[i]]
        total += a * off
    return total


def _edge_grid(n: int, resolution: int) -> np.ndarray:
    """Points on every edge of the (n-1)-simplex with spacing 1/resolution."""
    if n == 1:
        return np.ones((1, 1))
    lam = np.arange(resolution + 1) / resolution
    pts = []
    for a, b in itertools.combinations(range(n), 2):
        p = np.zeros((lam.size, n))
        p[:, a] = 1.0 - lam
        p[:, b] = lam
        pts.append(p)
    return np.unique(np.concatenate(pts), axis=0)


def check_global_strictness(
    game: Game,
    s_star,
    samples: int = 10000,
    rng_seed: int = 0,
    grid_resolution: int = 50,
    max_grid_points: int = 200_000,
    tol: float = 1e-12,
) -> GlobalStrictness:
    """Test the variational inequality with ``a = margin(s_star)`` over the
    whole strategy space.

    Points come from per-player Dirichlet(1, ..., 1) draws and from a
    deterministic grid on the edges of each player's simplex. On failure the
    witness is the tested point with the largest violation.
    """
    a = require_strict(game, s_star)
    s_star = tuple(int(v) for v in s_star)
    if not np.isfinite(a):
        return GlobalStrictness(True, 0)

    rng = np.random.default_rng(rng_seed)
    batches = [[rng.dirichlet(np.ones(n), size=samples) for n in game.action_counts]]

    grids = [_edge_grid(n, grid_resolution) for n in game.action_counts]
    if np.prod([g.shape[0] for g in grids]) <= max_grid_points:
        idx = np.array(list(itertools.product(*(range(g.shape[0]) for g in grids))))
        batches.append([g[idx[:, j]] for j, g in enumerate(grids)])
    else:
        # too many joint grid points: move one player along its edges at a time
        star = pure_profile_distribution(game, s_star)
        for j, g in enumerate(grids):
            batches.append(
                [g if k == j else np.repeat(star[k][None], g.shape[0], 0)
                 for k in range(game.num_players)]
            )

    tested, worst = 0, None
    for xs in batches:
        gap = variational_gap(game, xs, s_star, a)
        tested += gap.size
        k = int(np.argmax(gap))
        if gap[k] > tol and (worst is None or gap[k] > worst[0]):
            worst = (float(gap[k]), [x[k].copy() for x in xs])
    if worst is not None:
        return GlobalStrictness(False, tested, worst[1], worst[0])
    return GlobalStrictness(True, tested)


def local_margin(game: Game, s_star, radius: float) -> float:
    """Lower bound on ``v_{i s*_i}(x) - v_{i s_i}(x)`` over ``||x - x*||_1 <= radius``.

    Opponents put at most ``radius / 2`` total mass away from ``s*_{-i}``, so
    each gap is at least the worse of its value at x* and its value when that
    mass sits on the least favourable opponent profile.
    """
    s_star = tuple(int(v) for v in s_star)
    q = min(radius / 2.0, 1.0)
    bound = np.inf
    for i in range(game.num_players):
        u = np.moveaxis(game.payoffs[i], i, 0)
        loss = u[s_star[i]][None] - u  # (S_i, opponents...)
        opp = tuple(s_star[:i] + s_star[i + 1:])
        for si in range(game.action_counts[i]):
            if si == s_star[i]:
                continue
            d = loss[si]
            at_star = float(d[opp]) if d.ndim else float(d)
            worst = float(d.min())
            bound = min(bound, at_star * (1 - q) + min(at_star, worst) * q)
    return bound


@dataclass(frozen=True)
class LocalStrictness:
    holds: bool
    radius: float
    margin: float
    points_tested: int
    witness: list[np.ndarray] | None = None


def check_local_strictness(
    game: Game,
    s_star,
    radius: float = 0.2,
    samples: int = 2000,
    rng_seed: int = 0,
    tol: float = 1e-12,
) -> LocalStrictness:
    """Sampled check of the variational inequality near a strict equilibrium.

    The constant ``a`` is the certified ``local_margin`` on the ball; the
    radius is shrunk until that bound is at least half the strict margin.
    The radius actually used is reported.
    """
    a0 = require_strict(game, s_star)
    s_star = tuple(int(v) for v in s_star)
    r = radius
    a = local_margin(game, s_star, r)
    while a < 0.5 * a0:
        r *= 0.5
        a = local_margin(game, s_star, r)

    rng = np.random.default_rng(rng_seed)
    star = pure_profile_distribution(game, s_star)
    d = [rng.dirichlet(np.ones(n), size=samples) for n in game.action_counts]
    dist = sum(np.abs(dj - sj).sum(axis=1) for dj, sj in zip(d, star))
    lam = rng.uniform(0, 1, samples) * r / np.maximum(dist, 1e-300)
    lam = np.minimum(lam, 1.0)[:, None]
    xs = [sj + lam * (dj - sj) for dj, sj in zip(d, star)]
    gap = variational_gap(game, xs, s_star, a)
    bad = np.flatnonzero(gap > tol)
    if bad.size:
        k = bad[0]
        return LocalStrictness(False, r, a, k + 1, [x[k].copy() for x in xs])
    return LocalStrictness(True, r, a, samples)


def deviation_witness(game: Game, s, steps=(1e-1, 1e-2, 1e-3, 1e-4)):
    """For a pure profile that is not strict, return points
    ``x*_i + lam (e_{s'} - e_{s_i})`` (others at x*) together with
    ``<v(x), x - x*>`` at each; these values are all nonnegative.

    Returns ``None`` when ``s`` is strict.
    """
    s = tuple(int(v) for v in s)
    for i, g in enumerate(deviation_gains(game, s)):
        for alt in range(game.action_counts[i]):
            if alt != s[i] and g[alt] <= 0:
                star = pure_profile_distribution(game, s)
                points, values = [], []
                for lam in steps:
                    x = [p.copy() for p in star]
                    x[i][alt] += lam
                    x[i][s[i]] -= lam
                    xs = [p[None] for p in x]
                    vs = payoff_vectors_batch(game, xs)
                    val = sum(float(v[0] @ (xj[0] - sj)) for v, xj, sj in zip(vs, xs, star))
                    points.append(x)
                    values.append(val)
                return points, np.array(values)
    return None
