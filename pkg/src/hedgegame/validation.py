"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numbers

import numpy as np

SIMPLEX_ATOL = 1e-9


def check_player(game, i) -> int:
    if not isinstance(i, numbers.Integral) or not 0 <= i < game.num_players:
        raise ValueError(f"player index {i!r} out of range for {game.num_players} players")
    return int(i)


def check_mixed_profile(game, x, atol: float = SIMPLEX_ATOL) -> list[np.ndarray]:
    """Validate one probability vector per player and return them as float arrays."""
    if len(x) != game.num_players:
        raise ValueError(f"expected {game.num_players} distributions, got {len(x)}")
    out = []
    for i, (xi, n) in enumerate(zip(x, game.action_counts)):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (n,):
            raise ValueError(f"distribution {i} has shape {xi.shape}, expected ({n},)")
        if not np.all(np.isfinite(xi)) or np.any(xi < -atol) or abs(xi.sum() - 1.0) > atol:
            raise ValueError(f"distribution {i} is not a probability vector: {xi}")
        out.append(xi)
    return out


def check_pure_profile(game, s) -> tuple[int, ...]:
    s = tuple(s)
    if len(s) != game.num_players:
        raise ValueError(f"expected {game.num_players} actions, got {len(s)}")
    for i, (a, n) in enumerate(zip(s, game.action_counts)):
        if not isinstance(a, numbers.Integral) or not 0 <= a < n:
            raise ValueError(f"action {a!r} of player {i} out of range [0, {n})")
    return tuple(int(a) for a in s)


def check_scores(game, y) -> list[np.ndarray]:
    if len(y) != game.num_players:
        raise ValueError(f"expected {game.num_players} score vectors, got {len(y)}")
    out = []
    for i, (yi, n) in enumerate(zip(y, game.action_counts)):
        yi = np.asarray(yi, dtype=float)
        if yi.shape != (n,):
            raise ValueError(f"score vector {i} has shape {yi.shape}, expected ({n},)")
        if not np.all(np.isfinite(yi)):
            raise ValueError(f"score vector {i} is not finite")
        out.append(yi)
    return out


def check_probability_vector(p, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a non-empty 1-d probability vector")
    if not np.all(np.isfinite(p)) or np.any(p < -atol) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"not a probability vector: {p}")
    return p


def check_rng(seed) -> np.random.Generator:
    """Turn None, an int or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot seed a numpy Generator")
