"""Experiment configuration files.

Configs are JSON documents. Unknown keys are rejected at every level.
Omitted optional fields take these defaults:

=========================  ==============================================
``feedback``               ``{"kind": "perfect"}``
``init``                   ``{"kind": "basin", "margin": 2.0}``
``seeds``                  ``[0]``
``outputs.dir``            ``null`` (CLI flag, then ``HEDGEGAME_OUT``)
``outputs.stride``         ``null`` (1 for single runs, ``T // 2000`` for
                           Monte Carlo)
``outputs.trajectory``     ``true``
``analysis.equilibrium``   ``null`` (first strict equilibrium)
``analysis.basin_threshold``  ``null`` (init margin under perfect feedback,
                           half of it under noisy feedback)
``analysis.confidence``    ``0.05``
``analysis.abscissa``      ``"theta"``
``analysis.power``         ``null``
``analysis.window``        ``null`` (drop the first 10% of steps)
``analysis.tolerance``     ``1e-3``
``sweep``                  ``null``
=========================  ==============================================
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .dynamics import FeedbackModel, StepSchedule
from .game import Game, load_game, make_game


class ConfigError(ValueError):
    pass


_GAME_KINDS = {"prisoners_dilemma", "coordination", "matching_pennies", "random_generic"}

_SCHEMA = {
    "game": None,  # validated separately
    "schedule": {"kind", "gamma", "beta"},
    "feedback": {"kind", "noise", "scale"},
    "init": {"kind", "margin"},
    "horizon": None,
    "seeds": None,
    "outputs": {"dir", "stride", "trajectory"},
    "analysis": {
        "equilibrium",
        "basin_threshold",
        "confidence",
        "abscissa",
        "power",
        "window",
        "tolerance",
    },
    "sweep": {"parameter", "values"},
}

_ANALYSIS_DEFAULTS = {
    "equilibrium": None,
    "basin_threshold": None,
    "confidence": 0.05,
    "abscissa": "theta",
    "power": None,
    "window": None,
    "tolerance": 1e-3,
}

_OUTPUT_DEFAULTS = {"dir": None, "stride": None, "trajectory": True}


def parse_seeds(value) -> list[int]:
    """Accept an int, a list of ints, or a range string ``"A..B"`` (inclusive)."""
    if isinstance(value, bool):
        raise ConfigError(f"invalid seeds {value!r}")
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", value)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            if b < a:
                raise ConfigError(f"empty seed range {value!r}")
            return list(range(a, b + 1))
        if re.fullmatch(r"\s*-?\d+\s*", value):
            return [int(value)]
        raise ConfigError(f"invalid seeds {value!r}; use N or A..B")
    if isinstance(value, list) and value and all(
        isinstance(s, int) and not isinstance(s, bool) for s in value
    ):
        return list(value)
    raise ConfigError(f"invalid seeds {value!r}")


def format_seeds(seeds: list[int]):
    if len(seeds) == 1:
        return seeds[0]
    if seeds == list(range(seeds[0], seeds[-1] + 1)):
        return f"{seeds[0]}..{seeds[-1]}"
    return list(seeds)


@dataclass
class ExperimentConfig:
    game: dict
    schedule: dict
    horizon: int
    feedback: dict = field(default_factory=lambda: {"kind": "perfect"})
    init: dict = field(default_factory=lambda: {"kind": "basin", "margin": 2.0})
    seeds: list = field(default_factory=lambda: [0])
    outputs: dict = field(default_factory=lambda: dict(_OUTPUT_DEFAULTS))
    analysis: dict = field(default_factory=lambda: dict(_ANALYSIS_DEFAULTS))
    sweep: dict | None = None
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def __post_init__(self):
        self.validate()

    # -- building blocks -------------------------------------------------

    def build_game(self) -> Game:
        g = self.game
        if "file" in g:
            path = Path(g["file"])
            if not path.is_absolute():
                path = self.base_dir / path
            return load_game(path)
        if "payoffs" in g:
            return Game.from_dict(g)
        return make_game(
            g["kind"],
            num_players=g.get("players", 2),
            action_counts=g.get("actions"),
            seed=g.get("seed"),
        )

    def build_schedule(self) -> StepSchedule:
        s = self.schedule
        return StepSchedule(s["kind"], float(s["gamma"]), float(s.get("beta", 0.0)))

    def build_feedback(self) -> FeedbackModel:
        f = self.feedback
        if f["kind"] == "perfect":
            return FeedbackModel.perfect()
        return FeedbackModel("noisy", f.get("noise", "gaussian"), float(f.get("scale", 1.0)))

    def basin_threshold(self) -> float:
        m = self.analysis.get("basin_threshold")
        if m is not None:
            return float(m)
        margin = float(self.init.get("margin", 2.0))
        return margin / 2 if self.feedback["kind"] == "noisy" else margin

    def config_hash(self) -> str:
        """Digest of everything that affects a run except seeds and output paths."""
        d = self.to_dict()
        d.pop("seeds")
        d["outputs"].pop("dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "game": copy.deepcopy(self.game),
            "schedule": dict(self.schedule),
            "feedback": dict(self.feedback),
            "init": dict(self.init),
            "horizon": self.horizon,
            "seeds": format_seeds(self.seeds),
            "outputs": dict(self.outputs),
            "analysis": copy.deepcopy(self.analysis),
            "sweep": copy.deepcopy(self.sweep),
        }

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(_SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        for key in ("game", "schedule", "horizon"):
            if key not in data:
                raise ConfigError(f"missing required field '{key}'")
        for key, allowed in _SCHEMA.items():
            if allowed and isinstance(data.get(key), dict):
                bad = set(data[key]) - allowed
                if bad:
                    names = ", ".join(f"{key}.{b}" for b in sorted(bad))
                    raise ConfigError(f"unknown config key(s): {names}")
        analysis = dict(_ANALYSIS_DEFAULTS)
        analysis.update(data.get("analysis") or {})
        outputs = dict(_OUTPUT_DEFAULTS)
        outputs.update(data.get("outputs") or {})
        init = {"kind": "basin", "margin": 2.0}
        init.update(data.get("init") or {})
        if init["kind"] == "cold":
            init.pop("margin", None)
        feedback = dict(data.get("feedback") or {"kind": "perfect"})
        if feedback.get("kind") == "noisy":
            feedback.setdefault("noise", "gaussian")
            feedback.setdefault("scale", 1.0)
        schedule = dict(data["schedule"])
        if schedule.get("kind") == "power_law":
            schedule.setdefault("beta", 0.5)
        return cls(
            game=copy.deepcopy(data["game"]),
            schedule=schedule,
            horizon=data["horizon"],
            feedback=feedback,
            init=init,
            seeds=parse_seeds(data.get("seeds", 0)),
            outputs=outputs,
            analysis=analysis,
            sweep=copy.deepcopy(data.get("sweep")),
            base_dir=base_dir,
        )

    def validate(self) -> None:
        if isinstance(self.horizon, bool) or not isinstance(self.horizon, int) or self.horizon < 1:
            raise ConfigError("'horizon' must be a positive integer")
        if not self.seeds:
            raise ConfigError("seed range is empty")
        g = self.game
        if not isinstance(g, dict):
            raise ConfigError("'game' must be an object")
        if "file" in g:
            if set(g) != {"file"}:
                raise ConfigError("a game file reference takes no other keys")
            path = Path(g["file"])
            if not path.is_absolute():
                path = self.base_dir / path
            if not path.exists():
                raise ConfigError(f"game file not found: {path}")
        elif "payoffs" in g:
            bad = set(g) - {"players", "actions", "payoffs"}
            if bad:
                raise ConfigError(f"unknown config key(s): {', '.join('game.' + b for b in sorted(bad))}")
        else:
            bad = set(g) - {"kind", "players", "actions", "seed"}
            if bad:
                raise ConfigError(f"unknown config key(s): {', '.join('game.' + b for b in sorted(bad))}")
            if g.get("kind") not in _GAME_KINDS:
                raise ConfigError(f"unknown game kind {g.get('kind')!r}")
        if "kind" not in self.schedule or "gamma" not in self.schedule:
            raise ConfigError("missing required field 'schedule.kind' or 'schedule.gamma'")
        if self.feedback.get("kind") not in ("perfect", "noisy"):
            raise ConfigError(f"unknown feedback kind {self.feedback.get('kind')!r}")
        if self.init.get("kind") not in ("basin", "cold"):
            raise ConfigError(f"unknown init kind {self.init.get('kind')!r}")
        if self.analysis["abscissa"] not in ("theta", "t", "t_power"):
            raise ConfigError(f"unknown abscissa {self.analysis['abscissa']!r}")
        try:
            self.build_schedule()
            self.build_feedback()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(config))
