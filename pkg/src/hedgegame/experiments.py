"""Batch experiment drivers behind the command line interface."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    BasinSpec,
    NoiseLedger,
    RateFit,
    distance_series,
    fit_rate,
    noise_sums,
    step_size_admissible,
    trajectory_diagnostics,
)
from .config import ConfigError, ExperimentConfig
from .dynamics import Trajectory, initial_scores, run_batch, write_trajectory_csv
from .game import Game, find_strict_equilibria, strict_margin
from .validation import check_pure_profile

log = logging.getLogger(__name__)

RUNS_HEADER = [
    "config_hash",
    "seed",
    "final_distance",
    "converged",
    "escaped",
    "slope",
    "intercept",
    "residual_rms",
    "window_start",
    "window_end",
]

SWEEP_HEADER = [
    "parameter",
    "value",
    "schedule",
    "gamma",
    "beta",
    "abscissa",
    "fitted_slope",
    "theoretical_slope",
    "ratio",
    "final_distance",
]


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    seed: int
    final_distance: float
    converged: bool
    escaped: bool
    slope: float | None
    intercept: float | None
    residual_rms: float | None
    window_start: int | None
    window_end: int | None

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def record_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_equilibrium(config: ExperimentConfig, game: Game) -> tuple[int, ...]:
    eq = config.analysis.get("equilibrium")
    if eq is not None:
        eq = check_pure_profile(game, eq)
        if not strict_margin(game, eq) > 0:
            raise ExperimentError(f"{eq} is not a strict equilibrium")
        return eq
    report = find_strict_equilibria(game)
    if not report.strict_equilibria:
        raise ExperimentError("no strict equilibrium: nothing to analyse convergence to")
    return report.strict_equilibria[0]


def _initial(config: ExperimentConfig, game: Game, eq):
    if config.init["kind"] == "cold":
        return initial_scores(game)
    return initial_scores(game, eq, float(config.init["margin"]))


def _stride(config: ExperimentConfig, default: int) -> int:
    s = config.outputs.get("stride")
    return int(s) if s else default


def _escaped(traj: Trajectory, threshold: float) -> bool:
    """Left ``U_M`` after having been inside it (checked at every step)."""
    if traj.sup_gap is None:
        raise ValueError("trajectory was not tracked against an equilibrium")
    started_inside = max(
        float(np.max(np.delete(y[0] - y[0][a], a))) if y.shape[1] > 1 else -math.inf
        for y, a in zip(traj.scores, traj.reference)
    ) <= -threshold
    return bool(started_inside and traj.sup_gap > -threshold)


def _fit(config: ExperimentConfig, traj: Trajectory, eq) -> RateFit | None:
    a = config.analysis
    try:
        return fit_rate(
            traj,
            eq,
            a["abscissa"],
            tuple(a["window"]) if a["window"] else None,
            a["power"],
        )
    except ValueError as exc:
        log.warning("rate fit failed for seed %s: %s", traj.seed, exc)
        return None


def _record(config: ExperimentConfig, traj: Trajectory, eq, threshold: float) -> RunRecord:
    d = float(distance_series(traj, eq)[-1])
    fit = _fit(config, traj, eq)
    return RunRecord(
        config_hash=config.config_hash(),
        seed=int(traj.seed),
        final_distance=d,
        converged=bool(d < float(config.analysis["tolerance"])),
        escaped=_escaped(traj, threshold),
        slope=fit.slope if fit else None,
        intercept=fit.intercept if fit else None,
        residual_rms=fit.residual_rms if fit else None,
        window_start=fit.fit_window[0] if fit else None,
        window_end=fit.fit_window[1] if fit else None,
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_rows(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def simulate(config: ExperimentConfig, seeds, stride: int, game: Game | None = None):
    game = game or config.build_game()
    eq = resolve_equilibrium(config, game)
    trajs = run_batch(
        game,
        _initial(config, game, eq),
        config.build_schedule(),
        config.build_feedback(),
        config.horizon,
        seeds,
        stride=stride,
        reference=eq,
    )
    return game, eq, trajs


def cmd_run(config: ExperimentConfig, seed: int, out_dir=None) -> RunRecord:
    """Single run: writes ``trajectory.csv`` (unless disabled) and ``summary.json``."""
    game, eq, (traj,) = simulate(config, [seed], _stride(config, 1))
    record = _record(config, traj, eq, config.basin_threshold())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if config.outputs.get("trajectory", True):
            write_trajectory_csv(traj, out / f"trajectory_seed{seed}.csv")
        summary = record.to_dict()
        summary.update(equilibrium=list(eq), record_hash=record.record_hash)
        _write_json(out / f"summary_seed{seed}.json", summary)
    return record


def cmd_montecarlo(
    config: ExperimentConfig, seeds=None, out_dir=None, batch_size: int = 256
) -> dict:
    """Independent noisy runs over a seed range, aggregated.

    The stay-in fraction counts runs whose off-equilibrium score gaps never
    rose above ``-M``; it is compared with ``1 - eps`` when the step-size
    schedule passes the admissibility test.
    """
    if config.feedback["kind"] != "noisy":
        raise ConfigError("montecarlo needs a noisy feedback configuration")
    seeds = list(config.seeds if seeds is None else seeds)
    if not seeds:
        raise ConfigError("seed range is empty")
    game = config.build_game()
    eq = resolve_equilibrium(config, game)
    M = config.basin_threshold()
    stride = _stride(config, max(1, config.horizon // 2000))
    records = []
    for k in range(0, len(seeds), batch_size):
        _, _, trajs = simulate(config, seeds[k:k + batch_size], stride, game)
        records += [_record(config, t, eq, M) for t in trajs]

    model = config.build_feedback()
    eps = float(config.analysis["confidence"])
    gamma2, threshold, admissible = step_size_admissible(
        config.build_schedule(), eps, M, game, model.sigma(game)
    )
    stay = np.array([not r.escaped for r in records])
    conv = np.array([r.converged for r in records])
    slopes = np.array([r.slope for r in records if not r.escaped and r.slope is not None])
    report = {
        "config_hash": config.config_hash(),
        "runs": len(records),
        "equilibrium": list(eq),
        "basin_threshold": M,
        "confidence": eps,
        "sigma": model.sigma(game),
        "gamma2": gamma2,
        "admissibility_threshold": threshold,
        "admissible": admissible,
        "stay_in_fraction": float(stay.mean()),
        "converged_fraction": float(conv.mean()),
        "stay_in_meets_confidence": bool(stay.mean() >= 1 - eps) if admissible else None,
        "slopes": _slope_summary(slopes),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "runs.csv", RUNS_HEADER, [r.to_dict() for r in records])
        _write_json(out / "montecarlo.json", report)
    report["records"] = records
    return report


def _slope_summary(slopes: np.ndarray) -> dict:
    if slopes.size == 0:
        return {"count": 0}
    return {
        "count": int(slopes.size),
        "mean": float(slopes.mean()),
        "std": float(slopes.std(ddof=1)) if slopes.size > 1 else 0.0,
        "min": float(slopes.min()),
        "median": float(np.median(slopes)),
        "max": float(slopes.max()),
    }


def _set_path(d: dict, path: str, value) -> None:
    keys = path.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def cmd_sweep(
    config: ExperimentConfig, parameter: str | None = None, values=None, out_dir=None
) -> list[dict]:
    """One run per grid value; compares the fitted slope with the predicted one.

    Constant steps are fitted against ``t`` (predicted ``-a gamma``);
    power-law steps against ``t**(1 - beta)`` (predicted ``-a gamma / (1 - beta)``).
    """
    if parameter is None and config.sweep:
        parameter = config.sweep.get("parameter")
        values = config.sweep.get("values") if values is None else values
    if not parameter or not values:
        raise ValueError("sweep needs a parameter and a non-empty grid of values")
    rows = []
    base = config.to_dict()
    for value in values:
        d = copy.deepcopy(base)
        _set_path(d, parameter, value)
        d["sweep"] = None
        cfg = ExperimentConfig.from_dict(d, base_dir=config.base_dir)
        game, eq, (traj,) = simulate(cfg, cfg.seeds[:1], _stride(cfg, 1))
        sched = cfg.build_schedule()
        a = strict_margin(game, eq)
        beta = sched.effective_beta
        if sched.kind == "constant":
            kind, power, theory = "t", None, -a * sched.gamma
        else:
            kind, power, theory = "t_power", 1 - beta, -a * sched.gamma / (1 - beta)
        window = tuple(cfg.analysis["window"]) if cfg.analysis["window"] else None
        fit = fit_rate(traj, eq, kind, window, power)
        rows.append(
            {
                "parameter": parameter,
                "value": value,
                "schedule": sched.kind,
                "gamma": sched.gamma,
                "beta": beta,
                "abscissa": kind if power is None else f"t^{power:g}",
                "fitted_slope": fit.slope,
                "theoretical_slope": theory,
                "ratio": fit.slope / theory,
                "final_distance": float(distance_series(traj, eq)[-1]),
            }
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "sweep.csv", SWEEP_HEADER, rows)
    return rows


RATEFIT_HEADER = [
    "seed", "slope", "intercept", "window_start", "window_end", "residual_rms",
    "abscissa", "power", "n_points", "truncated",
]
DIAGNOSTICS_HEADER = [
    "t", "l1", "kl", "kl_l1_slack", "fenchel_slack", "in_basin",
    "z_descent_slack", "telescoped_slack", "distance_bound_slack",
]


def noise_ledger_rows(ledger: NoiseLedger, s_star) -> tuple[list[str], list[list]]:
    header = ["t", "gamma2_partial"]
    for i, x in enumerate(ledger.sums):
        header += [f"X_{i}_{s}" for s in range(x.shape[1])]
    rows = []
    for k, t in enumerate(ledger.steps):
        row = [int(t), ledger.gamma2[k]]
        for x in ledger.sums:
            row += list(x[k])
        rows.append(row)
    return header, rows


def cmd_report(config: ExperimentConfig, seed: int, out_dir) -> dict:
    """Re-run one seed at full resolution and export the analysis tables:
    ``ratefit.csv``, ``noise_ledger.csv`` and ``diagnostics.csv``."""
    game, eq, (traj,) = simulate(config, [seed], 1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fit = _fit(config, traj, eq)
    row = {"seed": seed, **(fit.to_dict() if fit else {h: None for h in RATEFIT_HEADER})}
    _write_rows(out / "ratefit.csv", RATEFIT_HEADER, [row])

    ledger = noise_sums(traj, eq)
    header, rows = noise_ledger_rows(ledger, eq)
    with open(out / "noise_ledger.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])

    M = config.basin_threshold()
    diag = trajectory_diagnostics(traj, eq, threshold=M)
    drows = []
    for k, t in enumerate(diag["step"]):
        drows.append(
            {
                "t": int(t),
                "l1": float(diag["l1"][k]),
                "kl": float(diag["kl"][k]),
                "kl_l1_slack": float(diag["kl_l1_slack"][k]),
                "fenchel_slack": _maybe(diag["fenchel_slack"][k]),
                "in_basin": bool(diag["in_basin"][k]),
                "z_descent_slack": _maybe(diag["z_descent_slack"][k]),
                "telescoped_slack": _maybe(diag["telescoped_slack"][k]),
                "distance_bound_slack": _maybe(diag["distance_bound_slack"][k]),
            }
        )
    _write_rows(out / "diagnostics.csv", DIAGNOSTICS_HEADER, drows)
    sup = ledger.sup_abs()
    summary = {
        "seed": seed,
        "equilibrium": list(eq),
        "rate_fit": fit.to_dict() if fit else None,
        "basin_threshold": M,
        "basin_margin": diag["rate"],
        "min_kl_l1_slack": float(np.min(diag["kl_l1_slack"])),
        "min_fenchel_slack": float(np.nanmin(diag["fenchel_slack"])) if len(traj.steps) > 1 else None,
        "noise_sup_abs": [s.tolist() for s in sup],
    }
    _write_json(out / "report.json", summary)
    return summary


def _maybe(v):
    v = float(v)
    return None if math.isnan(v) else v
