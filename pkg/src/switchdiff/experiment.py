"""Seeded ensemble experiments: config parsing, runs, CSV/JSON output."""

from __future__ import annotations

import csv
import json
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import graph_core, metric_graph, propagator, semi_markov, spectral

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrajectoryResult",
    "parse_config",
    "load_config",
    "shipped_config",
    "build_ensemble",
    "sample_times",
    "run_trajectory",
    "run_experiment",
    "write_outputs",
    "thread_count",
]


class ConfigError(ValueError):
    """Config does not describe a valid experiment; carries one message per field."""

    def __init__(self, messages):
        self.messages = list(messages) if not isinstance(messages, str) else [messages]
        super().__init__("; ".join(self.messages))


@dataclass
class ExperimentConfig:
    ensemble: dict
    switching: semi_markov.SemiMarkovSpec
    horizon: float
    times: np.ndarray
    seed: int = 0
    n_trajectories: int = 1
    threshold: float = 1e-6
    theta_tolerance: float = 0.05
    rate_window: tuple[float, float] | None = None
    reference_state: int | None = None
    tol: float = spectral.DEFAULT_TOL
    h_target: float | None = None
    out_dir: str | None = None
    name: str = ""
    raw: dict = field(default_factory=dict, repr=False)


def sample_times(spec, horizon: float) -> np.ndarray:
    """Explicit list, or ``{"grid": "log"|"linear", "start", "num"}`` ending at the horizon."""
    if spec is None:
        spec = {"grid": "log"}
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    grid = spec.get("grid", "log")
    num = int(spec.get("num", 200))
    if grid == "log":
        start = float(spec.get("start", min(1e-2, horizon / 100)))
        return np.concatenate(([0.0], np.geomspace(start, horizon, num - 1)))
    if grid == "linear":
        return np.linspace(float(spec.get("start", 0.0)), horizon, num)
    raise ConfigError(f"times.grid: unknown grid {grid!r}")


def parse_config(obj, base_dir=None) -> ExperimentConfig:
    errors = []
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("ensemble", "switching", "horizon"):
        if key not in obj:
            errors.append(f"{key}: missing")
    if errors:
        raise ConfigError(errors)
    try:
        switching = semi_markov.spec_from_json(obj["switching"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"switching: {exc}") from exc
    horizon = obj["horizon"]
    if not isinstance(horizon, (int, float)) or not horizon > 0:
        errors.append("horizon: must be a positive number")
        horizon = 1.0
    try:
        times = sample_times(obj.get("times"), float(horizon))
    except (ValueError, TypeError) as exc:
        errors.append(f"times: {exc}")
        times = np.array([0.0])
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        errors.append("times: must be non-negative and non-decreasing")
    if times.size and times[-1] > horizon:
        errors.append("times: largest sample time exceeds the horizon")
    n_traj = obj.get("n_trajectories", 1)
    if not isinstance(n_traj, int) or n_traj < 1:
        errors.append("n_trajectories: must be an integer >= 1")
    ens = obj["ensemble"]
    if not isinstance(ens, dict) or ens.get("kind") not in ("graphs", "metric", "interval"):
        errors.append("ensemble.kind: must be one of 'graphs', 'metric', 'interval'")
    else:
        count = len(ens.get("graphs", ens.get("operators", [])))
        if count != switching.n_states:
            errors.append(f"ensemble: {count} operators but the switching spec has {switching.n_states} states")
    window = obj.get("rate_window")
    if window is not None and (len(window) != 2 or window[0] >= window[1]):
        errors.append("rate_window: must be [start, end] with start < end")
    if errors:
        raise ConfigError(errors)
    tol = obj.get("tolerance", {})
    return ExperimentConfig(
        ensemble=ens,
        switching=switching,
        horizon=float(horizon),
        times=times,
        seed=int(obj.get("seed", 0)),
        n_trajectories=n_traj,
        threshold=float(obj.get("threshold", 1e-6)),
        theta_tolerance=float(tol.get("theta", 0.05)) if isinstance(tol, dict) else 0.05,
        rate_window=tuple(window) if window is not None else None,
        reference_state=obj.get("reference_state"),
        tol=float(tol.get("kernel", spectral.DEFAULT_TOL)) if isinstance(tol, dict) else float(tol),
        h_target=ens.get("h_target") if isinstance(ens, dict) else None,
        out_dir=obj.get("out_dir"),
        name=obj.get("name", ""),
        raw=obj,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(obj, path.parent)


def shipped_config(name: str) -> ExperimentConfig:
    """One of the configs bundled in ``switchdiff/configs`` (name without ``.json``)."""
    text = resources.files("switchdiff").joinpath("configs", f"{name}.json").read_text()
    return parse_config(json.loads(text))


def build_ensemble(cfg: ExperimentConfig, h_target: float | None = None) -> propagator.Ensemble:
    ens = cfg.ensemble
    kind = ens["kind"]
    try:
        if kind == "graphs":
            graphs = [graph_core.graph_from_json(g) for g in ens["graphs"]]
            ops = [graph_core.laplacian(g) for g in graphs]
        elif kind == "metric":
            parsed = [metric_graph.metric_graph_from_json(g) for g in ens["graphs"]]
            h = h_target or cfg.h_target or 0.05
            counts = metric_graph.mesh_counts(parsed[0][0], h)
            ops = []
            for mg, p in parsed:
                coef = None
                if p is not None:
                    coef = metric_graph.EllipticCoefficient.from_function(
                        mg, counts, lambda e, x, p=p: np.interp(x, np.linspace(0, mg.lengths[e], len(p[e])), p[e])
                    )
                ops.append(metric_graph.discretize(mg, coef, counts).operator)
        else:
            n = int(ens.get("n", 200))
            ops = [metric_graph.interval_operator(k, n, ens.get("p")) for k in ens["operators"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"ensemble: {exc}") from exc
    return propagator.Ensemble(ops, tol=cfg.tol)


@dataclass
class TrajectoryResult:
    index: int
    trajectory: semi_markov.Trajectory
    series: propagator.DeviationSeries
    rate: float | None
    theta: np.ndarray
    gronwall_margin: float | None


def run_trajectory(ens, cfg: ExperimentConfig, index: int, reference: int | None) -> TrajectoryResult:
    traj = semi_markov.sample_trajectory(cfg.switching, cfg.horizon, cfg.seed, index)
    series = propagator.deviation_series(ens, traj, cfg.times)
    window = cfg.rate_window or (cfg.horizon / 8, cfg.horizon)
    try:
        rate = propagator.estimate_rate(series, window)
    except ValueError:
        rate = None
    theta = semi_markov.empirical_occupation(traj, cfg.horizon, cfg.switching.n_states)
    margin = None
    if reference is not None:
        rng = semi_markov.make_rng(cfg.seed, 10_000_000 + index)
        f = rng.standard_normal(ens.dim)
        margin = propagator.gronwall_bound_check(ens, traj, f, cfg.times, reference).margin
    return TrajectoryResult(index, traj, series, rate, theta, margin)


def thread_count() -> int:
    env = os.environ.get("SWITCHDIFF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def _summary(cfg, ens, rates, results) -> dict:
    finals = [float(r.series.deviation[-1]) for r in results]
    emp = [r.rate for r in results if r.rate is not None]
    theta_formula = rates.occupation
    theta_emp = np.mean([r.theta for r in results], axis=0)
    l1 = [float(np.abs(r.theta - theta_formula).sum()) for r in results]
    l1_mean = float(np.abs(theta_emp - theta_formula).sum())
    margins = [r.gronwall_margin for r in results if r.gronwall_margin is not None]
    out = {
        "name": cfg.name,
        "dim": ens.dim,
        "kernel_rank": ens.P_K.rank,
        "seeds": {"master": cfg.seed, "trajectories": [r.index for r in results]},
        "alpha_theoretical": {
            "averaged": rates.averaged,
            "conservative": rates.conservative,
            "reference_state": rates.reference_state,
            "note": rates.note,
            "per_state": rates.table(),
        },
        "alpha_empirical": {
            "median": statistics.median(emp) if emp else None,
            "min": min(emp) if emp else None,
            "max": max(emp) if emp else None,
            "per_trajectory": [r.rate for r in results],
        },
        "final_deviation": {
            "median": statistics.median(finals),
            "worst": max(finals),
            "per_trajectory": finals,
            "threshold": cfg.threshold,
            "all_below_threshold": all(d <= cfg.threshold for d in finals),
        },
        "theta": {
            "formula": theta_formula.tolist(),
            "empirical_mean": theta_emp.tolist(),
            "l1_max": max(l1),
            "l1_of_mean": l1_mean,
            "tolerance": cfg.theta_tolerance,
            "within_tolerance": l1_mean <= cfg.theta_tolerance,
        },
    }
    if margins:
        out["gronwall"] = {"min_margin": min(margins), "holds": min(margins) >= -1e-9}
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int | None = None, h_target=None):
    """Run every trajectory; returns ``(summary, results)`` and writes files if ``out_dir`` is set."""
    rep = semi_markov.validate_spec(cfg.switching)
    if not rep.ok:
        raise ConfigError([f"switching: {v}" for v in rep.violations])
    ens = build_ensemble(cfg, h_target)
    if len(ens) != cfg.switching.n_states:
        raise ConfigError("ensemble size does not match the number of switching states")
    rates = propagator.theoretical_rate(ens, cfg.switching, cfg.reference_state)
    reference = rates.reference_state if cfg.reference_state is not None else None
    workers = threads or thread_count()
    indices = range(cfg.n_trajectories)
    if workers > 1 and cfg.n_trajectories > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: run_trajectory(ens, cfg, i, reference), indices))
    else:
        results = [run_trajectory(ens, cfg, i, reference) for i in indices]
    summary = _summary(cfg, ens, rates, results)
    if rep.warnings:
        summary["warnings"] = rep.warnings
    target = out_dir or cfg.out_dir
    if target is not None:
        write_outputs(target, summary, results)
    return summary, results


def write_outputs(out_dir, summary, results) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        with open(out / f"series_{r.index:04d}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(r.series.csv_rows())
        with open(out / f"trajectory_{r.index:04d}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(r.trajectory.to_csv_rows())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
