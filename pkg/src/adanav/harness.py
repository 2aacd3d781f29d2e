"""Experiment orchestration: config loading, multi-seed runs and CSV artifacts.

Every artifact is a plain CSV whose bytes depend only on the config and the
seeds. Summaries are always derived from the per-episode curves, so
``report`` can rebuild them from a results directory alone.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .learn import EpisodeRecord, NumericalError, TrainConfig, train
from .mdp import GridError, build_gridworld_kernel, resolve_grid
from .scheduler import ScheduleError, ada_exponential
from .spectral import SpectralError, correlation_study, spearman

log = logging.getLogger(__name__)

KINDS = ("correlate", "train", "alpha_sweep")
NEVER = "never"
CURVE_COLUMNS = (
    "seed", "episode", "t_c", "entropy_nats", "episode_return", "cumulative_samples", "goal_reached",
)
CORRELATION_COLUMNS = ("kernel", "beta", "entropy_nats", "spectral_gap", "mixing_lower_bound")
RUN_COLUMNS = (
    "label", "seed", "status", "failure_episode", "final_smoothed_return",
    "total_samples", "samples_to_threshold", "final_t_c",
)
SUMMARY_COLUMNS = (
    "label", "schedule", "alpha", "n_runs", "n_failed", "final_return_median", "final_return_q1",
    "final_return_q3", "final_return_iqr", "final_return_mean", "total_samples",
    "samples_to_threshold_median", "final_t_c_median",
)


class ConfigError(ValueError):
    """Bad or unsafe experiment configuration (CLI exit code 1)."""


def fmt(x) -> str:
    """Stable text form for CSV cells: 12 significant digits, ``inf`` for infinity."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def write_csv(path: Path, columns: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class RunSpec:
    label: str
    overrides: dict = field(default_factory=dict)
    alpha: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    out: Path
    seeds: tuple = (0, 1, 2, 3, 4)
    base: dict = field(default_factory=dict)
    runs: tuple = ()
    grids: tuple = ("empty25", "four_walls25")
    n_policies: int = 100
    alphas: tuple = ()
    t_i: int = 16
    t_cap: int = 2100
    threshold: float = 0.9
    window: int = 100
    force: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "correlate":
            if len(self.seeds) == 0:
                raise ConfigError("seed list must be non-empty")
            if len(set(self.seeds)) != len(self.seeds):
                raise ConfigError(f"seed list has duplicates: {list(self.seeds)}")
        if self.kind == "train" and not self.runs:
            raise ConfigError("train experiments need at least one entry under 'runs'")
        if self.kind == "alpha_sweep":
            if not self.alphas:
                raise ConfigError("alpha grid must be non-empty")
            if any(a < 0 for a in self.alphas):
                raise ConfigError(f"alphas must be nonnegative, got {list(self.alphas)}")
        if self.kind == "correlate" and self.n_policies < 2:
            raise ConfigError("n_policies must be at least 2")
        if self.window < 1:
            raise ConfigError("window must be positive")

    def train_configs(self) -> list[tuple[RunSpec, TrainConfig]]:
        """Expand the run list (or the alpha grid) against the base config, one entry per seed."""
        if self.kind == "alpha_sweep":
            runs = [
                RunSpec(f"alpha={fmt(a)}", {"schedule": ada_exponential(self.t_i, a, self.t_cap).to_dict()}, a)
                for a in self.alphas
            ]
        else:
            runs = list(self.runs)
        labels = [r.label for r in runs]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"run labels must be unique, got {labels}")
        out = []
        for run in runs:
            data = {**self.base, **run.overrides}
            try:
                cfg = TrainConfig.from_dict(data)
                resolve_grid(cfg.grid)
            except (ValueError, TypeError, GridError, ScheduleError) as exc:
                raise ConfigError(f"run {run.label!r}: {exc}") from exc
            out.extend((run, cfg.with_seed(seed)) for seed in self.seeds)
        return out


def _parse_runs(raw) -> tuple:
    runs = []
    for i, item in enumerate(raw or ()):
        if not isinstance(item, dict) or "label" not in item:
            raise ConfigError(f"runs[{i}] must be an object with a 'label'")
        item = dict(item)
        runs.append(RunSpec(str(item.pop("label")), item))
    return tuple(runs)


def load_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a JSON experiment file, then apply CLI overrides on top."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {
        "kind", "out", "seeds", "base", "runs", "grids", "n_policies", "alphas",
        "t_i", "t_cap", "threshold", "window", "force",
    }
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "kind" not in data:
        raise ConfigError("config needs a 'kind'")
    kw = dict(data)
    kw["out"] = Path(kw.get("out", "results"))
    for key in ("seeds", "grids", "alphas"):
        if key in kw:
            kw[key] = tuple(kw[key])
    kw["runs"] = _parse_runs(kw.get("runs"))
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("ADANAV_WORKERS", "1")))
    except ValueError as exc:
        raise ConfigError("ADANAV_WORKERS must be an integer") from exc


def _prepare(out: Path, names: Sequence[str], force: bool) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / n for n in names]
    clash = [p.name for p in paths if p.exists()]
    if clash and not force:
        raise ConfigError(f"refusing to overwrite {len(clash)} file(s) in {out} (first: {clash[0]}); pass --force")
    return paths


# ---------------------------------------------------------------- correlation


def run_correlation(config: ExperimentConfig) -> Path:
    (path,) = _prepare(config.out, ["correlation.csv"], config.force)
    try:
        kernels = {name: build_gridworld_kernel(resolve_grid(name)) for name in config.grids}
    except GridError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        records = correlation_study(kernels, config.n_policies, workers=_workers())
        write_csv(
            path,
            CORRELATION_COLUMNS,
            ((r.kernel_name, r.beta, r.entropy, r.gap, r.mixing_lower_bound) for r in records),
        )
    except BaseException:
        path.unlink(missing_ok=True)
        raise
    return path


def correlation_summary(path: Path) -> dict[str, dict]:
    rows = read_csv(path)
    out = {}
    for name in dict.fromkeys(r["kernel"] for r in rows):
        sub = [r for r in rows if r["kernel"] == name]
        H = [float(r["entropy_nats"]) for r in sub]
        gap = [float(r["spectral_gap"]) for r in sub]
        out[name] = {"spearman": spearman(H, gap), "gap_beta0": gap[0], "gap_beta1": gap[-1], "n": len(sub)}
    return out


# ---------------------------------------------------------------- training


def curve_name(label: str, seed: int) -> str:
    safe = "".join(c if c.isalnum() or c in "-_.=" else "_" for c in label)
    return f"learning_curve_{safe}_seed{seed}.csv"


def _train_job(args):
    label, cfg, path = args
    records: list[EpisodeRecord] = []
    failure = None
    try:
        train(cfg, on_episode=records.append)
    except NumericalError as exc:
        failure = (exc.episode, str(exc))
    rows = (
        (cfg.seed, r.episode, r.t_c, r.entropy, r.episode_return, r.cumulative_samples, r.goal_reached)
        for r in records
    )
    write_csv(Path(path), CURVE_COLUMNS, rows)
    return label, cfg.seed, failure


def smoothed(returns, window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` entries average what exists so far."""
    r = np.asarray(returns, dtype=float)
    c = np.cumsum(r)
    out = np.empty_like(r)
    head = min(window, len(r))
    out[:head] = c[:head] / np.arange(1, head + 1)
    out[head:] = (c[head:] - c[:-head]) / window if len(r) > window else out[head:]
    return out


def curve_metrics(rows: list[dict], threshold: float, window: int) -> dict:
    """Final smoothed return, total samples and samples-to-threshold of one learning curve.

    The threshold only counts once a full window of episodes exists.
    """
    if not rows:
        return {"final": math.nan, "total": 0, "sth": math.inf, "final_t_c": 0}
    returns = [float(r["episode_return"]) for r in rows]
    cum = [int(r["cumulative_samples"]) for r in rows]
    ma = smoothed(returns, window)
    hit = [i for i in range(min(window, len(ma)) - 1, len(ma)) if ma[i] >= threshold]
    return {
        "final": float(ma[-1]),
        "total": cum[-1],
        "sth": float(cum[hit[0]]) if hit else math.inf,
        "final_t_c": int(rows[-1]["t_c"]),
    }


def _median(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.median(v)) if len(v) else math.nan


def _sth_cell(x: float):
    return NEVER if math.isinf(x) else int(x)


def summarize(out: Path, runs: list[dict], threshold: float, window: int) -> tuple[list, list]:
    """Rebuild per-run rows and per-label summary rows from the curve CSVs in ``out``.

    ``runs`` carries label, seed, schedule text, alpha and failure info for
    each job; all numeric aggregates are recomputed from disk.
    """
    per_run, by_label = [], {}
    for r in runs:
        rows = read_csv(out / curve_name(r["label"], r["seed"]))
        m = curve_metrics(rows, threshold, window)
        status = "ok" if r["failure_episode"] in (None, "") else "aborted"
        per_run.append((
            r["label"], r["seed"], status, "" if status == "ok" else str(r["failure_episode"]),
            m["final"], m["total"], _sth_cell(m["sth"]), m["final_t_c"],
        ))
        by_label.setdefault(r["label"], {"meta": r, "m": [], "failed": 0, "total": 0})
        entry = by_label[r["label"]]
        entry["total"] += m["total"]
        if status == "ok":
            entry["m"].append(m)
        else:
            entry["failed"] += 1

    summary = []
    for label, entry in by_label.items():
        finals = [m["final"] for m in entry["m"]]
        q1, q3 = (np.percentile(finals, [25, 75]) if finals else (math.nan, math.nan))
        sth_med = _median([m["sth"] for m in entry["m"]])
        summary.append((
            label, entry["meta"]["schedule"], entry["meta"].get("alpha", ""),
            len(entry["m"]) + entry["failed"], entry["failed"],
            _median(finals), float(q1), float(q3), float(q3 - q1),
            float(np.mean(finals)) if finals else math.nan, entry["total"],
            NEVER if math.isinf(sth_med) else sth_med,
            _median([m["final_t_c"] for m in entry["m"]]),
        ))
    return per_run, summary


def _write_summaries(out: Path, runs: list[dict], threshold: float, window: int) -> list:
    per_run, summary = summarize(out, runs, threshold, window)
    write_csv(out / "runs.csv", RUN_COLUMNS, per_run)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    return summary


def _manifest(config: ExperimentConfig, jobs) -> dict:
    return {
        "kind": config.kind,
        "threshold": config.threshold,
        "window": config.window,
        "runs": [
            {"label": run.label, "seed": cfg.seed, "schedule": cfg.schedule.describe(),
             "alpha": run.alpha, "config": cfg.to_dict()}
            for run, cfg in jobs
        ],
    }


def run_training_suite(config: ExperimentConfig) -> list:
    """Run every (label, seed) job, write curves plus ``runs.csv`` and ``summary.csv``.

    An aborted run keeps its partial curve and is reported with the episode
    that failed; it never stops the other jobs.
    """
    jobs = config.train_configs()
    names = [curve_name(run.label, cfg.seed) for run, cfg in jobs]
    paths = _prepare(config.out, names + ["runs.csv", "summary.csv", "manifest.json"], config.force)
    args = [(run.label, cfg, str(p)) for (run, cfg), p in zip(jobs, paths)]
    workers = _workers()
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_job, args))
    else:
        results = [_train_job(a) for a in args]

    manifest = _manifest(config, jobs)
    for entry, (_, _, failure) in zip(manifest["runs"], results):
        entry["failure_episode"] = None if failure is None else failure[0]
        entry["failure"] = None if failure is None else failure[1]
        if failure is not None:
            log.error("run %s seed %s aborted: %s", entry["label"], entry["seed"], failure[1])
    (config.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return _write_summaries(config.out, manifest["runs"], config.threshold, config.window)


def run_alpha_sweep(config: ExperimentConfig) -> list:
    if config.kind != "alpha_sweep":
        raise ConfigError("run_alpha_sweep needs an alpha_sweep config")
    summary = run_training_suite(config)
    return sorted(summary, key=lambda row: row[2])


def report(directory, figures: bool = True) -> dict:
    """Recompute summaries from the CSVs in ``directory`` and render figures next to them."""
    out = Path(directory)
    if not out.is_dir():
        raise ConfigError(f"no such results directory: {out}")
    result: dict = {"figures": []}
    corr = out / "correlation.csv"
    if corr.exists():
        result["correlation"] = correlation_summary(corr)
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        result["summary"] = _write_summaries(out, manifest["runs"], manifest["threshold"], manifest["window"])
    if "correlation" not in result and "summary" not in result:
        raise ConfigError(f"{out} holds neither correlation.csv nor manifest.json")
    if figures:
        from . import plotting

        if corr.exists():
            result["figures"].append(plotting.correlation_figure(corr, out / "correlation.png"))
        if manifest_path.exists():
            result["figures"].append(
                plotting.learning_curves_figure(out, manifest, out / "learning_curves.png")
            )
            result["figures"].append(plotting.samples_figure(out / "summary.csv", out / "samples.png"))
    return result


def run(config: ExperimentConfig):
    if config.kind == "correlate":
        return run_correlation(config)
    if config.kind == "alpha_sweep":
        return run_alpha_sweep(config)
    return run_training_suite(config)


__all__ = [
    "ConfigError", "ExperimentConfig", "RunSpec", "NumericalError", "SpectralError", "config_from_dict",
    "correlation_summary", "curve_metrics", "curve_name", "load_config", "report", "run",
    "run_alpha_sweep", "run_correlation", "run_training_suite", "smoothed", "summarize",
]
