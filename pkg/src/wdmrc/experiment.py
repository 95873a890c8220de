"""One complete multi-task experiment: data, reservoir, readout, metrics."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mrr, reservoir, tasks
from .config import RunConfig
from .training import MetricReport, ReadoutWeights, evaluate_task

THREADS_ENV = "WDMRC_THREADS"


def default_threads() -> int:
    """Worker count from ``$WDMRC_THREADS``, else the number of usable cores."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def total_symbols(cfg: RunConfig) -> int:
    return cfg.readout.warmup_symbols + cfg.data.symbols_after_warmup()


def generate_datasets(cfg: RunConfig, seed: int) -> list[tasks.TaskDataset]:
    """Datasets of every configured channel, trimmed to the run length."""
    total = total_symbols(cfg)
    padded = -(-total // tasks.PERIOD) * tasks.PERIOD
    out = []
    for task_id in cfg.task_ids:
        ds = tasks.generate(task_id, padded, seed, cfg.data.snr_db)
        out.append(tasks.TaskDataset(
            ds.task_id, ds.u[:total], ds.drive[:total], ds.target[:total], ds.valid[:total],
            ds.seed, None if ds.symbols is None else ds.symbols[:total]))
    return out


def build_streams(cfg: RunConfig, datasets, channels) -> list[reservoir.MaskedStream]:
    streams = []
    for spec, ds, ch in zip(cfg.channels, datasets, channels):
        mask = reservoir.build_mask(spec.task, cfg.readout.virtual_nodes, spec.mask_seed)
        streams.append(reservoir.mask_and_upsample(ds.drive, mask, cfg.readout, ch))
    return streams


def score_task(cfg: RunConfig, X: np.ndarray, ds: tasks.TaskDataset) -> tuple[MetricReport, ReadoutWeights]:
    """Train on the first block after warmup and score each test subset.

    ``X`` holds the post-warmup rows only. Symbols whose target is affected
    by zero padding are left out of both training and testing.
    """
    warm = cfg.readout.warmup_symbols
    y = ds.target[warm:]
    valid = ds.valid[warm:]
    ntr = cfg.data.train_symbols
    nte = cfg.data.test_symbols
    tr = slice(0, ntr)
    X_tests, y_tests = [], []
    for s in range(cfg.data.test_subsets):
        sl = slice(ntr + s * nte, ntr + (s + 1) * nte)
        X_tests.append(X[sl][valid[sl]])
        y_tests.append(y[sl][valid[sl]])
    return evaluate_task(X[tr][valid[tr]], y[tr][valid[tr]], X_tests, y_tests,
                         cfg.readout.regularization, ds.metric_kind, ds.task_id)


@dataclass
class SeedResult:
    seed: int
    reports: dict[str, MetricReport]
    weights: dict[str, ReadoutWeights] = field(default_factory=dict)
    states: list[reservoir.StateMatrix] | None = None


def run_seed(cfg: RunConfig, seed: int, initial_state: mrr.ReservoirState | None = None,
             keep_states: bool = False) -> SeedResult:
    """Simulate all channels for one data seed and evaluate every task.

    Raises IntegrationDiverged if the ring state blows up.
    """
    channels = cfg.channel_configs()
    datasets = generate_datasets(cfg, seed)
    streams = build_streams(cfg, datasets, channels)
    mats = reservoir.run_reservoir(streams, cfg.physical, channels, cfg.readout, cfg.flags,
                                   initial_state, task_ids=cfg.task_ids)
    reports, weights = {}, {}
    for mat, ds in zip(mats, datasets):
        reports[ds.task_id], weights[ds.task_id] = score_task(cfg, mat.values, ds)
    return SeedResult(int(seed), reports, weights, mats if keep_states else None)


def aggregate(results: list[SeedResult], task_id: str) -> MetricReport:
    """Mean and spread of the per-seed mean metrics."""
    kind = tasks.METRIC_KIND[task_id]
    return MetricReport.from_values(kind, [r.reports[task_id].mean for r in results])


def _seed_job(args):
    cfg, seed = args
    return run_seed(cfg, seed)


def run_experiment(cfg: RunConfig, seeds=None, threads: int = 1) -> list[SeedResult]:
    """Run every seed, in parallel when ``threads`` > 1; results follow seed order."""
    seeds = list(cfg.data.seeds if seeds is None else seeds)
    if threads <= 1 or len(seeds) == 1:
        return [run_seed(cfg, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
        return list(pool.map(_seed_job, [(cfg, s) for s in seeds]))
