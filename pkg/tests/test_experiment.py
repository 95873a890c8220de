from dataclasses import replace

import numpy as np
import pytest

from wdmrc import experiment
from wdmrc.errors import IntegrationDiverged

from conftest import small_config


def test_dataset_lengths_cover_warmup_train_and_tests():
    cfg = small_config(train=500, subsets=3, test=100, warmup=200)
    ds = experiment.generate_datasets(cfg, 0)
    assert [len(d) for d in ds] == [1000] * 3


def test_run_seed_reports_every_task():
    cfg = small_config()
    res = experiment.run_seed(cfg, 0, keep_states=True)
    assert set(res.reports) == set(cfg.task_ids)
    for task, rep in res.reports.items():
        assert len(rep.values) == cfg.data.test_subsets
        assert np.isfinite(rep.mean)
    assert res.states[0].rows == 600 + 2 * 400


def test_run_seed_is_deterministic():
    cfg = small_config()
    a = experiment.run_seed(cfg, 3)
    b = experiment.run_seed(cfg, 3)
    for t in cfg.task_ids:
        assert a.reports[t].values == b.reports[t].values


def test_parallel_matches_serial():
    cfg = small_config(seeds=(0, 1))
    serial = experiment.run_experiment(cfg, threads=1)
    parallel = experiment.run_experiment(cfg, threads=2)
    for s, p in zip(serial, parallel):
        assert s.seed == p.seed
        for t in cfg.task_ids:
            assert s.reports[t].values == p.reports[t].values


def test_aggregate_over_seeds():
    cfg = small_config(seeds=(0, 1))
    results = experiment.run_experiment(cfg)
    agg = experiment.aggregate(results, "narma10")
    assert agg.values == [r.reports["narma10"].mean for r in results]
    assert agg.mean == pytest.approx(np.mean(agg.values))


def test_divergence_propagates():
    cfg = small_config()
    chans = tuple(replace(c, power_dbm=25.0, detuning_ghz=-100.0) for c in cfg.channels)
    cfg = replace(cfg, channels=chans)
    with pytest.raises(IntegrationDiverged):
        experiment.run_seed(cfg, 0)


def test_default_threads_from_environment(monkeypatch):
    monkeypatch.setenv(experiment.THREADS_ENV, "3")
    assert experiment.default_threads() == 3
    monkeypatch.delenv(experiment.THREADS_ENV)
    cores = experiment.default_threads()
    assert cores >= 1
    monkeypatch.setenv(experiment.THREADS_ENV, "bogus")
    assert experiment.default_threads() == cores
