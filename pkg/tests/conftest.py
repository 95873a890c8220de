from dataclasses import replace

import pytest

from wdmrc import config


def small_config(train=600, subsets=2, test=400, seeds=(0,), warmup=300, **channels):
    cfg = config.RunConfig()
    data = replace(cfg.data, train_symbols=train, test_subsets=subsets, test_symbols=test,
                   seeds=tuple(seeds))
    cfg = replace(cfg, data=data, readout=replace(cfg.readout, warmup_symbols=warmup))
    return cfg


@pytest.fixture
def tiny_cfg():
    return small_config()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
