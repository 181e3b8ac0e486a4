"""
Shared fixtures for raresim tests.
"""
from dataclasses import replace

import pytest

from raresim.config import RareSimConfig


@pytest.fixture
def cfg() -> RareSimConfig:
    """Default configuration (published case-study parameters)."""
    return RareSimConfig().validate()


@pytest.fixture
def tiny_cfg(cfg) -> RareSimConfig:
    """Small budgets for harness plumbing tests."""
    est = replace(cfg.estimator, trials=2, particles=5, mc_runs=20, mc_batch=10, horizon=0.5)
    sweep = replace(cfg.sweep, awareness_ratios=(1.5825, 1.7375))
    return replace(cfg, estimator=est, sweep=sweep).validate()


@pytest.fixture
def scenario(cfg):
    from raresim.scenario import LaneChangeScenario
    return LaneChangeScenario.from_config(cfg)

