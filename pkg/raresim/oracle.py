"""
Oracle suite: estimators against toy systems with exact answers.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from raresim.splitting import LevelSchedule, estimate_trials, monte_carlo_hits
from raresim.toy_models import (always, barrier_level, barrier_probability, brownian_model,
                                gamblers_ruin, ladder_chain, markov_chain_model,
                                reach_probability, state_level)

logger = logging.getLogger(__name__)

CHAIN_HORIZON = 40
BARRIER_LEVELS = (0.5, 1.0, 1.5, 2.0, 2.5)


@dataclass
class OracleCase:
    name: str
    method: str
    exact: float
    estimate: float
    stderr: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _ips_case(name: str, model, schedule: LevelSchedule, exact: float, *, seed: int,
              trials: int, particles: int, dt: float, rel_tol: float = 0.0,
              abs_tol: Optional[float] = None, se_tol: Optional[float] = None) -> OracleCase:
    results = estimate_trials(model, schedule, particles, seed, range(trials), dt=dt)
    values = np.array([r.gamma for r in results])
    mean = float(np.sum(values)) / values.size
    stderr = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    if se_tol is not None:
        tol = se_tol * stderr
    else:
        tol = abs_tol if abs_tol is not None else rel_tol * exact
    return OracleCase(name, "ips", exact, mean, stderr, tol, abs(mean - exact) <= tol)


def _mc_case(name: str, model, terminal, horizon: float, exact: float, *, seed: int,
             runs: int, dt: float) -> OracleCase:
    hits = monte_carlo_hits(model, terminal, horizon, runs, seed, dt=dt)
    p = hits / runs
    stderr = math.sqrt(max(exact * (1.0 - exact), 1e-12) / runs)
    return OracleCase(name, "mc", exact, p, stderr, 3.0 * stderr, abs(p - exact) <= 3.0 * stderr)


def barrier_splitting_case(seed: int, *, trials: int = 100, particles: int = 100,
                           dt: float = 1e-3, levels=BARRIER_LEVELS) -> OracleCase:
    """IPS-FAS on Brownian motion with nested barriers; passes within 3 standard errors."""
    schedule = LevelSchedule(tuple(barrier_level(a) for a in levels), 1.0)
    exact = barrier_probability(levels[-1], 1.0, dt=dt)
    return _ips_case("brownian_barrier", brownian_model(), schedule, exact, seed=seed,
                     trials=trials, particles=particles, dt=dt, se_tol=3.0)


def toy_oracle_suite(seed: int, *, trials: int = 100, particles: int = 200,
                     mc_runs: int = 10_000, barrier_dt: float = 1e-3) -> list[OracleCase]:
    """Run every toy instance; each case reports its own pass flag."""
    cases = []

    for spec in (ladder_chain((0.2, 0.2, 0.2)), ladder_chain((0.1, 0.3, 0.1)),
                 gamblers_ruin(5, 0.2, 1)):
        model = markov_chain_model(spec)
        schedule = LevelSchedule(tuple(state_level(s) for s in spec.levels), CHAIN_HORIZON)
        exact = reach_probability(spec.transition, spec.start, spec.targets, CHAIN_HORIZON)
        cases.append(_ips_case(spec.name, model, schedule, exact, seed=seed, trials=trials,
                               particles=particles, dt=1.0, rel_tol=0.10))

    ladder = markov_chain_model(ladder_chain())
    cases.append(_ips_case("certain", ladder, LevelSchedule((always,), CHAIN_HORIZON), 1.0,
                           seed=seed, trials=trials, particles=particles, dt=1.0,
                           rel_tol=0.0, abs_tol=0.0))
    cases.append(_ips_case("impossible", ladder, LevelSchedule((always,), 0.0), 0.0,
                           seed=seed, trials=trials, particles=particles, dt=1.0,
                           rel_tol=0.0, abs_tol=0.0))

    coin = gamblers_ruin(5, 0.5, 2)
    cases.append(_mc_case("fair_coin", markov_chain_model(coin), state_level(coin.targets),
                          CHAIN_HORIZON * 10,
                          reach_probability(coin.transition, coin.start, coin.targets,
                                            CHAIN_HORIZON * 10),
                          seed=seed, runs=mc_runs, dt=1.0))

    cases.append(_mc_case("brownian_barrier", brownian_model(), barrier_level(2.0), 1.0,
                          barrier_probability(2.0, 1.0, dt=barrier_dt), seed=seed, runs=mc_runs,
                          dt=barrier_dt))
    cases.append(barrier_splitting_case(seed, trials=trials, particles=particles, dt=barrier_dt))

    for case in cases:
        level = logging.INFO if case.passed else logging.WARNING
        logger.log(level, f"oracle {case.name} [{case.method}]: exact={case.exact:.6g} "
                          f"estimate={case.estimate:.6g} ±{case.stderr:.2g} "
                          f"{'PASS' if case.passed else 'FAIL'}")
    return cases
