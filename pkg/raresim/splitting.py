"""
Interacting-particle splitting with fixed assignment sampling (IPS-FAS),
plus the crude Monte Carlo baseline.

Trials are independent; `estimate_trials` runs many of them in one batch.
Because every particle draws from its own keyed stream, a batched trial is
bit-identical to the same trial run alone.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.streams import DEFAULT_BLOCK_STEPS, Purpose, keyed_uniforms, stream_for, unit_exponential
from core.types import EstimationResult, Particle
from raresim.shs import LevelPredicate, ShsModel, execute_until, initial_population

logger = logging.getLogger(__name__)


@dataclass
class LevelSchedule:
    """Nested target sets D_1 ⊃ … ⊃ D_m (the last one is the rare event) and a horizon."""
    predicates: tuple
    horizon: float
    names: tuple = ()

    def __post_init__(self):
        self.predicates = tuple(self.predicates)
        if not self.predicates:
            raise ValueError("a level schedule needs at least one level")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")

    def __len__(self) -> int:
        return len(self.predicates)

    def verify_nesting(self, mode: np.ndarray, cont: np.ndarray) -> None:
        """Raise if some sampled state is in D_k but not in D_{k-1}."""
        outer = np.asarray(self.predicates[0](mode, cont), dtype=bool)
        for k, pred in enumerate(self.predicates[1:], start=2):
            inner = np.asarray(pred(mode, cont), dtype=bool)
            bad = inner & ~outer
            if bad.any():
                raise ValueError(f"level {k} is not nested in level {k - 1} "
                                 f"({int(bad.sum())} sampled states)")
            outer = inner

    def initial_hits(self, model: ShsModel, seed: int, samples: int) -> int:
        """How many of `samples` initial states already lie in D_1 (should be 0)."""
        pop = initial_population(model, [(i,) for i in range(samples)], seed, Purpose.MC_INIT)
        return int(np.sum(self.predicates[0](pop.state.mode, pop.state.cont)))


# ─── 分裂 (fixed assignment) ───

def fixed_assignment_indices(n_survivors: int, n_particles: int,
                             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Survivor index and copy number for each of the n_particles new slots.

    The survivors are permuted; every survivor gets ⌊N_P/N_S⌋ copies laid out
    as slot i, N_S+i, 2N_S+i, …; the first N_P mod N_S survivors of the
    permutation get one more copy at the tail.
    """
    if n_survivors < 1:
        raise ValueError("splitting needs at least one survivor")
    if n_particles < 1:
        raise ValueError(f"n_particles must be >= 1, got {n_particles}")
    perm = rng.permutation(n_survivors)
    q, rem = divmod(n_particles, n_survivors)
    source = np.concatenate([np.tile(perm, q), perm[:rem]])
    copy_index = np.concatenate([np.repeat(np.arange(q), n_survivors),
                                 np.full(rem, q, dtype=np.int64)])
    return source.astype(np.int64), copy_index.astype(np.int64)


def fixed_assignment_split(survivors: Sequence[Particle], n_particles: int,
                           rng: np.random.Generator) -> list[Particle]:
    """Resample survivors back to n_particles equally weighted copies."""
    source, copy_index = fixed_assignment_indices(len(survivors), n_particles, rng)
    out = []
    for s, c in zip(source, copy_index):
        parent = survivors[int(s)]
        out.append(Particle(entry_time=parent.entry_time, state=parent.state.copy(),
                            alive=parent.alive, weight=1.0 / n_particles,
                            key=tuple(parent.key) + (int(c),)))
    return out


# ─── 估计 ───

def estimate_trials(model: ShsModel, schedule: LevelSchedule, n_particles: int, seed: int,
                    trials: Sequence[int], *, dt: float, budget_policy: str = "redraw",
                    block_steps: int = DEFAULT_BLOCK_STEPS) -> list[EstimationResult]:
    """Run independent IPS-FAS trials (one result per trial index)."""
    if n_particles < 1:
        raise ValueError(f"n_particles must be >= 1, got {n_particles}")
    if budget_policy not in ("carry", "redraw"):
        raise ValueError(f"unknown budget policy {budget_policy!r}")
    trials = [int(t) for t in trials]
    if not trials:
        return []
    if len(set(trials)) != len(trials):
        raise ValueError("trial indices must be distinct")

    m = len(schedule)
    gammas: list[list[float]] = [[] for _ in trials]
    counts: list[list[int]] = [[] for _ in trials]
    keys = [(t, i) for t in trials for i in range(n_particles)]
    pop = initial_population(model, keys, seed)
    group = np.repeat(np.arange(len(trials)), n_particles)

    for k in range(1, m + 1):
        level_keys = [key + (k,) for key in pop.keys]
        if budget_policy == "redraw":
            u = keyed_uniforms(seed, Purpose.BUDGET, level_keys, 1)
            pop.state.local_time_budget = unit_exponential(u[:, 0])
        noise = model.noise_driver(seed, Purpose.MUTATION, level_keys, block_steps)
        pop = execute_until(pop, model, schedule.predicates[k - 1], schedule.horizon,
                            noise, dt=dt)

        next_rows: list[int] = []
        next_keys: list[tuple] = []
        next_group: list[int] = []
        for g in np.unique(group):
            rows = np.flatnonzero(group == g)
            surv = rows[pop.alive[rows]]
            gammas[g].append(surv.size / n_particles)
            counts[g].append(int(surv.size))
            if surv.size == 0:
                logger.info(f"trial {trials[g]}: no survivors at level {k}/{m}, estimate is 0")
                continue
            if k == m:
                continue
            rng = stream_for(seed, Purpose.SPLIT, (trials[g], k))
            source, copy_index = fixed_assignment_indices(int(surv.size), n_particles, rng)
            for s, c in zip(surv[source], copy_index):
                next_rows.append(int(s))
                next_keys.append(pop.keys[s] + (int(c),))
            next_group.extend([int(g)] * n_particles)

        logger.debug(f"level {k}/{m}: survivors per trial {[c[-1] for c in counts if len(c) == k]}")
        if k == m or not next_rows:
            break
        pop = pop.take(np.asarray(next_rows), keys=next_keys)
        pop.weight[:] = 1.0 / n_particles
        group = np.asarray(next_group)

    results = []
    for g, trial in enumerate(trials):
        per_level = gammas[g] + [0.0] * (m - len(gammas[g]))
        survivors = counts[g] + [0] * (m - len(counts[g]))
        results.append(EstimationResult(per_level_gamma=per_level, survivors=survivors,
                                        gamma=math.prod(per_level), seed=seed,
                                        particle_count=n_particles, trial=trial))
    return results


def estimate_reach_probability(model: ShsModel, schedule: LevelSchedule, n_particles: int,
                               seed: int, *, dt: float, trial: int = 0,
                               budget_policy: str = "redraw",
                               block_steps: int = DEFAULT_BLOCK_STEPS) -> EstimationResult:
    """One IPS-FAS trial: γ̄ = ∏ γ̄_k with γ̄_k = N_S/N_P."""
    return estimate_trials(model, schedule, n_particles, seed, [trial], dt=dt,
                           budget_policy=budget_policy, block_steps=block_steps)[0]


# ─── Monte Carlo baseline ───

def monte_carlo_hits(model: ShsModel, terminal: LevelPredicate, horizon: float, n_runs: int,
                     seed: int, *, dt: float, batch_size: int = 10_000,
                     block_steps: int = DEFAULT_BLOCK_STEPS) -> int:
    """Number of independent runs that enter `terminal` before `horizon`."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    hits = 0
    for start in range(0, n_runs, batch_size):
        keys = [(r,) for r in range(start, min(start + batch_size, n_runs))]
        pop = initial_population(model, keys, seed, Purpose.MC_INIT)
        noise = model.noise_driver(seed, Purpose.MONTE_CARLO, keys, block_steps)
        pop = execute_until(pop, model, terminal, horizon, noise, dt=dt)
        hits += int(pop.alive.sum())
        logger.debug(f"MC runs {start}..{start + len(keys) - 1}: {hits} hits so far")
    return hits


def monte_carlo_estimate(model: ShsModel, terminal: LevelPredicate, horizon: float,
                         n_runs: int, seed: int, *, dt: float, batch_size: int = 10_000,
                         block_steps: int = DEFAULT_BLOCK_STEPS) -> float:
    """Fraction of runs that enter `terminal` before `horizon`."""
    hits = monte_carlo_hits(model, terminal, horizon, n_runs, seed, dt=dt,
                            batch_size=batch_size, block_steps=block_steps)
    return hits / n_runs
