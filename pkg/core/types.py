"""
Core record types shared by the simulator, the estimators and the harness.

States are stored row-wise: a HybridState with n rows is n hybrid states,
and a single state is a one-row batch.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

Key = tuple[int, ...]


@dataclass
class HybridState:
    """Discrete mode, continuous state, remaining jump budget q and clock."""
    mode: np.ndarray               # (n, w) int64
    cont: np.ndarray               # (n, d) float64
    local_time_budget: np.ndarray  # (n,) q >= 0
    clock: np.ndarray              # (n,) absolute time
    budget_hit_time: Optional[np.ndarray] = None  # (n,) clock when q last hit 0, NaN if never

    def __post_init__(self):
        self.mode = np.atleast_2d(np.asarray(self.mode, dtype=np.int64))
        self.cont = np.atleast_2d(np.asarray(self.cont, dtype=float))
        self.local_time_budget = np.atleast_1d(np.asarray(self.local_time_budget, dtype=float))
        self.clock = np.atleast_1d(np.asarray(self.clock, dtype=float))
        n = self.mode.shape[0]
        if self.budget_hit_time is None:
            self.budget_hit_time = np.full(n, np.nan)
        self.budget_hit_time = np.atleast_1d(np.asarray(self.budget_hit_time, dtype=float))
        if not (self.cont.shape[0] == self.local_time_budget.shape[0] == self.clock.shape[0]
                == self.budget_hit_time.shape[0] == n):
            raise ValueError(
                f"row count mismatch: mode={n} cont={self.cont.shape[0]} "
                f"q={self.local_time_budget.shape[0]} clock={self.clock.shape[0]} "
                f"budget_hit_time={self.budget_hit_time.shape[0]}")

    @property
    def size(self) -> int:
        return self.mode.shape[0]

    def take(self, rows: np.ndarray) -> "HybridState":
        rows = np.asarray(rows, dtype=np.int64)
        return HybridState(self.mode[rows].copy(), self.cont[rows].copy(),
                           self.local_time_budget[rows].copy(), self.clock[rows].copy(),
                           self.budget_hit_time[rows].copy())

    def copy(self) -> "HybridState":
        return self.take(np.arange(self.size))

    @classmethod
    def stack(cls, states: Sequence["HybridState"]) -> "HybridState":
        return cls(np.concatenate([s.mode for s in states]),
                   np.concatenate([s.cont for s in states]),
                   np.concatenate([s.local_time_budget for s in states]),
                   np.concatenate([s.clock for s in states]),
                   np.concatenate([s.budget_hit_time for s in states]))


@dataclass
class Particle:
    """One trajectory of the splitting estimator."""
    entry_time: float
    state: HybridState  # one row
    alive: bool
    weight: float = 1.0
    key: Key = ()


@dataclass
class Population:
    """A batch of particles stepped in lock-step."""
    state: HybridState
    entry_time: np.ndarray  # (n,)
    alive: np.ndarray       # (n,) bool
    weight: np.ndarray      # (n,)
    keys: list = field(default_factory=list)

    def __post_init__(self):
        self.entry_time = np.asarray(self.entry_time, dtype=float)
        self.alive = np.asarray(self.alive, dtype=bool)
        self.weight = np.asarray(self.weight, dtype=float)
        self.keys = [tuple(k) for k in self.keys]
        if len(self.keys) != self.state.size:
            raise ValueError(f"{len(self.keys)} keys for {self.state.size} particles")

    @property
    def size(self) -> int:
        return self.state.size

    def take(self, rows: np.ndarray, keys: Optional[Sequence[Key]] = None) -> "Population":
        rows = np.asarray(rows, dtype=np.int64)
        new_keys = [self.keys[r] for r in rows] if keys is None else list(keys)
        return Population(self.state.take(rows), self.entry_time[rows].copy(),
                          self.alive[rows].copy(), self.weight[rows].copy(), new_keys)

    def copy(self) -> "Population":
        return self.take(np.arange(self.size))

    def particle(self, i: int) -> Particle:
        return Particle(entry_time=float(self.entry_time[i]), state=self.state.take([i]),
                        alive=bool(self.alive[i]), weight=float(self.weight[i]),
                        key=self.keys[i])

    def particles(self) -> list[Particle]:
        return [self.particle(i) for i in range(self.size)]

    @classmethod
    def from_particles(cls, particles: Sequence[Particle]) -> "Population":
        if not particles:
            raise ValueError("cannot build a population from zero particles")
        return cls(HybridState.stack([p.state for p in particles]),
                   [p.entry_time for p in particles], [p.alive for p in particles],
                   [p.weight for p in particles], [p.key for p in particles])


@dataclass
class EstimationResult:
    """Outcome of one splitting trial."""
    per_level_gamma: list[float]
    survivors: list[int]
    gamma: float
    seed: int
    particle_count: int
    trial: int = 0
    metadata: dict = field(default_factory=dict)
