"""
Keyed random streams
====================
Every particle owns a counter-based Philox stream keyed by
(seed, purpose, particle key). A particle's draws therefore never depend on
which batch it is simulated in, how many workers run, or in which order.

Canonical source for: every random generator constructed in the project.
Other modules ask for a stream here; they never build their own.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Key = tuple[int, ...]

DEFAULT_BLOCK_STEPS = 64


class Purpose(IntEnum):
    """Namespaces keep streams with equal keys but different jobs apart."""
    INIT = 1
    MUTATION = 2
    SPLIT = 3
    BUDGET = 4
    MC_INIT = 5
    MONTE_CARLO = 6


def stream_for(seed: int, purpose: Purpose, key: Sequence[int]) -> np.random.Generator:
    """Philox generator for one (seed, purpose, key) triple."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence(entropy=[int(seed), int(purpose)],
                                 spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def unit_exponential(u: np.ndarray) -> np.ndarray:
    """Map uniforms on [0, 1) to exp(1) samples by inversion."""
    return -np.log1p(-np.asarray(u, dtype=float))


def keyed_uniforms(seed: int, purpose: Purpose, keys: Sequence[Key], width: int) -> np.ndarray:
    """One row of `width` uniforms per key, each from its own stream."""
    out = np.empty((len(keys), width))
    if width == 0:
        return out
    for i, key in enumerate(keys):
        out[i] = stream_for(seed, purpose, key).random(width)
    return out


@dataclass
class StepNoise:
    """Random inputs for one integration step of a batch of rows."""
    normals: np.ndarray   # (n, m) standard normals, scaled by sqrt(h) in the integrator
    poisson: np.ndarray   # (n, c) uniforms, channel j fires when u < rate_j * h
    reset: np.ndarray     # (n, r) uniforms for spontaneous resets (last column redraws q)
    guard: np.ndarray     # (n, g) uniforms for guard resets (last column redraws q)


class NoiseDriver:
    """Per-particle Brownian and Poisson driver for lock-step batches.

    Row i's j-th draw always comes from row i's stream at step j, whatever
    subset of rows is requested. Draws are buffered `block_steps` at a time.
    """

    def __init__(self, seed: int, purpose: Purpose, keys: Sequence[Key], *,
                 brownian_dim: int, poisson_channels: int,
                 reset_width: int, guard_width: int,
                 block_steps: int = DEFAULT_BLOCK_STEPS):
        if block_steps < 1:
            raise ValueError(f"block_steps must be >= 1, got {block_steps}")
        self.seed = seed
        self.purpose = purpose
        self.keys = [tuple(k) for k in keys]
        self.brownian_dim = brownian_dim
        self.poisson_channels = poisson_channels
        self.reset_width = reset_width
        self.guard_width = guard_width
        self.block_steps = block_steps

        n = len(self.keys)
        self._uniform_width = poisson_channels + reset_width + guard_width
        self._gens: list[Optional[np.random.Generator]] = [None] * n
        self._block_of = np.full(n, -1, dtype=np.int64)
        self._normals = np.zeros((n, block_steps, brownian_dim))
        self._uniforms = np.zeros((n, block_steps, self._uniform_width))
        self._cursor = 0

    @property
    def size(self) -> int:
        return len(self.keys)

    @property
    def steps_drawn(self) -> int:
        return self._cursor

    def _fill(self, row: int, block: int) -> None:
        gen = self._gens[row]
        if gen is None:
            gen = stream_for(self.seed, self.purpose, self.keys[row])
            self._gens[row] = gen
        shape_n = (self.block_steps, self.brownian_dim)
        shape_u = (self.block_steps, self._uniform_width)
        # skipped blocks are drawn and discarded so the stream position stays aligned
        while self._block_of[row] < block:
            normals = gen.standard_normal(shape_n)
            uniforms = gen.random(shape_u)
            self._block_of[row] += 1
        self._normals[row] = normals
        self._uniforms[row] = uniforms

    def draw(self, rows: Optional[np.ndarray] = None) -> StepNoise:
        """Noise for the next step of `rows` (all rows when None)."""
        rows = np.arange(self.size) if rows is None else np.asarray(rows, dtype=np.int64)
        block, offset = divmod(self._cursor, self.block_steps)
        for row in rows[self._block_of[rows] != block]:
            self._fill(int(row), block)
        self._cursor += 1

        u = self._uniforms[rows, offset]
        c, r = self.poisson_channels, self.reset_width
        return StepNoise(
            normals=self._normals[rows, offset],
            poisson=u[:, :c],
            reset=u[:, c:c + r],
            guard=u[:, c + r:],
        )
