"""
Stochastic hybrid systems
=========================
A GSHS (state-dependent jump rate λ) is turned into an SHS by carrying an
auxiliary budget q that drains at rate λ; the spontaneous reset fires when q
reaches zero and q is redrawn from exp(1) after every jump. The engine below
steps whole batches of states in lock-step with an Euler–Maruyama scheme.

Models are written over rows: every callable receives (n, w) modes and
(n, d) continuous states and answers for all n rows at once.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from core.streams import (DEFAULT_BLOCK_STEPS, Key, NoiseDriver, Purpose, StepNoise,
                          keyed_uniforms, unit_exponential)
from core.types import HybridState, Particle, Population

logger = logging.getLogger(__name__)

Array = np.ndarray
LevelPredicate = Callable[[Array, Array], Array]   # (mode, cont) -> bool mask


class ModelError(ValueError):
    """A model definition (or a state it produced) breaks the GSHS contract."""


class IntegrationDiverged(RuntimeError):
    """Non-finite continuous state after an integration step."""


@dataclass(frozen=True)
class Guard:
    """Forced transition: when `predicate` holds after a step, `reset` maps the row."""
    name: str
    predicate: Callable[[Array, Array, Array], Array]                  # (mode, cont, clock)
    reset: Callable[[Array, Array, Array, Array], tuple[Array, Array]]  # (+ uniforms)


@dataclass
class GshsModel:
    """A general stochastic hybrid system with a state-dependent jump rate."""
    mode_width: int
    dim: int
    brownian_dim: int
    drift: Callable[[Array, Array], Array]
    diffusion: Callable[[Array, Array], Array]       # (d, m) or (n, d, m)
    jump_rate: Callable[[Array, Array], Array]       # (n,) >= 0
    reset_sampler: Callable[[Array, Array, Array], tuple[Array, Array]]
    init_sampler: Callable[[Array], tuple[Array, Array]]
    guards: tuple = ()
    poisson_rates: tuple = ()
    poisson_jumps: Optional[Array] = None             # (d, c) jump size per channel
    mode_set: tuple = ()
    reset_draws: int = 0
    guard_draws: int = 0
    init_draws: int = 0
    domain: Optional[Callable[[Array, Array], Array]] = None
    name: str = "gshs"

    def dim_of(self, mode: Array) -> int:
        """Continuous dimension of a mode (shared by all modes of a model)."""
        return self.dim


@dataclass
class ShsModel:
    """The SHS obtained from a GSHS; q lives in HybridState.local_time_budget."""
    base: GshsModel
    metadata: dict = field(default_factory=dict)

    @property
    def reset_width(self) -> int:
        return self.base.reset_draws + 1

    @property
    def guard_width(self) -> int:
        return self.base.guard_draws + 1

    @property
    def poisson_channels(self) -> int:
        return len(self.base.poisson_rates)

    def extended_drift(self, mode: Array, cont: Array) -> Array:
        """Drift of (x, q): [f, -λ]."""
        f = self.base.drift(mode, cont)
        lam = self.base.jump_rate(mode, cont)
        return np.hstack([f, -np.asarray(lam, dtype=float)[:, None]])

    def extended_diffusion(self, mode: Array, cont: Array) -> Array:
        """Diffusion of (x, q): q gets a zero row."""
        g = np.asarray(self.base.diffusion(mode, cont), dtype=float)
        n = mode.shape[0]
        if g.ndim == 2:
            g = np.broadcast_to(g, (n,) + g.shape)
        return np.concatenate([g, np.zeros((n, 1, g.shape[2]))], axis=1)

    def noise_driver(self, seed: int, purpose: Purpose, keys: Sequence[Key],
                     block_steps: int = DEFAULT_BLOCK_STEPS) -> NoiseDriver:
        return NoiseDriver(seed, purpose, keys,
                           brownian_dim=self.base.brownian_dim,
                           poisson_channels=self.poisson_channels,
                           reset_width=self.reset_width,
                           guard_width=self.guard_width,
                           block_steps=block_steps)


def _sample_states(model: GshsModel, n: int) -> tuple[Array, Array]:
    # fixed sample points spread over [0, 1)
    grid = (np.arange(n)[:, None] + 0.5) / n
    u = np.broadcast_to(grid, (n, model.init_draws)).copy()
    return model.init_sampler(u)


def transform_gshs_to_shs(model: GshsModel, samples: int = 16) -> ShsModel:
    """Wrap a GSHS as an SHS after checking its rate on every declared mode.

    Raises:
        ModelError: inconsistent shapes, or a jump rate that is not a finite
            non-negative number at some sampled (mode, state).
    """
    if model.dim < 1 or model.mode_width < 1 or model.brownian_dim < 0:
        raise ModelError(f"{model.name}: bad dimensions dim={model.dim} "
                         f"mode_width={model.mode_width} m={model.brownian_dim}")
    channels = len(model.poisson_rates)
    if channels:
        if model.poisson_jumps is None or np.shape(model.poisson_jumps) != (model.dim, channels):
            raise ModelError(f"{model.name}: poisson_jumps must have shape ({model.dim}, {channels})")
        if any(r < 0 for r in model.poisson_rates):
            raise ModelError(f"{model.name}: Poisson rates must be >= 0")

    mode, cont = _sample_states(model, samples)
    if mode.shape != (samples, model.mode_width) or cont.shape != (samples, model.dim_of(mode)):
        raise ModelError(f"{model.name}: init_sampler returned shapes {mode.shape}, {cont.shape}")

    modes = [np.asarray(m, dtype=np.int64) for m in model.mode_set] or [None]
    for m in modes:
        rate_mode = mode if m is None else np.broadcast_to(m, mode.shape).copy()
        try:
            lam = np.asarray(model.jump_rate(rate_mode, cont), dtype=float)
        except Exception as e:
            raise ModelError(f"{model.name}: jump_rate fails on mode {m}: {e}") from e
        if lam.shape != (samples,) or not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ModelError(f"{model.name}: jump_rate not a finite rate >= 0 on mode {m}")

    logger.debug(f"{model.name}: GSHS → SHS, {len(model.mode_set)} declared modes")
    return ShsModel(base=model)


def _as_step_noise(noise: Union[StepNoise, NoiseDriver], rows: Optional[Array]) -> StepNoise:
    if isinstance(noise, NoiseDriver):
        return noise.draw(rows)
    return noise


def integrate_step(state: HybridState, model: ShsModel, dt: Union[float, Array],
                   noise: Union[StepNoise, NoiseDriver]) -> HybridState:
    """One Euler–Maruyama step of size dt (scalar or per row); no resets.

    q is drained by λ·dt and floored at zero; a zero budget marks a
    spontaneous jump at the step endpoint, and that endpoint is recorded in
    `budget_hit_time`.
    """
    base = model.base
    n = state.size
    noise = _as_step_noise(noise, None)
    h = np.broadcast_to(np.asarray(dt, dtype=float), (n,))
    if np.any(h < 0):
        raise ValueError("negative step size")

    mode, cont = state.mode, state.cont
    inc = np.asarray(base.drift(mode, cont), dtype=float) * h[:, None]

    if base.brownian_dim:
        dw = noise.normals * np.sqrt(h)[:, None]
        g = np.asarray(base.diffusion(mode, cont), dtype=float)
        if g.ndim == 2:
            inc = inc + dw @ g.T
        else:
            inc = inc + np.einsum("ndm,nm->nd", g, dw)

    if base.poisson_rates:
        rates = np.asarray(base.poisson_rates, dtype=float)
        fired = noise.poisson < rates[None, :] * h[:, None]
        inc = inc + fired.astype(float) @ np.asarray(base.poisson_jumps, dtype=float).T

    lam = np.asarray(base.jump_rate(mode, cont), dtype=float)
    q = np.maximum(state.local_time_budget - lam * h, 0.0)
    clock = state.clock + h
    new = HybridState(mode.copy(), cont + inc, q, clock,
                      np.where(q <= 0.0, clock, state.budget_hit_time))

    bad = ~np.all(np.isfinite(new.cont), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise IntegrationDiverged(
            f"{base.name}: non-finite state in {int(bad.sum())} row(s) at t={new.clock[i]:.6g}, "
            f"first row mode={mode[i].tolist()} before={cont[i].tolist()}")
    return new


def apply_jumps(state: HybridState, model: ShsModel, noise: StepNoise) -> tuple[HybridState, Array]:
    """Guard resets (declaration order), then spontaneous resets where q hit zero.

    Returns the new state and the mask of rows that jumped.
    """
    base = model.base
    mode, cont = state.mode.copy(), state.cont.copy()
    q = state.local_time_budget.copy()
    q_hit = q <= 0.0
    guarded = np.zeros(state.size, dtype=bool)

    for guard in base.guards:
        mask = np.asarray(guard.predicate(mode, cont, state.clock), dtype=bool)
        if not mask.any():
            continue
        idx = np.flatnonzero(mask)
        m2, c2 = guard.reset(mode[idx], cont[idx], state.clock[idx],
                             noise.guard[idx, :base.guard_draws])
        mode[idx], cont[idx] = m2, c2
        guarded[idx] = True

    if q_hit.any():
        idx = np.flatnonzero(q_hit)
        m2, c2 = base.reset_sampler(mode[idx], cont[idx], noise.reset[idx, :base.reset_draws])
        mode[idx], cont[idx] = m2, c2
        q[idx] = unit_exponential(noise.reset[idx, -1])

    only_guard = guarded & ~q_hit
    if only_guard.any():
        q[only_guard] = unit_exponential(noise.guard[only_guard, -1])

    jumped = guarded | q_hit
    if jumped.any():
        if cont.shape[1] != base.dim_of(mode) or mode.shape[1] != base.mode_width:
            raise ModelError(f"{base.name}: reset changed the state layout")
        if base.domain is not None:
            outside = jumped & ~np.asarray(base.domain(mode, cont), dtype=bool)
            if outside.any():
                i = int(np.flatnonzero(outside)[0])
                raise ModelError(f"{base.name}: no mode domain contains row mode={mode[i].tolist()}")
    return HybridState(mode, cont, q, state.clock.copy(), state.budget_hit_time.copy()), jumped


def initial_population(model: ShsModel, keys: Sequence[Key], seed: int,
                       purpose: Purpose = Purpose.INIT) -> Population:
    """Draw Init and q0 ~ exp(1) for every key from its own stream."""
    base = model.base
    u = keyed_uniforms(seed, purpose, keys, base.init_draws + 1)
    mode, cont = base.init_sampler(u[:, :base.init_draws])
    n = len(keys)
    state = HybridState(mode, cont, unit_exponential(u[:, -1]), np.zeros(n))
    return Population(state, np.zeros(n), np.zeros(n, dtype=bool), np.full(n, 1.0 / n), keys)


def execute_until(particles: Union[Population, Particle], model: ShsModel,
                  target: LevelPredicate, horizon: float,
                  noise: NoiseDriver, *, dt: float) -> Union[Population, Particle]:
    """Advance each particle until it enters `target` or the clock reaches `horizon`.

    A particle is always stepped at least once, and the target is checked on
    post-reset states. Hitting particles come back alive with entry_time set
    to the hitting time; the others come back dead at the horizon.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    single = isinstance(particles, Particle)
    pop = Population.from_particles([particles]) if single else particles.copy()
    if noise.size != pop.size:
        raise ValueError(f"noise driver has {noise.size} rows for {pop.size} particles")

    st = pop.state
    alive = np.zeros(pop.size, dtype=bool)
    entry = np.full(pop.size, float(horizon))
    pending = st.clock < horizon
    st.clock[~pending] = horizon
    while pending.any():
        rows = np.flatnonzero(pending)
        step_noise = noise.draw(rows)
        sub = st.take(rows)
        remaining = horizon - sub.clock
        h = np.where(remaining <= dt * (1.0 + 1e-9), remaining, dt)
        sub = integrate_step(sub, model, h, step_noise)
        sub, _ = apply_jumps(sub, model, step_noise)
        at_end = horizon - sub.clock <= dt * 1e-9
        sub.clock[at_end] = horizon

        hit = np.asarray(target(sub.mode, sub.cont), dtype=bool)
        st.mode[rows], st.cont[rows] = sub.mode, sub.cont
        st.local_time_budget[rows], st.clock[rows] = sub.local_time_budget, sub.clock
        st.budget_hit_time[rows] = sub.budget_hit_time
        alive[rows[hit]] = True
        entry[rows[hit]] = sub.clock[hit]
        pending[rows[hit | at_end]] = False

    pop.alive = alive
    pop.entry_time = entry
    logger.debug(f"{model.base.name}: {int(alive.sum())}/{pop.size} reached target "
                 f"in {noise.steps_drawn} steps")
    return pop.particle(0) if single else pop
