"""
Toy systems with known answers.

Discrete-time Markov chains are embedded as degenerate SHSs: the mode is the
chain state, a unit timer drifts at rate 1 and a guard at timer = 1 draws
the next state. With dt = 1 every integration step is one chain transition.
"""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from raresim.shs import Guard, GshsModel, ShsModel, transform_gshs_to_shs


# ─── Markov chains ───

@dataclass(frozen=True)
class ChainSpec:
    name: str
    transition: np.ndarray
    start: int
    levels: tuple          # one tuple of chain states per level
    targets: tuple = field(default=())

    def __post_init__(self):
        if not self.targets:
            object.__setattr__(self, "targets", tuple(self.levels[-1]))


def _check_stochastic(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got {p.shape}")
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0):
        raise ValueError("transition rows must be probability vectors")
    return p


def markov_chain_model(spec: ChainSpec) -> ShsModel:
    p = _check_stochastic(spec.transition)
    cdf = np.cumsum(p, axis=1)
    n_states = p.shape[0]

    def tick(mode, cont, clock):
        return cont[:, 0] >= 1.0 - 1e-9

    def jump(mode, cont, clock, u):
        nxt = np.sum(u[:, [0]] >= cdf[mode[:, 0]], axis=1)
        return np.minimum(nxt, n_states - 1)[:, None].astype(np.int64), np.zeros_like(cont)

    model = GshsModel(
        mode_width=1, dim=1, brownian_dim=0,
        drift=lambda mode, cont: np.ones_like(cont),
        diffusion=lambda mode, cont: np.zeros((1, 0)),
        jump_rate=lambda mode, cont: np.zeros(mode.shape[0]),
        reset_sampler=lambda mode, cont, u: (mode, cont),
        init_sampler=lambda u: (np.full((u.shape[0], 1), spec.start, dtype=np.int64),
                                np.zeros((u.shape[0], 1))),
        guards=(Guard("tick", tick, jump),),
        guard_draws=1,
        mode_set=tuple((s,) for s in range(n_states)),
        name=spec.name,
    )
    return transform_gshs_to_shs(model)


def state_level(states: Sequence[int]):
    """Predicate: the chain is in one of `states`."""
    allowed = np.asarray(sorted(states), dtype=np.int64)

    def predicate(mode, cont):
        return np.isin(mode[:, 0], allowed)

    return predicate


def reach_probability(transition: np.ndarray, start: int, targets: Sequence[int],
                      steps: int) -> float:
    """P(chain visits `targets` within `steps` transitions), by matrix powers."""
    p = _check_stochastic(transition).copy()
    t = list(targets)
    p[t] = 0.0
    p[t, t] = 1.0
    dist = np.zeros(p.shape[0])
    dist[start] = 1.0
    dist = dist @ np.linalg.matrix_power(p, steps)
    return float(dist[t].sum())


def absorption_probability(transition: np.ndarray, start: int, targets: Sequence[int]) -> float:
    """P(chain ever reaches `targets`), solving (I − Q) h = R·1 on transient states."""
    p = _check_stochastic(transition)
    n = p.shape[0]
    absorbing = {i for i in range(n) if p[i, i] == 1.0} | set(targets)
    if start in targets:
        return 1.0
    transient = [i for i in range(n) if i not in absorbing]
    q = p[np.ix_(transient, transient)]
    r = p[np.ix_(transient, list(targets))].sum(axis=1)
    h = np.linalg.solve(np.eye(len(transient)) - q, r)
    return float(h[transient.index(start)])


def ladder_chain(probs: Sequence[float] = (0.2, 0.2, 0.2)) -> ChainSpec:
    """Climb one rung with probability p_k or fall into an absorbing failure state."""
    m = len(probs)
    fail = m + 1
    p = np.zeros((m + 2, m + 2))
    for j, pk in enumerate(probs):
        p[j, j + 1] = pk
        p[j, fail] = 1.0 - pk
    p[m, m] = p[fail, fail] = 1.0
    levels = tuple(tuple(range(k, m + 1)) for k in range(1, m + 1))
    return ChainSpec(name=f"ladder{tuple(probs)}", transition=p, start=0, levels=levels)


def gamblers_ruin(n_states: int = 5, up: float = 0.2, start: int = 1) -> ChainSpec:
    """Random walk on 0..n−1 absorbed at both ends; the top state is the target."""
    top = n_states - 1
    p = np.zeros((n_states, n_states))
    p[0, 0] = p[top, top] = 1.0
    for i in range(1, top):
        p[i, i + 1] = up
        p[i, i - 1] = 1.0 - up
    levels = tuple(tuple(range(k, n_states)) for k in range(start + 1, n_states))
    return ChainSpec(name=f"ruin(n={n_states},p={up})", transition=p, start=start, levels=levels)


# ─── diffusions and clocks ───

def brownian_model(sigma: float = 1.0, x0: float = 0.0) -> ShsModel:
    """Single-mode scalar Brownian motion."""
    model = GshsModel(
        mode_width=1, dim=1, brownian_dim=1,
        drift=lambda mode, cont: np.zeros_like(cont),
        diffusion=lambda mode, cont: np.array([[sigma]]),
        jump_rate=lambda mode, cont: np.zeros(mode.shape[0]),
        reset_sampler=lambda mode, cont, u: (mode, cont),
        init_sampler=lambda u: (np.zeros((u.shape[0], 1), dtype=np.int64),
                                np.full((u.shape[0], 1), x0)),
        name=f"brownian(sigma={sigma})",
    )
    return transform_gshs_to_shs(model)


def barrier_level(a: float):
    def predicate(mode, cont):
        return cont[:, 0] >= a
    return predicate


BARRIER_SHIFT = 0.5826  # -ζ(1/2)/√(2π)


def barrier_probability(a: float, horizon: float, sigma: float = 1.0, dt: float = 0.0) -> float:
    """Reflection principle: P(max_{s≤T} σW_s ≥ a) = 2(1 − Φ(a / σ√T)).

    With dt > 0 the barrier is shifted by BARRIER_SHIFT·σ·√dt, which matches
    a walk that is only monitored every dt up to O(dt).
    """
    if horizon <= 0:
        return 0.0
    a_eff = a + BARRIER_SHIFT * sigma * np.sqrt(dt) if dt > 0 else a
    return float(2.0 * norm.sf(a_eff / (sigma * np.sqrt(horizon))))


def constant_rate_model(rate: float) -> ShsModel:
    """Jump counter with constant rate; cont holds elapsed time since the last jump."""
    model = GshsModel(
        mode_width=1, dim=1, brownian_dim=0,
        drift=lambda mode, cont: np.ones_like(cont),
        diffusion=lambda mode, cont: np.zeros((1, 0)),
        jump_rate=lambda mode, cont: np.full(mode.shape[0], float(rate)),
        reset_sampler=lambda mode, cont, u: (mode + 1, np.zeros_like(cont)),
        init_sampler=lambda u: (np.zeros((u.shape[0], 1), dtype=np.int64),
                                np.zeros((u.shape[0], 1))),
        mode_set=((0,),),
        name=f"clock(rate={rate})",
    )
    return transform_gshs_to_shs(model)


def always(mode, cont):
    return np.ones(mode.shape[0], dtype=bool)


def never(mode, cont):
    return np.zeros(mode.shape[0], dtype=bool)
