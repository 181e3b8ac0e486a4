"""
Lane-change scenario with situational awareness
===============================================
Two automated vehicles start two lanes apart and both decide to move into
the lane between them. ER (on the right, lane 0) gains awareness of EL when
their enlarged safety ellipses touch, reacts after a Rayleigh-distributed
delay, checks its TTC against EL and aborts the manoeuvre when the TTC is
below threshold. The rare event is the two vehicles' safety ellipses
intersecting (the Hit mode).

Row layout (both matrices carry one particle per row):
  mode: ER phase, ER intent, EL phase, EL intent, est phase, est intent,
        aware, ER lane, EL lane, ER pending, EL pending
  cont: ER (x, y, heading, v_lat, yaw_rate), SA estimate of EL
        (x, y, heading, v_lat), awareness timer η, EL (5)
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional

import numpy as np

from raresim.config import RareSimConfig
from raresim.shs import Guard, GshsModel, ModelError, ShsModel, transform_gshs_to_shs
from raresim.splitting import LevelSchedule
from raresim.ttc import MotionSample, TtcOutcome, TtcPolicy, evaluate_pair
from raresim.vehicle import (PdGains, VehicleParams, VehicleState, pd_steering,
                             vehicle_drift, vehicle_jump_vector, world_motion)

logger = logging.getLogger(__name__)


class ModeMachineError(ModelError):
    """A (phase, intent) pair outside the vehicle's mode set was produced."""


class Phase(IntEnum):
    REVERTING = -1
    STRAIGHT = 0
    CHANGING = 1
    AWARE = 2
    HIT = 3


class Intent(IntEnum):
    OFF = 0
    RIGHT = 1
    LEFT = 2


@dataclass(frozen=True)
class DrivingMode:
    phase: Phase
    intent: Intent

    @property
    def is_hit(self) -> bool:
        return self.phase is Phase.HIT


STRAIGHT = DrivingMode(Phase.STRAIGHT, Intent.OFF)
ER_CHANGING = DrivingMode(Phase.CHANGING, Intent.LEFT)
ER_AWARE = DrivingMode(Phase.AWARE, Intent.LEFT)
ER_REVERTING = DrivingMode(Phase.REVERTING, Intent.RIGHT)
EL_CHANGING = DrivingMode(Phase.CHANGING, Intent.RIGHT)

ER_MODES = frozenset({(STRAIGHT.phase, STRAIGHT.intent), (Phase.CHANGING, Intent.LEFT),
                      (Phase.AWARE, Intent.LEFT), (Phase.REVERTING, Intent.RIGHT)})
EL_MODES = frozenset({(STRAIGHT.phase, STRAIGHT.intent), (Phase.CHANGING, Intent.RIGHT)})

# mode columns
ER_PHASE, ER_INTENT, EL_PHASE, EL_INTENT, EST_PHASE, EST_INTENT = range(6)
AWARE, ER_LANE, EL_LANE, ER_PENDING, EL_PENDING = range(6, 11)
MODE_WIDTH = 11
# cont columns
ER = slice(0, 5)
SA = slice(5, 9)
ETA = 9
EL = slice(10, 15)
DIM = 15

ORIGIN_LANE, SHARED_LANE = 0, 1


@dataclass(frozen=True)
class SaVector:
    """ER's picture of EL: estimated pose, awareness timer and EL's believed mode."""
    x: float
    y: float
    heading: float
    v_lat: float
    timer: float
    est_mode: DrivingMode
    est_identity: int = 1


@dataclass(frozen=True)
class ScenarioState:
    er: VehicleState
    el: VehicleState
    sa: SaVector
    er_mode: DrivingMode
    el_mode: DrivingMode
    aware: bool = False
    er_lane: int = ORIGIN_LANE
    el_lane: int = ORIGIN_LANE
    er_pending: bool = True
    el_pending: bool = True
    clock: float = 0.0

    def to_rows(self) -> tuple[np.ndarray, np.ndarray]:
        mode = np.array([[self.er_mode.phase, self.er_mode.intent, self.el_mode.phase,
                          self.el_mode.intent, self.sa.est_mode.phase, self.sa.est_mode.intent,
                          int(self.aware), self.er_lane, self.el_lane, int(self.er_pending),
                          int(self.el_pending)]], dtype=np.int64)
        cont = np.concatenate([self.er.to_array(),
                               [self.sa.x, self.sa.y, self.sa.heading, self.sa.v_lat,
                                self.sa.timer],
                               self.el.to_array()])[None, :]
        return mode, cont

    @classmethod
    def from_rows(cls, mode: np.ndarray, cont: np.ndarray, clock: float = 0.0) -> "ScenarioState":
        m, c = np.asarray(mode).reshape(-1), np.asarray(cont, dtype=float).reshape(-1)
        est = DrivingMode(Phase(int(m[EST_PHASE])), Intent(int(m[EST_INTENT])))
        sa = SaVector(*(float(v) for v in c[SA]), timer=float(c[ETA]), est_mode=est)
        return cls(er=VehicleState(*(float(v) for v in c[ER])),
                   el=VehicleState(*(float(v) for v in c[EL])), sa=sa,
                   er_mode=DrivingMode(Phase(int(m[ER_PHASE])), Intent(int(m[ER_INTENT]))),
                   el_mode=DrivingMode(Phase(int(m[EL_PHASE])), Intent(int(m[EL_INTENT]))),
                   aware=bool(m[AWARE]), er_lane=int(m[ER_LANE]), el_lane=int(m[EL_LANE]),
                   er_pending=bool(m[ER_PENDING]), el_pending=bool(m[EL_PENDING]),
                   clock=float(clock))


# ─── 椭圆 ───

@dataclass(frozen=True)
class EllipseFamily:
    """Axis-aligned safety ellipses scaled from the vehicle footprint."""
    rx: float
    ry: float
    ratios: tuple = (2.0, 1.8, 1.6, 1.4, 1.2, 1.0)

    @classmethod
    def from_params(cls, params: VehicleParams, ratios: tuple) -> "EllipseFamily":
        s = math.sqrt(2.0) / 2.0
        return cls(rx=s * params.length, ry=s * params.width, ratios=tuple(ratios))

    def radii(self, ratio: float) -> tuple[float, float]:
        return ratio * self.rx, ratio * self.ry


def ellipses_intersect(c1, c2, rx: float, ry: float):
    """Two equal axis-aligned ellipses (semi-axes rx, ry) touch or overlap.

    Works elementwise on arrays of centres (…, 2); tangency counts.
    """
    if rx <= 0 or ry <= 0:
        raise ValueError(f"ellipse radii must be > 0, got ({rx}, {ry})")
    d = np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float)
    q = (d[..., 0] / rx) ** 2 + (d[..., 1] / ry) ** 2
    return q <= 4.0 * (1.0 + 1e-12)


def _centres_intersect(cont: np.ndarray, rx: float, ry: float) -> np.ndarray:
    return ellipses_intersect(cont[:, 0:2], cont[:, EL.start:EL.start + 2], rx, ry)


def level_predicate(k: int, family: EllipseFamily):
    """D_k: ellipses at ratio r_k intersect, or the vehicles already collided."""
    if not 1 <= k <= len(family.ratios):
        raise ValueError(f"level {k} outside 1..{len(family.ratios)}")
    rx, ry = family.radii(family.ratios[k - 1])

    def predicate(mode: np.ndarray, cont: np.ndarray) -> np.ndarray:
        return (mode[:, ER_PHASE] == Phase.HIT) | _centres_intersect(cont, rx, ry)

    predicate.__name__ = f"level_{k}"
    return predicate


# ─── delay ───

def delay_rate(timer: float, er_mode: DrivingMode, mean_delay: float) -> float:
    """Rayleigh hazard η/μ_d² while ER is changing lanes, else 0."""
    if mean_delay <= 0:
        raise ValueError(f"mean_delay must be > 0, got {mean_delay}")
    if er_mode != ER_CHANGING:
        return 0.0
    return timer / mean_delay ** 2


# ─── scenario ───

@dataclass
class LaneChangeScenario:
    """Builds the joint GSHS of ER, its SA estimate and EL."""
    params: VehicleParams
    gains: PdGains
    lane_width: float
    mean_delay: float
    ttc_threshold: float
    awareness_ratio: float
    er_decision_time: float
    el_decision_time: float
    x_offset: float
    settle_tolerance: float
    ttc_order: int
    ttc_policy: TtcPolicy
    rear_end_angle_deg: float
    family: EllipseFamily
    sample_interval: float

    @classmethod
    def from_config(cls, cfg: RareSimConfig, awareness_ratio: Optional[float] = None,
                    dt: Optional[float] = None) -> "LaneChangeScenario":
        params = VehicleParams.from_config(cfg.vehicle)
        sc = cfg.scenario
        return cls(params=params, gains=PdGains.from_config(cfg.controller),
                   lane_width=sc.lane_width, mean_delay=sc.mean_delay,
                   ttc_threshold=sc.ttc_threshold,
                   awareness_ratio=sc.awareness_ratio if awareness_ratio is None else awareness_ratio,
                   er_decision_time=sc.er_decision_time, el_decision_time=sc.el_decision_time,
                   x_offset=sc.x_offset, settle_tolerance=sc.settle_tolerance,
                   ttc_order=sc.ttc_order, ttc_policy=TtcPolicy(sc.ttc_policy),
                   rear_end_angle_deg=sc.rear_end_angle_deg,
                   family=EllipseFamily.from_params(params, cfg.levels.ratios),
                   sample_interval=cfg.estimator.dt if dt is None else dt)

    # --- geometry ---
    def lane_y(self, vehicle: str, lane: np.ndarray) -> np.ndarray:
        origin = 0.0 if vehicle == "er" else 2.0 * self.lane_width
        return np.where(lane == SHARED_LANE, self.lane_width, origin)

    def er_target(self, mode: np.ndarray) -> np.ndarray:
        phase = mode[:, ER_PHASE]
        held = self.lane_y("er", mode[:, ER_LANE])
        target = np.where((phase == Phase.CHANGING) | (phase == Phase.AWARE), self.lane_width, held)
        return np.where(phase == Phase.REVERTING, 0.0, target)

    def el_target(self, mode: np.ndarray) -> np.ndarray:
        held = self.lane_y("el", mode[:, EL_LANE])
        return np.where(mode[:, EL_PHASE] == Phase.CHANGING, self.lane_width, held)

    def _steer(self, state: VehicleState, target: np.ndarray):
        return pd_steering(state, replace(self.gains, y_target=target), self.params)

    # --- continuous dynamics ---
    def drift(self, mode: np.ndarray, cont: np.ndarray) -> np.ndarray:
        out = np.zeros_like(cont)
        er = VehicleState.from_array(cont[:, ER])
        el = VehicleState.from_array(cont[:, EL])
        u_el = self._steer(el, self.el_target(mode))
        out[:, ER] = vehicle_drift(er, self._steer(er, self.er_target(mode)), self.params)
        out[:, EL] = vehicle_drift(el, u_el, self.params)

        aware = mode[:, AWARE] == 1
        if aware.any():
            # estimate propagated with EL's own yaw rate and steering
            est = VehicleState(cont[aware, SA.start], cont[aware, SA.start + 1],
                               cont[aware, SA.start + 2], cont[aware, SA.start + 3],
                               el.yaw_rate[aware])
            out[aware, SA] = vehicle_drift(est, u_el[aware], self.params)[:, :4]
            out[aware, ETA] = 1.0

        out[mode[:, ER_PHASE] == Phase.HIT] = 0.0
        return out

    def diffusion(self, mode: np.ndarray, cont: np.ndarray) -> np.ndarray:
        g = np.zeros((DIM, 2))
        eps = self.params.diffusion_magnitude
        g[0, 0] = g[1, 0] = eps
        g[EL.start, 1] = g[EL.start + 1, 1] = eps
        hit = mode[:, ER_PHASE] == Phase.HIT
        if not hit.any():
            return g
        per_row = np.broadcast_to(g, (mode.shape[0], DIM, 2)).copy()
        per_row[hit] = 0.0
        return per_row

    def poisson_jumps(self) -> np.ndarray:
        j = np.zeros((DIM, 2))
        j[ER, 0] = vehicle_jump_vector(self.params)
        j[EL, 1] = vehicle_jump_vector(self.params)
        return j

    def jump_rate(self, mode: np.ndarray, cont: np.ndarray) -> np.ndarray:
        eligible = ((mode[:, ER_PHASE] == Phase.CHANGING) & (mode[:, ER_INTENT] == Intent.LEFT)
                    & (mode[:, AWARE] == 1)
                    & (mode[:, EST_PHASE] == Phase.CHANGING) & (mode[:, EST_INTENT] == Intent.RIGHT))
        return np.where(eligible, np.maximum(cont[:, ETA], 0.0) / self.mean_delay ** 2, 0.0)

    def reset(self, mode: np.ndarray, cont: np.ndarray, u: np.ndarray):
        """Reaction after the delay: ER switches from changing to aware."""
        mode = mode.copy()
        react = (mode[:, ER_PHASE] == Phase.CHANGING) & (mode[:, ER_INTENT] == Intent.LEFT)
        mode[react, ER_PHASE] = Phase.AWARE
        _check_modes(mode)
        return mode, cont

    # --- initial state ---
    def initial_rows(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        mode = np.zeros((n, MODE_WIDTH), dtype=np.int64)
        mode[:, ER_PENDING] = mode[:, EL_PENDING] = 1
        cont = np.zeros((n, DIM))
        cont[:, EL.start] = self.x_offset
        cont[:, EL.start + 1] = 2.0 * self.lane_width
        # decisions due at t = 0 take effect before the first step
        return self.discrete_pass(mode, cont, np.zeros(n))

    def init(self, u: np.ndarray):
        return self.initial_rows(u.shape[0])

    # --- guards ---
    def _collision(self, mode, cont, clock):
        rx, ry = self.family.radii(self.family.ratios[-1])
        return (mode[:, ER_PHASE] != Phase.HIT) & _centres_intersect(cont, rx, ry)

    def _set_hit(self, mode, cont, clock, u):
        mode = mode.copy()
        mode[:, ER_PHASE] = mode[:, EL_PHASE] = Phase.HIT
        return mode, cont

    def _decision_due(self, mode, cont, clock):
        er, el = self._decision_masks(mode, clock)
        return er | el

    def _decision_masks(self, mode, clock):
        live = mode[:, ER_PHASE] != Phase.HIT
        er = (live & (mode[:, ER_PENDING] == 1) & (mode[:, ER_PHASE] == Phase.STRAIGHT)
              & (clock >= self.er_decision_time - 1e-9))
        el = (live & (mode[:, EL_PENDING] == 1) & (mode[:, EL_PHASE] == Phase.STRAIGHT)
              & (clock >= self.el_decision_time - 1e-9))
        return er, el

    def _start_changes(self, mode, cont, clock, u):
        mode = mode.copy()
        er, el = self._decision_masks(mode, clock)
        mode[er, ER_PHASE], mode[er, ER_INTENT], mode[er, ER_PENDING] = Phase.CHANGING, Intent.LEFT, 0
        mode[el, EL_PHASE], mode[el, EL_INTENT], mode[el, EL_PENDING] = Phase.CHANGING, Intent.RIGHT, 0
        _check_modes(mode)
        return mode, cont

    def _awareness_onset(self, mode, cont, clock):
        if self.awareness_ratio <= 0:
            return np.zeros(mode.shape[0], dtype=bool)
        rx, ry = self.family.radii(self.awareness_ratio)
        return ((mode[:, ER_PHASE] != Phase.HIT) & (mode[:, AWARE] == 0)
                & _centres_intersect(cont, rx, ry))

    def _become_aware(self, mode, cont, clock, u):
        mode, cont = self._refresh_sa(mode, cont)
        mode[:, AWARE] = 1
        cont[:, ETA] = 0.0
        return mode, cont

    def _el_changed(self, mode, cont, clock):
        return ((mode[:, AWARE] == 1) & (mode[:, ER_PHASE] != Phase.HIT)
                & ((mode[:, EST_PHASE] != mode[:, EL_PHASE])
                   | (mode[:, EST_INTENT] != mode[:, EL_INTENT])))

    def _resync(self, mode, cont, clock, u):
        return self._refresh_sa(mode, cont)

    @staticmethod
    def _refresh_sa(mode, cont):
        mode, cont = mode.copy(), cont.copy()
        cont[:, SA] = cont[:, EL.start:EL.start + 4]
        mode[:, EST_PHASE] = mode[:, EL_PHASE]
        mode[:, EST_INTENT] = mode[:, EL_INTENT]
        return mode, cont

    def _ttc_alarm(self, mode, cont, clock):
        alarm = np.zeros(mode.shape[0], dtype=bool)
        for i in np.flatnonzero(mode[:, ER_PHASE] == Phase.AWARE):
            alarm[i] = self.er_ttc(mode[i], cont[i]).within(self.ttc_threshold)
        if alarm.any():
            logger.debug(f"TTC below {self.ttc_threshold:g}s in {int(alarm.sum())} row(s), ER reverts")
        return alarm

    def _revert(self, mode, cont, clock, u):
        mode = mode.copy()
        mode[:, ER_PHASE], mode[:, ER_INTENT] = Phase.REVERTING, Intent.RIGHT
        return mode, cont

    def _settle_masks(self, mode, cont):
        tol = self.settle_tolerance
        er_phase, y_er = mode[:, ER_PHASE], cont[:, 1]
        er_done = (((er_phase == Phase.CHANGING) | (er_phase == Phase.AWARE))
                   & (np.abs(y_er - self.lane_width) < tol))
        er_back = (er_phase == Phase.REVERTING) & (np.abs(y_er) < tol)
        el_done = ((mode[:, EL_PHASE] == Phase.CHANGING)
                   & (np.abs(cont[:, EL.start + 1] - self.lane_width) < tol))
        return er_done, er_back, el_done

    def _settled(self, mode, cont, clock):
        er_done, er_back, el_done = self._settle_masks(mode, cont)
        return er_done | er_back | el_done

    def _finish_changes(self, mode, cont, clock, u):
        mode = mode.copy()
        er_done, er_back, el_done = self._settle_masks(mode, cont)
        er = er_done | er_back
        mode[er, ER_PHASE], mode[er, ER_INTENT] = Phase.STRAIGHT, Intent.OFF
        mode[er_done, ER_LANE] = SHARED_LANE
        mode[el_done, EL_PHASE], mode[el_done, EL_INTENT] = Phase.STRAIGHT, Intent.OFF
        mode[el_done, EL_LANE] = SHARED_LANE
        _check_modes(mode)
        return mode, cont

    def guards(self) -> tuple:
        return (
            Guard("collision", self._collision, self._set_hit),
            Guard("decision", self._decision_due, self._start_changes),
            Guard("awareness", self._awareness_onset, self._become_aware),
            Guard("observe_el", self._el_changed, self._resync),
            Guard("ttc_alarm", self._ttc_alarm, self._revert),
            Guard("settle", self._settled, self._finish_changes),
        )

    def discrete_pass(self, mode: np.ndarray, cont: np.ndarray, clock: np.ndarray):
        """All enabled guard transitions, in guard order."""
        mode, cont = mode.copy(), cont.copy()
        for guard in self.guards():
            mask = np.asarray(guard.predicate(mode, cont, clock), dtype=bool)
            if mask.any():
                idx = np.flatnonzero(mask)
                mode[idx], cont[idx] = guard.reset(mode[idx], cont[idx], clock[idx],
                                                   np.empty((idx.size, 0)))
        return mode, cont

    # --- TTC as seen by ER ---
    def er_ttc(self, mode_row: np.ndarray, cont_row: np.ndarray) -> TtcOutcome:
        """ER's TTC against its SA estimate of EL."""
        m, c = mode_row[None, :], cont_row[None, :]
        er = VehicleState.from_array(c[:, ER])
        el_true = VehicleState.from_array(c[:, EL])
        est = VehicleState(c[:, SA.start], c[:, SA.start + 1], c[:, SA.start + 2],
                           c[:, SA.start + 3], el_true.yaw_rate)
        u_er = self._steer(er, self.er_target(m))
        u_el = self._steer(el_true, self.el_target(m))
        sub = self._sample(er, u_er)
        col = self._sample(est, u_el)
        # committed lanes, not the lane the footprint currently straddles
        same_lane = bool(self.lane_y("er", m[:, ER_LANE])[0] == self.lane_y("el", m[:, EL_LANE])[0])
        return evaluate_pair(sub, col, same_lane=same_lane, sub_length=self.params.length,
                             col_length=self.params.length, order=self.ttc_order,
                             policy=self.ttc_policy, rear_end_angle_deg=self.rear_end_angle_deg)

    def _sample(self, state: VehicleState, steer) -> MotionSample:
        derivs = [(float(a[0]), float(b[0]))
                  for a, b in world_motion(state, steer, self.params, self.ttc_order)]
        return MotionSample.from_derivatives((float(state.x[0]), float(state.y[0])), derivs,
                                             self.sample_interval)

    # --- assembly ---
    def to_gshs(self) -> GshsModel:
        modes = []
        for er in sorted(ER_MODES) + [(Phase.HIT, Intent.LEFT)]:
            row = np.zeros(MODE_WIDTH, dtype=np.int64)
            row[ER_PHASE], row[ER_INTENT] = er
            row[EL_PHASE], row[EL_INTENT] = EL_CHANGING.phase, EL_CHANGING.intent
            row[EST_PHASE], row[EST_INTENT] = EL_CHANGING.phase, EL_CHANGING.intent
            row[AWARE] = 1
            modes.append(tuple(int(v) for v in row))
        rate = self.params.jump_rate
        return GshsModel(
            mode_width=MODE_WIDTH, dim=DIM, brownian_dim=2,
            drift=self.drift, diffusion=self.diffusion, jump_rate=self.jump_rate,
            reset_sampler=self.reset, init_sampler=self.init, guards=self.guards(),
            poisson_rates=(rate, rate), poisson_jumps=self.poisson_jumps(),
            mode_set=tuple(modes), name=f"lane_change(mu_r={self.awareness_ratio:g})")

    def to_shs(self) -> ShsModel:
        return transform_gshs_to_shs(self.to_gshs())

    def level_schedule(self, horizon: float) -> LevelSchedule:
        m = len(self.family.ratios)
        return LevelSchedule(tuple(level_predicate(k, self.family) for k in range(1, m + 1)),
                             horizon=horizon, names=tuple(f"r={r:g}" for r in self.family.ratios))


def _check_modes(mode: np.ndarray) -> None:
    for col_p, col_i, allowed, who in ((ER_PHASE, ER_INTENT, ER_MODES, "ER"),
                                       (EL_PHASE, EL_INTENT, EL_MODES, "EL")):
        phase, intent = mode[:, col_p], mode[:, col_i]
        live = phase != Phase.HIT
        ok = np.zeros(mode.shape[0], dtype=bool)
        for p, i in allowed:
            ok |= (phase == p) & (intent == i)
        bad = live & ~ok
        if bad.any():
            r = int(np.flatnonzero(bad)[0])
            raise ModeMachineError(f"{who} reached unreachable mode ({int(phase[r])}, {int(intent[r])})")


# ─── single-state API ───

def build_scenario_model(cfg: RareSimConfig, awareness_ratio: Optional[float] = None,
                         dt: Optional[float] = None) -> tuple[ShsModel, LaneChangeScenario]:
    """Joint SHS for one awareness ratio, plus the scenario that built it."""
    scenario = LaneChangeScenario.from_config(cfg, awareness_ratio, dt)
    return scenario.to_shs(), scenario


def step_discrete(state: ScenarioState, scenario: LaneChangeScenario) -> ScenarioState:
    """Apply every enabled guard transition to one scenario state."""
    mode, cont = state.to_rows()
    mode, cont = scenario.discrete_pass(mode, cont, np.array([state.clock]))
    return ScenarioState.from_rows(mode[0], cont[0], state.clock)


def copy_sa(state: ScenarioState) -> SaVector:
    """SA refreshed from EL's true pose (only meaningful once ER is aware)."""
    if not state.aware:
        raise ValueError("SA is undefined before awareness onset")
    el = state.el
    return SaVector(x=el.x, y=el.y, heading=el.heading, v_lat=el.v_lat,
                    timer=state.sa.timer, est_mode=state.el_mode,
                    est_identity=state.sa.est_identity)
