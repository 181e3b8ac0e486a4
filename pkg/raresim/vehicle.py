"""
Vehicle dynamics
================
Five-state linear-tyre bicycle model with a PD lateral controller.

State: (x, y, heading, v_lat, yaw_rate). Longitudinal speed is a constant
parameter. Every function works on scalars and on numpy arrays of states
(fields broadcast elementwise), so the scenario evaluates whole particle
batches with the same code the unit tests check on single points.

Canonical source for: slip angles, tyre forces, vehicle drift, PD steering.
"""
from dataclasses import dataclass
from typing import Union

import numpy as np

from raresim.config import ControllerConfig, VehicleConfig

Num = Union[float, np.ndarray]

STATE_DIM = 5
X, Y, HEADING, V_LAT, YAW_RATE = range(STATE_DIM)


@dataclass(frozen=True)
class VehicleParams:
    v_long: float = 20.0
    mass: float = 2000.0
    yaw_inertia: float = 2000.0
    stiffness_front: float = 6.0e4
    stiffness_rear: float = 6.0e4
    dist_front: float = 2.0
    dist_rear: float = 2.0
    length: float = 4.508
    width: float = 1.61
    jump_magnitude: float = 1.0e-6
    diffusion_magnitude: float = 1.0e-2
    jump_rate: float = 0.5
    max_steer: float = 0.5

    @classmethod
    def from_config(cls, cfg: VehicleConfig) -> "VehicleParams":
        return cls(**{f: getattr(cfg, f) for f in cls.__dataclass_fields__})


@dataclass(frozen=True)
class PdGains:
    kp: float
    kd: float
    y_target: Num = 0.0

    @classmethod
    def from_config(cls, cfg: ControllerConfig, y_target: Num = 0.0) -> "PdGains":
        return cls(kp=cfg.kp, kd=cfg.kd, y_target=y_target)


@dataclass(frozen=True)
class VehicleState:
    x: Num = 0.0
    y: Num = 0.0
    heading: Num = 0.0
    v_lat: Num = 0.0
    yaw_rate: Num = 0.0

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "VehicleState":
        """(…, 5) array → state whose fields are the trailing-axis columns."""
        a = np.asarray(arr, dtype=float)
        return cls(a[..., X], a[..., Y], a[..., HEADING], a[..., V_LAT], a[..., YAW_RATE])

    def to_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.x, self.y, self.heading, self.v_lat,
                                            self.yaw_rate), axis=-1).astype(float)


def slip_angles(state: VehicleState, steer: Num, params: VehicleParams) -> tuple[Num, Num]:
    """Front and rear tyre slip angles (α_f, α_r)."""
    v = params.v_long
    alpha_f = (state.v_lat + params.dist_front * state.yaw_rate) / v - steer
    alpha_r = (state.v_lat - params.dist_rear * state.yaw_rate) / v
    return alpha_f, alpha_r


def tire_forces(alpha_f: Num, alpha_r: Num, params: VehicleParams) -> tuple[Num, Num]:
    """Linear lateral tyre forces; positive slip gives a negative force."""
    return -params.stiffness_front * alpha_f, -params.stiffness_rear * alpha_r


def vehicle_drift(state: VehicleState, steer: Num, params: VehicleParams) -> np.ndarray:
    """Time derivative of (x, y, heading, v_lat, yaw_rate), shape (…, 5)."""
    alpha_f, alpha_r = slip_angles(state, steer, params)
    f_front, f_rear = tire_forces(alpha_f, alpha_r, params)
    cos_h, sin_h = np.cos(state.heading), np.sin(state.heading)
    cos_u = np.cos(steer)
    v = params.v_long

    dx = v * cos_h - state.v_lat * sin_h
    dy = v * sin_h + state.v_lat * cos_h
    dheading = state.yaw_rate
    dv_lat = f_front / params.mass * cos_u + f_rear / params.mass - v * state.yaw_rate
    dyaw = (params.dist_front * f_front * cos_u - params.dist_rear * f_rear) / params.yaw_inertia
    return np.stack(np.broadcast_arrays(dx, dy, dheading, dv_lat, dyaw), axis=-1).astype(float)


def vehicle_diffusion(params: VehicleParams) -> np.ndarray:
    """(5, 1): one Brownian channel driving x and y."""
    g = np.zeros((STATE_DIM, 1))
    g[X, 0] = g[Y, 0] = params.diffusion_magnitude
    return g


def vehicle_jump_vector(params: VehicleParams) -> np.ndarray:
    """(5,): Poisson jump added to x and y when the channel fires."""
    j = np.zeros(STATE_DIM)
    j[X] = j[Y] = params.jump_magnitude
    return j


def lateral_rate(state: VehicleState, params: VehicleParams) -> Num:
    """dy/dt in the world frame."""
    return params.v_long * np.sin(state.heading) + state.v_lat * np.cos(state.heading)


def pd_steering(state: VehicleState, gains: PdGains, params: VehicleParams) -> Num:
    """u = K_p (y_d − y) − K_d dy/dt, clamped to ±max_steer."""
    u = gains.kp * (gains.y_target - state.y) - gains.kd * lateral_rate(state, params)
    return np.clip(u, -params.max_steer, params.max_steer)


def world_motion(state: VehicleState, steer: Num, params: VehicleParams,
                 order: int) -> list[tuple[Num, Num]]:
    """World-frame motion derivatives [(ẋ, ẏ), (ẍ, ÿ), 0, …] up to `order`.

    Acceleration uses the current drift; orders above two are zero
    (constant-acceleration extrapolation).
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    d = vehicle_drift(state, steer, params)
    vx, vy = d[..., X], d[..., Y]
    out = [(vx, vy)]
    if order >= 2:
        cos_h, sin_h = np.cos(state.heading), np.sin(state.heading)
        omega, dv_lat = state.yaw_rate, d[..., V_LAT]
        v = params.v_long
        ax = -v * sin_h * omega - dv_lat * sin_h - state.v_lat * cos_h * omega
        ay = v * cos_h * omega + dv_lat * cos_h - state.v_lat * sin_h * omega
        out.append((ax, ay))
    for _ in range(order - 2):
        out.append((np.zeros_like(vx), np.zeros_like(vy)))
    return out
