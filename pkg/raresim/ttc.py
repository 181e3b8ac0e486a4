"""
Time to collision
=================
Motion angles from consecutive positions, rear-end vs angular conflict
classification, the rear-end gap polynomial, the predicted collision point
of two heading lines and the angular TTC along the subject's path.

Motion is extrapolated with a k-th order Taylor polynomial from the current
position and the per-axis derivatives carried by a MotionSample.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from core.polyroots import (all_roots_positive_real, is_identically_zero, min_positive_root,
                            polynomial_roots, real_roots, taylor_coefficients)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
PARALLEL_TOL = 1e-12
ZERO_POLY_TOL = 1e-9
DEFAULT_ORDER = 2


class DegenerateMotion(ValueError):
    """Previous and current positions coincide, so the motion angle is undefined."""


class CoincidentPaths(ValueError):
    """Both heading lines are the same line; there is no single crossing point."""


class ConflictKind(str, Enum):
    REAR_END = "rear_end"
    ANGULAR = "angular"


class TtcKind(str, Enum):
    FINITE = "finite"
    NO_COLLISION = "no_collision"


class TtcPolicy(str, Enum):
    MIN_POSITIVE = "min_positive"   # smallest positive real root
    LITERAL = "literal"             # no collision unless every root is positive real


@dataclass(frozen=True)
class MotionSample:
    """Position at t−δ and at t, plus derivatives [(ẋ, ẏ), (ẍ, ÿ), …] at t."""
    prev: tuple[float, float]
    curr: tuple[float, float]
    derivatives: tuple = ()

    @classmethod
    def from_derivatives(cls, curr: tuple[float, float], derivatives: Sequence,
                         delta: float) -> "MotionSample":
        """Sample whose previous position is one step back along the velocity."""
        vx, vy = derivatives[0]
        prev = (curr[0] - vx * delta, curr[1] - vy * delta)
        return cls(prev=prev, curr=tuple(curr),
                   derivatives=tuple((float(a), float(b)) for a, b in derivatives))

    def axis(self, i: int) -> list[float]:
        return [float(d[i]) for d in self.derivatives]


@dataclass(frozen=True)
class CollisionPoint:
    x: float
    y: float
    times: tuple = ()   # (sub_x, sub_y, col_x, col_y) solve times

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class TtcOutcome:
    kind: TtcKind
    conflict: ConflictKind
    seconds: Optional[float] = None
    point: Optional[CollisionPoint] = None

    @property
    def is_finite(self) -> bool:
        return self.kind is TtcKind.FINITE

    def within(self, threshold: float) -> bool:
        return self.is_finite and self.seconds <= threshold

    @classmethod
    def none(cls, conflict: ConflictKind) -> "TtcOutcome":
        return cls(kind=TtcKind.NO_COLLISION, conflict=conflict)


# ─── angles ───

def motion_angle(sample: MotionSample) -> float:
    """Heading of the displacement prev → curr, in [0, 2π)."""
    dx = sample.curr[0] - sample.prev[0]
    dy = sample.curr[1] - sample.prev[1]
    if dx == 0.0 and dy == 0.0:
        raise DegenerateMotion(f"no displacement at {sample.curr}")
    if dx == 0.0:
        return math.pi / 2 if dy > 0 else 3 * math.pi / 2
    base = math.atan(abs(dy / dx))
    if dx > 0 and dy >= 0:
        phi = base
    elif dx < 0 and dy >= 0:
        phi = math.pi - base
    elif dx < 0:
        phi = math.pi + base
    else:
        phi = TWO_PI - base
    return phi - TWO_PI if phi >= TWO_PI else phi


def classify_conflict(phi_sub: float, phi_col: float, same_lane: bool,
                      threshold_deg: float = 10.0) -> ConflictKind:
    """Rear-end iff the wrapped heading difference is within threshold and the lane is shared."""
    diff = abs(phi_sub - phi_col) % TWO_PI
    wrapped = min(diff, TWO_PI - diff)
    if same_lane and wrapped <= math.radians(threshold_deg):
        return ConflictKind.REAR_END
    return ConflictKind.ANGULAR


# ─── rear-end ───

def _unit(phi: float) -> np.ndarray:
    return np.array([math.cos(phi), math.sin(phi)])


def rear_end_ttc(sub: MotionSample, lead: MotionSample, lead_length: float,
                 order: int = DEFAULT_ORDER) -> TtcOutcome:
    """TTC of a follower `sub` behind `lead` in the same lane.

    Positions are projected on the follower's direction of motion; the TTC
    is the smallest positive real root of
    s_sub − s_lead + l_lead + Σ (d^n s_sub − d^n s_lead) t^n / n!.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    e = _unit(motion_angle(sub))
    gap = float(np.dot(sub.curr, e) - np.dot(lead.curr, e)) + lead_length
    rel = []
    for n in range(order):
        ds = np.dot(sub.derivatives[n], e) if n < len(sub.derivatives) else 0.0
        dl = np.dot(lead.derivatives[n], e) if n < len(lead.derivatives) else 0.0
        rel.append(float(ds - dl))
    t = min_positive_root(taylor_coefficients(gap, rel))
    if t is None:
        return TtcOutcome.none(ConflictKind.REAR_END)
    return TtcOutcome(kind=TtcKind.FINITE, conflict=ConflictKind.REAR_END, seconds=t)


# ─── angular ───

def _axis_time(sample: MotionSample, axis: int, target: float, order: int) -> tuple[bool, Optional[float]]:
    """(solvable, time): time None means the axis equation holds for every t."""
    derivs = sample.axis(axis)[:order]
    coeffs = taylor_coefficients(sample.curr[axis] - target, derivs)
    if is_identically_zero(coeffs, ZERO_POLY_TOL):
        return True, None
    t = min_positive_root(coeffs)
    return t is not None, t


def predicted_collision_point(sub: MotionSample, col: MotionSample,
                              order: int = DEFAULT_ORDER) -> Optional[CollisionPoint]:
    """Crossing of the two heading lines, if both vehicles reach it at some t > 0.

    Raises:
        CoincidentPaths: the heading lines coincide.
    """
    d_s, d_c = _unit(motion_angle(sub)), _unit(motion_angle(col))
    p_s, p_c = np.asarray(sub.curr, dtype=float), np.asarray(col.curr, dtype=float)
    det = d_s[0] * d_c[1] - d_s[1] * d_c[0]
    w = p_c - p_s
    if abs(det) < PARALLEL_TOL:
        if abs(w[0] * d_s[1] - w[1] * d_s[0]) < ZERO_POLY_TOL:
            raise CoincidentPaths(f"coincident heading lines through {sub.curr} and {col.curr}")
        return None
    a = (w[0] * d_c[1] - w[1] * d_c[0]) / det
    cx, cy = p_s + a * d_s

    times = []
    for sample in (sub, col):
        ok_x, tx = _axis_time(sample, 0, cx, order)
        ok_y, ty = _axis_time(sample, 1, cy, order)
        if not (ok_x and ok_y):
            return None
        if tx is None and ty is None:
            return None
        times.extend([tx if tx is not None else ty, ty if ty is not None else tx])
    return CollisionPoint(x=float(cx), y=float(cy), times=tuple(times))


def angular_ttc(sub: MotionSample, point: CollisionPoint, order: int = DEFAULT_ORDER,
                policy: TtcPolicy = TtcPolicy.MIN_POSITIVE) -> TtcOutcome:
    """Time for `sub` to cover the distance to `point` along its heading.

    The dominant axis (larger of |cos φ|, |sin φ|) carries the solve.
    """
    phi = motion_angle(sub)
    dist = math.hypot(point.x - sub.curr[0], point.y - sub.curr[1])
    c, s = math.cos(phi), math.sin(phi)
    axis, proj = (0, c) if abs(c) >= abs(s) else (1, s)
    roots = polynomial_roots(taylor_coefficients(-dist * proj, sub.axis(axis)[:order]))

    if policy is TtcPolicy.LITERAL:
        if not all_roots_positive_real(roots):
            return TtcOutcome.none(ConflictKind.ANGULAR)
        t = float(np.min(roots.real))
    else:
        real = real_roots(roots)
        real = real[real > 0.0]
        if real.size == 0:
            return TtcOutcome.none(ConflictKind.ANGULAR)
        t = float(real[0])
    return TtcOutcome(kind=TtcKind.FINITE, conflict=ConflictKind.ANGULAR, seconds=t, point=point)


# ─── dispatch ───

def _rear_end_pair(sub: MotionSample, col: MotionSample, sub_length: float,
                   col_length: float, order: int) -> TtcOutcome:
    e = _unit(motion_angle(sub))
    if np.dot(sub.curr, e) <= np.dot(col.curr, e):
        return rear_end_ttc(sub, col, col_length, order)
    return rear_end_ttc(col, sub, sub_length, order)


def evaluate_pair(sub: MotionSample, col: MotionSample, *, same_lane: bool,
                  sub_length: float, col_length: float, order: int = DEFAULT_ORDER,
                  policy: TtcPolicy = TtcPolicy.MIN_POSITIVE,
                  rear_end_angle_deg: float = 10.0) -> TtcOutcome:
    """Classify the conflict and compute the subject's TTC."""
    kind = classify_conflict(motion_angle(sub), motion_angle(col), same_lane, rear_end_angle_deg)
    if kind is ConflictKind.REAR_END:
        return _rear_end_pair(sub, col, sub_length, col_length, order)
    try:
        point = predicted_collision_point(sub, col, order)
    except CoincidentPaths:
        logger.debug("coincident heading lines, using the rear-end gap instead")
        return _rear_end_pair(sub, col, sub_length, col_length, order)
    if point is None:
        return TtcOutcome.none(ConflictKind.ANGULAR)
    return angular_ttc(sub, point, order, policy)


# ─── trace files ───

DERIVATIVE_COLUMNS = (("vx", "vy"), ("ax", "ay"))


def _samples_from_rows(rows: Sequence[dict], order: int) -> list[Optional[MotionSample]]:
    """One sample per row (None for the first row); missing derivatives are differenced."""
    out: list[Optional[MotionSample]] = [None]
    for i in range(1, len(rows)):
        cur, prev = rows[i], rows[i - 1]
        delta = float(cur["t"]) - float(prev["t"])
        if delta <= 0:
            raise ValueError(f"trace times must increase (row {i}: t={cur['t']})")
        pos = (float(cur["x"]), float(cur["y"]))
        ppos = (float(prev["x"]), float(prev["y"]))
        derivs = []
        for n, (cx, cy) in enumerate(DERIVATIVE_COLUMNS[:order], start=1):
            if cur.get(cx) not in (None, "") and cur.get(cy) not in (None, ""):
                derivs.append((float(cur[cx]), float(cur[cy])))
            elif n == 1:
                derivs.append(((pos[0] - ppos[0]) / delta, (pos[1] - ppos[1]) / delta))
            elif n == 2 and i >= 2:
                pp = rows[i - 2]
                derivs.append(((pos[0] - 2 * ppos[0] + float(pp["x"])) / delta ** 2,
                               (pos[1] - 2 * ppos[1] + float(pp["y"])) / delta ** 2))
            else:
                derivs.append((0.0, 0.0))
        derivs.extend([(0.0, 0.0)] * (order - len(derivs)))
        out.append(MotionSample(prev=ppos, curr=pos, derivatives=tuple(derivs)))
    return out


def ttc_trace(sub_rows: Sequence[dict], col_rows: Sequence[dict], *, same_lane: bool,
              sub_length: float, col_length: float, order: int = DEFAULT_ORDER,
              policy: TtcPolicy = TtcPolicy.MIN_POSITIVE,
              rear_end_angle_deg: float = 10.0) -> list[dict]:
    """TTC verdict per common time stamp of two trajectories."""
    if len(sub_rows) != len(col_rows):
        raise ValueError(f"trace lengths differ: {len(sub_rows)} vs {len(col_rows)}")
    for a, b in zip(sub_rows, col_rows):
        if not math.isclose(float(a["t"]), float(b["t"]), rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"trace time stamps differ: {a['t']} vs {b['t']}")

    subs = _samples_from_rows(sub_rows, order)
    cols = _samples_from_rows(col_rows, order)
    out = []
    for row, s, c in zip(sub_rows[1:], subs[1:], cols[1:]):
        record = {"t": float(row["t"]), "conflict": "", "ttc": "inf", "cx": "", "cy": ""}
        try:
            res = evaluate_pair(s, c, same_lane=same_lane, sub_length=sub_length,
                                col_length=col_length, order=order, policy=policy,
                                rear_end_angle_deg=rear_end_angle_deg)
        except DegenerateMotion:
            record["conflict"] = "stationary"
            out.append(record)
            continue
        record["conflict"] = res.conflict.value
        if res.is_finite:
            record["ttc"] = res.seconds
        if res.point is not None:
            record["cx"], record["cy"] = res.point.x, res.point.y
        out.append(record)
    return out
