"""Controlled-waypoint motion and trajectory prediction.

Nodes fly straight lines between pre-calculated waypoints at a constant
cruise speed. Because the waypoints are known ahead of time, a node can
predict where it will be ``tau`` seconds from now; once its known targets
run out the prediction falls back to extrapolating the recent position
history.
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

ARRIVAL_TOLERANCE_M = 0.5
DEFAULT_HISTORY_SAMPLES = 5


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other: "Vec3") -> "Vec3":  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> "Vec3":  # type: ignore[override]
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


ZERO = Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class KinematicState:
    position: Vec3
    velocity: Vec3 = ZERO
    timestamp: float = 0.0


@dataclass(frozen=True)
class WaypointPlan:
    """Remaining targets of a node, in visiting order."""

    targets: tuple[Vec3, ...]
    speed: float
    bounds: tuple[Vec3, Vec3] = (ZERO, Vec3(500.0, 500.0, 250.0))

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("cruise speed must be non-negative")
        lo, hi = self.bounds
        for t in self.targets:
            if not (lo.x <= t.x <= hi.x and lo.y <= t.y <= hi.y and lo.z <= t.z <= hi.z):
                raise ValueError(f"waypoint {t} outside playground {self.bounds}")

    def dropping(self, n: int) -> "WaypointPlan":
        # a suffix of a validated plan needs no re-validation
        plan = object.__new__(WaypointPlan)
        object.__setattr__(plan, "targets", self.targets[n:])
        object.__setattr__(plan, "speed", self.speed)
        object.__setattr__(plan, "bounds", self.bounds)
        return plan


@dataclass(frozen=True)
class PredictionConfig:
    tau: float = 10.0
    step_count: int = 20
    history_samples: int = DEFAULT_HISTORY_SAMPLES

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")
        if self.history_samples < 2:
            raise ValueError("history_samples must be >= 2")


class InsufficientHistory(ValueError):
    pass


@dataclass
class PositionHistory:
    capacity: int = 16
    samples: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        self.samples = deque(self.samples, maxlen=self.capacity)

    def push(self, t: float, position: Vec3) -> None:
        if self.samples and t <= self.samples[-1][0]:
            raise ValueError("history timestamps must be strictly increasing")
        self.samples.append((t, position))

    def __len__(self) -> int:
        return len(self.samples)

    def mean_velocity(self, last: int = DEFAULT_HISTORY_SAMPLES) -> Vec3:
        """Mean of the finite-difference velocities over the last ``last`` samples."""
        if len(self.samples) < 2:
            raise InsufficientHistory("need at least 2 history samples")
        recent = list(self.samples)[-last:]
        vx = vy = vz = 0.0
        for (t0, p0), (t1, p1) in zip(recent, recent[1:]):
            dt = t1 - t0
            vx += (p1.x - p0.x) / dt
            vy += (p1.y - p0.y) / dt
            vz += (p1.z - p0.z) / dt
        n = len(recent) - 1
        return Vec3(vx / n, vy / n, vz / n)


def extrapolate_history(history: PositionHistory, horizon: float,
                        last: int = DEFAULT_HISTORY_SAMPLES) -> Vec3:
    v = history.mean_velocity(last)
    return history.samples[-1][1] + v * horizon


def _move_toward(pos: Vec3, target: Vec3, speed: float, dt: float) -> tuple[Vec3, float, bool]:
    """Move ``pos`` toward ``target``; returns (new_pos, unused_time, arrived)."""
    delta = target - pos
    dist = delta.norm()
    reach = speed * dt
    if dist <= reach or dist <= ARRIVAL_TOLERANCE_M:
        used = dist / speed if speed > 0 else 0.0
        return target, max(dt - used, 0.0), True
    return pos + delta * (reach / dist), 0.0, False


def advance_motion(state: KinematicState, plan: WaypointPlan,
                   dt: float) -> tuple[KinematicState, WaypointPlan]:
    """Fly ``dt`` seconds along the plan.

    Returns the new state and the plan with reached waypoints removed. Time
    left over after reaching a waypoint is spent flying toward the next one.
    An exhausted plan leaves the node hovering with zero velocity.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    pos = state.position
    remaining = dt
    reached = 0
    targets = plan.targets
    while remaining > 0 and reached < len(targets) and plan.speed > 0:
        pos, remaining, arrived = _move_toward(pos, targets[reached], plan.speed, remaining)
        if arrived:
            reached += 1
    velocity = ZERO
    if reached < len(targets) and plan.speed > 0:
        delta = targets[reached] - pos
        dist = delta.norm()
        if dist > 0:
            velocity = delta * (plan.speed / dist)
    return KinematicState(pos, velocity, state.timestamp + dt), plan.dropping(reached)


def predict_position(state: KinematicState, plan: WaypointPlan,
                     history: PositionHistory | None, cfg: PredictionConfig) -> Vec3:
    """Predict the position ``cfg.tau`` seconds ahead.

    The horizon is walked in ``cfg.step_count`` equal sub-steps. Each sub-step
    follows the known waypoints; once they are used up the rest of the horizon
    is extrapolated with the mean history velocity (zero if the history is too
    short).
    """
    step = cfg.tau / cfg.step_count
    pos = state.position
    targets = plan.targets
    idx = 0
    speed = plan.speed
    for k in range(cfg.step_count):
        left = step
        while left > 0 and idx < len(targets) and speed > 0:
            pos, left, arrived = _move_toward(pos, targets[idx], speed, left)
            if arrived:
                idx += 1
        if left > 0 and (idx >= len(targets) or speed <= 0):
            # targets exhausted: remaining horizon from the history
            horizon = left + step * (cfg.step_count - k - 1)
            if history is not None and len(history) >= 2:
                pos = pos + history.mean_velocity(cfg.history_samples) * horizon
            break
    return pos


def random_plan(rng: np.random.Generator, bounds: tuple[Vec3, Vec3], count: int,
                speed: float) -> WaypointPlan:
    lo, hi = bounds
    pts = rng.uniform((lo.x, lo.y, lo.z), (hi.x, hi.y, hi.z), size=(count, 3))
    return WaypointPlan(tuple(Vec3(*map(float, p)) for p in pts), speed, bounds)


class Trajectory:
    """Closed-form piecewise-linear path of a node following its plan from t=0.

    Equivalent to repeatedly calling :func:`advance_motion`, but answers
    position queries at arbitrary times in O(log n).
    """

    def __init__(self, start: Vec3, plan: WaypointPlan):
        self.plan = plan
        self.points = [start]
        self.times = [0.0]
        self.velocities: list[Vec3] = []
        pos = start
        t = 0.0
        for target in plan.targets:
            d = (target - pos).norm()
            if plan.speed > 0 and d > 0:
                dt = d / plan.speed
                self.velocities.append((target - pos) * (1.0 / dt))
            else:
                dt = 0.0 if plan.speed > 0 else math.inf
                self.velocities.append(ZERO)
            t += dt
            self.points.append(target)
            self.times.append(t)
            pos = target
        self.velocities.append(ZERO)

    def _segment(self, t: float) -> int:
        return bisect.bisect_right(self.times, t) - 1

    def state_at(self, t: float) -> KinematicState:
        i = self._segment(t)
        if i >= len(self.points) - 1:
            return KinematicState(self.points[-1], ZERO, t)
        return KinematicState(self.position_at(t), self.velocities[i], t)

    def position_at(self, t: float) -> Vec3:
        i = bisect.bisect_right(self.times, t) - 1
        p = self.points[i]
        v = self.velocities[i]
        dt = t - self.times[i]
        return Vec3(p[0] + v[0] * dt, p[1] + v[1] * dt, p[2] + v[2] * dt)

    def remaining_plan(self, t: float) -> WaypointPlan:
        """Targets not yet reached at time ``t``."""
        i = self._segment(t)
        return self.plan.dropping(i)

    @property
    def end_time(self) -> float:
        return self.times[-1]


def plan_for_duration(rng: np.random.Generator, start: Vec3, bounds: tuple[Vec3, Vec3],
                      speed: float, duration: float) -> WaypointPlan:
    """Draw waypoints until the flight time covers ``duration`` (plus one spare leg)."""
    lo, hi = bounds
    targets: list[Vec3] = []
    t = 0.0
    pos = start
    horizon = duration + 60.0
    while t <= horizon and speed > 0:
        p = rng.uniform((lo.x, lo.y, lo.z), (hi.x, hi.y, hi.z))
        target = Vec3(float(p[0]), float(p[1]), float(p[2]))
        t += (target - pos).norm() / speed
        targets.append(target)
        pos = target
    return WaypointPlan(tuple(targets), speed, bounds)


def in_bounds(p: Vec3, bounds: Sequence[Vec3], tol: float = 1e-9) -> bool:
    lo, hi = bounds
    return (lo.x - tol <= p.x <= hi.x + tol and lo.y - tol <= p.y <= hi.y + tol
            and lo.z - tol <= p.z <= hi.z + tol)
