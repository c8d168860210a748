"""Link-expiry geometry, cohesion and the Q-value update."""

from __future__ import annotations

import math
from typing import AbstractSet

from caparrot.mobility import Vec3
from caparrot.routing.params import ParameterSet


def compute_let(rel_position: Vec3, rel_velocity: Vec3, range_m: float, tau: float) -> float:
    """Seconds until the relative trajectory leaves the disk of radius ``range_m``.

    Solves |dp + t*dv| = range for the exit root. Pairs already out of range
    get 0; pairs that never leave get ``tau``. Always clamped to [0, tau].
    """
    if not range_m > 0:
        raise ValueError("communication range must be positive")
    dp, dv = rel_position, rel_velocity
    c = dp.dot(dp) - range_m * range_m
    if c > 0:
        return 0.0
    a = dv.dot(dv)
    if a == 0.0:
        return tau
    b = 2.0 * dp.dot(dv)
    disc = b * b - 4.0 * a * c
    # c <= 0 guarantees a real, non-negative exit root
    t_exit = (-b + math.sqrt(max(disc, 0.0))) / (2.0 * a)
    return min(max(t_exit, 0.0), tau)


def phi_let(let: float, tau: float) -> float:
    return min(max(let / tau, 0.0), 1.0)


def compute_cohesion(neighbors_now: AbstractSet[int], predicted_neighbors: AbstractSet[int]) -> float:
    """Share of today's neighbors that are still predicted to be neighbors after tau.

    An empty neighborhood counts as perfectly stable.
    """
    if not neighbors_now:
        return 1.0
    return len(neighbors_now & predicted_neighbors) / len(neighbors_now)


def q_update(q: float, params: ParameterSet, phi_let: float, phi_coh: float, value: float) -> float:
    gamma = params.gamma0 * phi_let ** params.lam * phi_coh ** params.omega
    return q + params.alpha * (gamma * value - q)
