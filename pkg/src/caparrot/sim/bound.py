"""Mobility traces and the mobility-constrained route availability bound.

At every sampling instant the network is a geometric graph: two nodes are
linked when the mean received power clears the receiver sensitivity (for the
log-distance prototypes this is exactly ``distance <= r_TX``). The bound is
the share of instants in which each flow's source can reach its destination.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from caparrot.channel import mean_rss_dbm
from caparrot.mobility import Trajectory, Vec3, WaypointPlan, plan_for_duration
from caparrot.sim.scenario import Scenario


def build_trajectories(sc: Scenario, seed: int) -> list[Trajectory]:
    """Per-node trajectories; depends only on the mobility part of the seed stream."""
    if sc.mobility.positions_m is not None:
        return [Trajectory(p, WaypointPlan((), 0.0, sc.bounds)) for p in sc.mobility.positions_m]
    mob_seed = sc.mobility.waypoint_seed
    if mob_seed is None:
        mob_ss = np.random.SeedSequence(seed).spawn(3)[0]
    else:
        mob_ss = np.random.SeedSequence(mob_seed)
    rng = np.random.Generator(np.random.PCG64(mob_ss))
    lo, hi = sc.bounds
    out = []
    for _ in range(sc.nodes):
        p = rng.uniform((lo.x, lo.y, lo.z), (hi.x, hi.y, hi.z))
        start = Vec3(float(p[0]), float(p[1]), float(p[2]))
        plan = plan_for_duration(rng, start, sc.bounds, sc.mobility.speed, sc.duration_s)
        out.append(Trajectory(start, plan))
    return out


def link_matrix(sc: Scenario, positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    d = np.maximum(np.linalg.norm(diff, axis=2), 1e-3)
    alt = positions[:, 2]
    rss = mean_rss_dbm(sc.channel, sc.radio, d, alt[:, None], alt[None, :])
    adj = rss >= sc.radio.sensitivity_dbm
    np.fill_diagonal(adj, False)
    return adj


def availability_sample(adj: np.ndarray, source: int, destination: int) -> bool:
    seen = {source}
    frontier = deque([source])
    while frontier:
        u = frontier.popleft()
        if u == destination:
            return True
        for v in np.flatnonzero(adj[u]).tolist():
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return False


def sample_times(sc: Scenario) -> list[float]:
    """Sampling instants covering the traffic period."""
    start = min((f.start_s for f in sc.traffic), default=0.0)
    n = int(np.floor((sc.duration_s - start) / sc.kpi_interval_s + 1e-9))
    return [start + k * sc.kpi_interval_s for k in range(n)]


def route_availability_bound(sc: Scenario, seed: int) -> float:
    trajectories = build_trajectories(sc, seed)
    hits = samples = 0
    for t in sample_times(sc):
        pos = np.array([tr.position_at(t) for tr in trajectories])
        adj = link_matrix(sc, pos)
        for flow in sc.traffic:
            samples += 1
            hits += availability_sample(adj, flow.source, flow.destination)
    return hits / samples if samples else 0.0
