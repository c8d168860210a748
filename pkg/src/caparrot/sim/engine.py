"""Seeded discrete-event simulation of a mobile mesh network.

The medium is idealized: a frame reaches every node whose sampled RSS clears
the receiver sensitivity, with no collisions, carrier sensing or
retransmissions. Each hop costs the frame's airtime at the link rate plus a
fixed processing delay.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from caparrot.adapter.backoff import BackoffState, backoff_tick
from caparrot.adapter.classifier import classify, default_model
from caparrot.adapter.features import SampleWindow, extract_features
from caparrot.adapter.forest import ForestModel
from caparrot.adapter.paramdb import REP_PARAMETERS
from caparrot.channel import ChannelModel, Nakagami, RadioConfig, derive_range, link_rss, reception, sample_rss
from caparrot.mobility import KinematicState, PositionHistory, Trajectory, Vec3, predict_position
from caparrot.routing.chirp import CHIRP_SIZE, Chirp, ChirpDecodeError
from caparrot.routing.node import NoRouteError, RoutingNode
from caparrot.sim.bound import availability_sample, build_trajectories, link_matrix, sample_times
from caparrot.sim.scenario import Scenario

log = logging.getLogger(__name__)

# event kinds; the integer also orders nothing, ties are FIFO by insertion counter
CHIRP, FRAME, COMMIT, PACKET, DATA, MOTION, KPI = range(7)

GEO_NEIGHBOR_TIMEOUT_INTERVALS = 3.0


@dataclass
class KPIRecord:
    seed: int
    variant: str
    pdr: float
    latency_mean_s: float | None
    latency_p50_s: float | None
    latency_p95_s: float | None
    latency_p99_s: float | None
    sent: int
    delivered: int
    dropped: int
    in_flight: int
    mean_hops: float | None
    route_availability: float | None
    drops: dict = field(default_factory=dict)
    decode_errors: int = 0
    classification_trace: list = field(default_factory=list)

    def to_row(self) -> dict:
        return asdict(self)


def sample_links(sender: int, positions: np.ndarray, channel: ChannelModel, radio: RadioConfig,
                 rng: np.random.Generator | None, targets=None) -> tuple[list[int], list[float]]:
    """Sample the channel from ``sender`` to ``targets`` (every other node by default).

    Returns the ids and RSS values of the nodes that decode the frame.
    """
    if targets is None:
        targets = [j for j in range(len(positions)) if j != sender]
    if not targets:
        return [], []
    tgt = np.asarray(targets)
    d = np.maximum(np.linalg.norm(positions[tgt] - positions[sender], axis=1), 1e-3)
    rss = sample_rss(channel, radio, d, (positions[sender, 2], positions[tgt, 2]), rng)
    ok = reception(rss, radio)
    return tgt[ok].tolist(), rss[ok].tolist()


class GeoNode:
    """Greedy geographic forwarding with periodic one-hop beacons."""

    def __init__(self, node_id: int, timeout: float):
        self.node_id = node_id
        self.timeout = timeout
        self.neighbors: dict[int, tuple[Vec3, float]] = {}
        self.seq = 0

    def beacon(self, position: Vec3) -> Chirp:
        self.seq += 1
        return Chirp(self.node_id, self.seq, position, Vec3(0.0, 0.0, 0.0), 1.0, 1.0)

    def handle_beacon(self, chirp: Chirp, sender: int, now: float) -> None:
        self.neighbors[sender] = (chirp.position, now)

    def next_hop(self, own: Vec3, destination: int, dest_pos: Vec3, now: float) -> int | None:
        fresh = {j: p for j, (p, t) in self.neighbors.items() if now - t <= self.timeout}
        return geo_next_hop(own, fresh, destination, dest_pos)


def geo_next_hop(own: Vec3, neighbors: dict[int, Vec3], destination: int,
                 dest_pos: Vec3) -> int | None:
    """Neighbor closest to the destination, provided it is closer than we are.

    None signals a local minimum (the packet is dropped).
    """
    if destination in neighbors:
        return destination
    best, best_d = None, (own - dest_pos).norm()
    for j in sorted(neighbors):
        d = (neighbors[j] - dest_pos).norm()
        if d < best_d:
            best, best_d = j, d
    return best


class Simulation:
    def __init__(self, scenario: Scenario, seed: int, model: ForestModel | None = None,
                 packet_trace: list | None = None):
        self.sc = scenario
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        _, chan_ss, phase_ss = ss.spawn(3)
        self.trajectories: list[Trajectory] = build_trajectories(scenario, seed)
        self.channel_rng = np.random.Generator(np.random.PCG64(chan_ss))
        phase_rng = np.random.Generator(np.random.PCG64(phase_ss))
        n = scenario.nodes
        self.chirp_phase = phase_rng.uniform(0.0, scenario.timers.chirp_interval, size=n).tolist()
        self.commit_phase = phase_rng.uniform(0.0, scenario.timers.commit_interval, size=n).tolist()
        self.r_tx = derive_range(scenario.radio)
        self.tau = scenario.prediction.tau
        self.geo = scenario.variant == "geo-baseline"
        self.fading = isinstance(scenario.channel, Nakagami)
        self.histories = [PositionHistory(capacity=16) for _ in range(n)]
        if self.geo:
            timeout = GEO_NEIGHBOR_TIMEOUT_INTERVALS * scenario.timers.chirp_interval
            self.nodes = [GeoNode(i, timeout) for i in range(n)]
        else:
            mode = "immediate" if scenario.variant == "parrot-fixed" else "timer"
            self.nodes = [RoutingNode(i, scenario.params, self.r_tx, self.tau, mode)
                          for i in range(n)]
        self.adaptive = scenario.adaptive
        if self.adaptive:
            if model is None:
                model = (ForestModel.load(scenario.adaptation.model_file)
                         if scenario.adaptation.model_file else default_model(scenario.radio))
            self.model = model
            self.windows = [SampleWindow(scenario.adaptation.window) for _ in range(n)]
            self.backoff = [BackoffState(1, 1, None, scenario.adaptation.backoff_cap)
                            for _ in range(n)]
        self.class_trace: list = []
        self.packet_trace = packet_trace
        self.queue: list = []
        self._counter = 0
        # packet bookkeeping
        self.sent = 0
        self.delivered = 0
        self.drops: Counter = Counter()
        self.latencies: list[float] = []
        self.hops: list[int] = []
        self.decode_errors = 0
        self.avail_hits = 0
        self.avail_samples = 0
        self.chirp_airtime = CHIRP_SIZE * 8.0 / scenario.link_rate_bps + scenario.processing_delay_s

    # -- plumbing ----------------------------------------------------------

    def schedule(self, t: float, kind: int, *args) -> None:
        if t <= self.sc.duration_s:
            self._counter += 1
            heapq.heappush(self.queue, (t, self._counter, kind, args))

    def positions(self, t: float) -> np.ndarray:
        return np.array([tr.position_at(t) for tr in self.trajectories])

    def transmit(self, sender: int, t: float, targets=None):
        rng = self.channel_rng if self.fading else None
        if targets is None:
            return sample_links(sender, self.positions(t), self.sc.channel, self.sc.radio, rng)
        tr = self.trajectories
        a = tr[sender].position_at(t)
        ids, levels = [], []
        for j in targets:
            b = tr[j].position_at(t)
            d = max((a - b).norm(), 1e-3)
            level = link_rss(self.sc.channel, self.sc.radio, d, a.z, b.z, rng)
            if level >= self.sc.radio.sensitivity_dbm:
                ids.append(j)
                levels.append(level)
        return ids, levels

    def _touch(self, i: int, now: float) -> None:
        node = self.nodes[i]
        p = self.trajectories[i].position_at(now)
        node.kinematics = KinematicState(p, node.kinematics.velocity, now)

    def _refresh_prediction(self, i: int, now: float) -> None:
        tr = self.trajectories[i]
        state = tr.state_at(now)
        predicted = predict_position(state, tr.remaining_plan(now), self.histories[i],
                                     self.sc.prediction)
        self.nodes[i].set_kinematics(state, predicted)

    # -- main loop ---------------------------------------------------------

    def run(self) -> KPIRecord:
        sc = self.sc
        for i in range(sc.nodes):
            self.schedule(self.chirp_phase[i], CHIRP, i)
            if not self.geo:
                self.schedule(self.commit_phase[i], COMMIT, i)
        for f_idx, flow in enumerate(sc.traffic):
            self.schedule(flow.start_s, PACKET, f_idx)
        self.schedule(0.0, MOTION)
        self.kpi_times = sample_times(sc)
        for t in self.kpi_times:
            self.schedule(t, KPI)

        handlers = {CHIRP: self.on_chirp, FRAME: self.on_frame, COMMIT: self.on_commit,
                    PACKET: self.on_packet, DATA: self.on_data, MOTION: self.on_motion,
                    KPI: self.on_kpi}
        queue = self.queue
        while queue:
            t, _, kind, args = heapq.heappop(queue)
            handlers[kind](t, *args)
        return self.record()

    def on_motion(self, now: float) -> None:
        for i, tr in enumerate(self.trajectories):
            self.histories[i].push(now, tr.position_at(now))
        self.schedule(now + 1.0, MOTION)

    def on_kpi(self, now: float) -> None:
        pos = self.positions(now)
        adj = link_matrix(self.sc, pos)
        for flow in self.sc.traffic:
            self.avail_samples += 1
            self.avail_hits += availability_sample(adj, flow.source, flow.destination)

    def on_chirp(self, now: float, i: int) -> None:
        node = self.nodes[i]
        if self.geo:
            chirp = node.beacon(self.trajectories[i].position_at(now))
        else:
            self._refresh_prediction(i, now)
            chirp = node.originate_chirp(now)
        self.broadcast(i, chirp, now)
        self.schedule(now + self.sc.timers.chirp_interval, CHIRP, i)

    def broadcast(self, i: int, chirp: Chirp, now: float) -> None:
        receivers, rss = self.transmit(i, now)
        if receivers:
            self.schedule(now + self.chirp_airtime, FRAME, i, chirp.encode(), receivers, rss)

    def on_frame(self, now: float, sender: int, payload: bytes, receivers, rss) -> None:
        try:
            chirp = Chirp.decode(payload)
        except ChirpDecodeError:
            self.decode_errors += len(receivers)
            return
        for r, level in zip(receivers, rss):
            node = self.nodes[r]
            if self.geo:
                node.handle_beacon(chirp, sender, now)
                continue
            self._touch(r, now)
            if self.adaptive:
                d = (chirp.position - node.kinematics.position).norm()
                if d > 0:
                    self.windows[r].add(level, d)
            fwd = node.handle_chirp(chirp, sender, now)
            if fwd is not None:
                self.broadcast(r, fwd, now)

    def on_commit(self, now: float, i: int) -> None:
        node = self.nodes[i]
        if self.adaptive:
            window = self.windows[i]

            def classify_fn():
                fv = extract_features(window)
                return None if fv is None else classify(self.model, fv)

            self.backoff[i], new_params = backoff_tick(self.backoff[i], classify_fn, REP_PARAMETERS)
            if new_params is not None:
                node.params = new_params
                self.class_trace.append([round(now, 6), i, self.backoff[i].label.value])
        node.commit_tick(now)
        self.schedule(now + self.sc.timers.commit_interval, COMMIT, i)

    # -- data traffic ------------------------------------------------------

    def on_packet(self, now: float, f_idx: int) -> None:
        flow = self.sc.traffic[f_idx]
        self.sent += 1
        pkt = [self.sent, f_idx, now, 0]
        self.forward(flow.source, pkt, now)
        self.schedule(now + flow.interval, PACKET, f_idx)

    def on_data(self, now: float, i: int, pkt) -> None:
        self.forward(i, pkt, now)

    def _drop(self, pkt, now: float, reason: str) -> None:
        self.drops[reason] += 1
        if self.packet_trace is not None:
            self.packet_trace.append((pkt[0], pkt[1], pkt[2], "dropped", now, pkt[3], reason))

    def forward(self, i: int, pkt, now: float) -> None:
        flow = self.sc.traffic[pkt[1]]
        dest = flow.destination
        if i == dest:
            self.delivered += 1
            self.latencies.append(now - pkt[2])
            self.hops.append(pkt[3])
            if self.packet_trace is not None:
                self.packet_trace.append((pkt[0], pkt[1], pkt[2], "delivered", now, pkt[3], ""))
            return
        if pkt[3] >= self.sc.ttl:
            self._drop(pkt, now, "ttl")
            return
        if self.geo:
            own = self.trajectories[i].position_at(now)
            nxt = self.nodes[i].next_hop(own, dest, self.trajectories[dest].position_at(now), now)
            if nxt is None:
                self._drop(pkt, now, "local_minimum")
                return
        else:
            try:
                nxt = self.nodes[i].select_next_hop(dest, now)
            except NoRouteError:
                self._drop(pkt, now, "no_route")
                return
        receivers, _ = self.transmit(i, now, [nxt])
        if not receivers:
            self._drop(pkt, now, "link")
            return
        delay = flow.packet_size_bytes * 8.0 / self.sc.link_rate_bps + self.sc.processing_delay_s
        self.schedule(now + delay, DATA, nxt, [pkt[0], pkt[1], pkt[2], pkt[3] + 1])

    # -- results -----------------------------------------------------------

    def record(self) -> KPIRecord:
        lat = np.array(self.latencies)
        dropped = sum(self.drops.values())

        def pct(q):
            return float(np.percentile(lat, q)) if lat.size else None

        return KPIRecord(
            seed=self.seed,
            variant=self.sc.variant,
            pdr=self.delivered / self.sent if self.sent else 0.0,
            latency_mean_s=float(lat.mean()) if lat.size else None,
            latency_p50_s=pct(50),
            latency_p95_s=pct(95),
            latency_p99_s=pct(99),
            sent=self.sent,
            delivered=self.delivered,
            dropped=dropped,
            in_flight=self.sent - self.delivered - dropped,
            mean_hops=float(np.mean(self.hops)) if self.hops else None,
            route_availability=self.avail_hits / self.avail_samples if self.avail_samples else None,
            drops=dict(sorted(self.drops.items())),
            decode_errors=self.decode_errors + sum(getattr(n, "decode_errors", 0) for n in self.nodes),
            classification_trace=self.class_trace,
        )


def run(scenario: Scenario, seed: int, model: ForestModel | None = None,
        packet_trace: list | None = None) -> KPIRecord:
    return Simulation(scenario, seed, model, packet_trace).run()


def run_baseline_geo(scenario: Scenario, seed: int) -> KPIRecord:
    return run(replace(scenario, variant="geo-baseline"), seed)


def deliver_broadcast(sender: int, positions: np.ndarray, channel: ChannelModel,
                      radio: RadioConfig, rng: np.random.Generator | None = None) -> set[int]:
    """Nodes that decode a broadcast from ``sender`` (no collisions)."""
    return set(sample_links(sender, positions, channel, radio, rng)[0])
