"""Per-node protocol state: neighbor table, metric buffer, Q-table and routing table.

Incoming chirps only touch the neighbor table and the metric buffer. The
Q-table, and therefore the routing decision, changes only on the periodic
commit tick. ``commit_mode="immediate"`` restores the older behaviour where
every received chirp writes straight into the Q-table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from caparrot.mobility import ZERO, KinematicState, Vec3
from caparrot.routing.chirp import Chirp, ChirpDecodeError
from caparrot.routing.metrics import compute_cohesion, compute_let, phi_let, q_update
from caparrot.routing.params import ParameterSet

log = logging.getLogger(__name__)


class NoRouteError(LookupError):
    pass


@dataclass
class NeighborRecord:
    neighbor: int
    kinematics: KinematicState
    predicted_position: Vec3
    cohesion: float
    phi_let: float
    expiry: float  # absolute time


@dataclass
class Candidate:
    seq: int
    value: float
    received_at: float


@dataclass
class QEntry:
    q: float
    last_seq: int
    valid_until: float


@dataclass
class RoutingNode:
    node_id: int
    params: ParameterSet
    r_tx: float
    tau: float
    commit_mode: str = "timer"
    kinematics: KinematicState = field(default_factory=lambda: KinematicState(ZERO))
    predicted_position: Vec3 = ZERO

    def __post_init__(self) -> None:
        if self.commit_mode not in ("timer", "immediate"):
            raise ValueError(f"unknown commit mode {self.commit_mode!r}")
        self.neighbors: dict[int, NeighborRecord] = {}
        self.buffer: dict[tuple[int, int], Candidate] = {}
        self.qtable: dict[tuple[int, int], QEntry] = {}
        self.routes: dict[int, list[tuple[float, int]]] = {}
        self.newest_seq: dict[int, int] = {}
        self.seq = 0
        self.decode_errors = 0

    # -- own state ---------------------------------------------------------

    @property
    def link_range(self) -> float:
        return self.r_tx + self.params.r_b

    def set_kinematics(self, state: KinematicState, predicted: Vec3) -> None:
        """Current state plus the predicted position ``tau`` ahead.

        The advertised velocity is the mean velocity along the predicted
        trajectory, so receivers can reconstruct it linearly.
        """
        v = (predicted - state.position) * (1.0 / self.tau)
        self.kinematics = KinematicState(state.position, v, state.timestamp)
        self.predicted_position = predicted

    def cohesion(self, now: float) -> float:
        current = {j for j, nb in self.neighbors.items() if nb.expiry >= now}
        horizon = now + self.tau
        rng2 = self.link_range ** 2
        me = self.predicted_position
        predicted = set()
        for j in current:
            nb = self.neighbors[j]
            kin = nb.kinematics
            p = kin.position + kin.velocity * (horizon - kin.timestamp)
            d = p - me
            if d.dot(d) <= rng2:
                predicted.add(j)
        return compute_cohesion(current, predicted)

    def originate_chirp(self, now: float) -> Chirp:
        self.seq += 1
        return Chirp(self.node_id, self.seq, self.kinematics.position, self.kinematics.velocity,
                     1.0, self.cohesion(now))

    # -- reception ---------------------------------------------------------

    def receive(self, payload: bytes, sender: int, now: float) -> Chirp | None:
        try:
            chirp = Chirp.decode(payload)
        except ChirpDecodeError:
            self.decode_errors += 1
            return None
        return self.handle_chirp(chirp, sender, now)

    def refresh_neighbor(self, chirp: Chirp, sender: int, now: float) -> NeighborRecord:
        me = self.kinematics
        dp = chirp.position - me.position
        dv = chirp.velocity - me.velocity
        let = compute_let(dp, dv, self.link_range, self.tau)
        rec = NeighborRecord(
            neighbor=sender,
            kinematics=KinematicState(chirp.position, chirp.velocity, now),
            predicted_position=chirp.position + chirp.velocity * self.tau,
            cohesion=chirp.cohesion,
            phi_let=phi_let(let, self.tau),
            expiry=now + let,
        )
        self.neighbors[sender] = rec
        return rec

    def handle_chirp(self, chirp: Chirp, sender: int, now: float) -> Chirp | None:
        """Process a received chirp; returns the chirp to re-broadcast, if any."""
        d = chirp.originator
        if d == self.node_id:
            return None
        nb = self.refresh_neighbor(chirp, sender, now)
        key = (d, sender)
        fresh = chirp.seq > self.newest_seq.get(d, 0)
        if fresh:
            self.newest_seq[d] = chirp.seq

        if self.commit_mode == "immediate":
            entry = self.qtable.get(key)
            if entry is not None and chirp.seq < entry.last_seq:
                return None
            q0 = entry.q if entry is not None else 0.0
            q = q_update(q0, self.params, nb.phi_let, nb.cohesion, chirp.value)
            self.qtable[key] = QEntry(q, chirp.seq, nb.expiry)
            self._rebuild_route(d)
        else:
            cand = self.buffer.get(key)
            if cand is None or chirp.seq > cand.seq or (chirp.seq == cand.seq
                                                       and chirp.value > cand.value):
                entry = self.qtable.get(key)
                if entry is not None and chirp.seq < entry.last_seq:
                    return None
                self.buffer[key] = Candidate(chirp.seq, chirp.value, now)
            else:
                return None

        if not fresh:
            return None
        best = self.best_estimate(d, now)
        if best <= 0.0:
            return None
        me = self.kinematics
        return Chirp(d, chirp.seq, me.position, me.velocity, best, self.cohesion(now))

    def temporary_q(self, d: int, j: int, now: float) -> float:
        """Q(d, j) as it would be after committing the buffered candidate."""
        entry = self.qtable.get((d, j))
        committed = entry.q if entry is not None and entry.valid_until >= now else 0.0
        cand = self.buffer.get((d, j))
        nb = self.neighbors.get(j)
        if cand is None or nb is None or self.commit_mode == "immediate":
            return committed
        return q_update(committed, self.params, nb.phi_let, nb.cohesion, cand.value)

    def best_estimate(self, d: int, now: float) -> float:
        best = 0.0
        for j, nb in self.neighbors.items():
            if nb.expiry < now or j == self.node_id:
                continue
            q = self.temporary_q(d, j, now)
            if q > best:
                best = q
        return best

    # -- timer -------------------------------------------------------------

    def commit_tick(self, now: float) -> int:
        """Fold buffered candidates into the Q-table and rebuild routes.

        Returns the number of committed candidates.
        """
        committed = 0
        for (d, j), cand in self.buffer.items():
            nb = self.neighbors.get(j)
            if nb is None or nb.expiry < now or now - cand.received_at > self.tau:
                continue
            entry = self.qtable.get((d, j))
            if entry is not None and cand.seq < entry.last_seq:
                continue
            q0 = entry.q if entry is not None and entry.valid_until >= now else 0.0
            q = q_update(q0, self.params, nb.phi_let, nb.cohesion, cand.value)
            self.qtable[(d, j)] = QEntry(q, cand.seq, nb.expiry)
            committed += 1
        self.buffer.clear()
        self.purge_expired(now)
        self.routes = {}
        for d in {d for d, _ in self.qtable}:
            self._rebuild_route(d)
        return committed

    def _rebuild_route(self, d: int) -> None:
        ranked = sorted((-e.q, j) for (dd, j), e in self.qtable.items() if dd == d and e.q > 0)
        if ranked:
            self.routes[d] = ranked
        else:
            self.routes.pop(d, None)

    def purge_expired(self, now: float) -> tuple[int, int]:
        stale_nb = [j for j, nb in self.neighbors.items() if nb.expiry < now]
        for j in stale_nb:
            del self.neighbors[j]
        stale_q = [k for k, e in self.qtable.items() if e.valid_until < now]
        for k in stale_q:
            del self.qtable[k]
        return len(stale_nb), len(stale_q)

    # -- forwarding --------------------------------------------------------

    def select_next_hop(self, destination: int, now: float) -> int:
        """Greedy choice: highest committed Q among unexpired entries, lowest id on ties."""
        for _, j in self.routes.get(destination, ()):
            entry = self.qtable.get((destination, j))
            if entry is not None and entry.valid_until >= now:
                return j
        raise NoRouteError(f"node {self.node_id} has no route to {destination}")

    def dump_table(self) -> str:
        lines = ["destination\tnext_hop\tq\tlast_seq\tvalid_until"]
        for (d, j), e in sorted(self.qtable.items()):
            lines.append(f"{d}\t{j}\t{e.q:.6f}\t{e.last_seq}\t{e.valid_until:.3f}")
        return "\n".join(lines)
