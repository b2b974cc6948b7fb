"""One- and two-hop neighbor tables maintained from HELLO beacons and
ACK piggybacking, plus the favorable-forwarder set computations.

A node x learns about neighbor y from y's periodic HELLO: y's position,
residual energy, per-class queuing-delay estimates, the reliability y
measured on the link x->y, and y's own one-hop list (which gives x its
two-hop view). ACKs refresh the ACKing node's own fields between HELLOs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import NodeId, PacketClass, Position, dist

# Simulated wire sizes (bytes) for energy/overhead accounting.
HELLO_HEADER_BYTES = 4 + 8 + 4 + 16      # sender id, position, energy, 4x dq
HELLO_PRR_ENTRY_BYTES = 6
HELLO_NEIGHBOR_ENTRY_BYTES = 26


@dataclass
class TwoHopEntry:
    """What neighbor y reports about its own neighbor z."""
    node: NodeId
    position: Position
    dq: dict                 # PacketClass -> seconds, z's queuing estimates
    dt_yz: float             # y's transmission-delay estimate toward z
    prr_yz: float            # reliability of link y->z as reported to y
    energy: float


@dataclass
class HelloMessage:
    sender: NodeId
    position: Position
    energy: float
    dq: dict                           # sender's per-class queuing estimates
    reverse_prr: dict                  # NodeId -> prr of link (that node -> sender)
    one_hop: list                      # list[TwoHopEntry]
    seq: int = 0

    @property
    def size_bytes(self) -> int:
        return (HELLO_HEADER_BYTES
                + HELLO_PRR_ENTRY_BYTES * len(self.reverse_prr)
                + HELLO_NEIGHBOR_ENTRY_BYTES * len(self.one_hop))


@dataclass
class NeighborRecord:
    neighbor: NodeId
    position: Position
    prr_xy: float            # as last reported by the neighbor (receiver side)
    dq: dict                 # neighbor's per-class queuing estimates
    energy: float
    last_heard: float
    two_hop: dict = field(default_factory=dict)   # NodeId -> TwoHopEntry


@dataclass
class ForwarderPair:
    """A candidate (first hop y, second hop z) with its routing metrics."""
    y: NodeId
    z: NodeId
    progress: float          # dist(x, D) - dist(z, D), meters
    denominator: float       # dq_x + dt_xy + dq_y + dt_yz, seconds
    velocity: float          # progress / denominator, m/s
    prr_xy: float
    prr_yz: float
    energy_y: float
    tx_cost_y: float         # energy cost of the x->y transmission

    @property
    def prr_path(self) -> float:
        return self.prr_xy * self.prr_yz

    @property
    def power_score(self) -> float:
        """Higher is better: residual energy per unit transmission cost."""
        return self.energy_y / self.tx_cost_y


class NeighborTable:
    """Per-node neighbor state. Records expire if no HELLO (or ACK) is
    heard within `expiry` seconds."""

    def __init__(self, owner: NodeId, expiry: float):
        self.owner = owner
        self.expiry = expiry
        self.records: dict[NodeId, NeighborRecord] = {}
        self.malformed_dropped = 0

    def process_hello(self, hello, now: float) -> None:
        if not self._well_formed(hello):
            self.malformed_dropped += 1
            return
        rec = self.records.get(hello.sender)
        if rec is None:
            rec = NeighborRecord(
                neighbor=hello.sender, position=hello.position,
                prr_xy=hello.reverse_prr.get(self.owner, 1.0),
                dq=dict(hello.dq), energy=hello.energy, last_heard=now)
            self.records[hello.sender] = rec
        else:
            rec.position = hello.position
            rec.dq = dict(hello.dq)
            rec.energy = hello.energy
            rec.last_heard = now
            if self.owner in hello.reverse_prr:
                rec.prr_xy = hello.reverse_prr[self.owner]
        rec.two_hop = {e.node: e for e in hello.one_hop if e.node != self.owner}

    def process_ack_info(self, sender: NodeId, position: Position, energy: float,
                         dq: dict, prr_xy: float | None, now: float) -> None:
        """ACK piggyback: refresh the ACKing node's own fields only."""
        rec = self.records.get(sender)
        if rec is None:
            rec = NeighborRecord(neighbor=sender, position=position,
                                 prr_xy=prr_xy if prr_xy is not None else 1.0,
                                 dq=dict(dq), energy=energy, last_heard=now)
            self.records[sender] = rec
            return
        rec.energy = energy
        rec.dq = dict(dq)
        rec.last_heard = now
        if prr_xy is not None:
            rec.prr_xy = prr_xy

    def _well_formed(self, hello) -> bool:
        return (isinstance(hello, HelloMessage)
                and hello.sender != self.owner
                and hello.position is not None)

    def evict_stale(self, now: float) -> None:
        stale = [n for n, r in self.records.items() if now - r.last_heard > self.expiry]
        for n in stale:
            del self.records[n]

    def live_records(self, now: float):
        return [r for r in self.records.values() if now - r.last_heard <= self.expiry]

    def one_hop_set(self, now: float) -> set:
        return {r.neighbor for r in self.live_records(now)}

    def two_hop_set(self, now: float) -> set:
        out = set()
        for r in self.live_records(now):
            out.update(r.two_hop.keys())
        out.discard(self.owner)
        return out

    def favorable_one_hop(self, own_pos: Position, dest_pos: Position, now: float):
        """Neighbors strictly closer to the destination than the owner."""
        d_own = dist(own_pos, dest_pos)
        return [r for r in self.live_records(now)
                if d_own - dist(r.position, dest_pos) > 0]

    def favorable_pairs(self, own_pos: Position, dest_pos: Position,
                        cls: PacketClass, dq_x: float, delays, tx_cost, now: float):
        """All (y, z) forwarder pairs with positive progress at both hops.

        `delays` supplies dt_for(neighbor); `tx_cost(distance)` prices the
        first-hop transmission for the power score.
        """
        d_own = dist(own_pos, dest_pos)
        pairs = []
        for rec in self.favorable_one_hop(own_pos, dest_pos, now):
            d_y = dist(rec.position, dest_pos)
            dt_xy = delays.dt_for(rec.neighbor)
            cost_y = tx_cost(dist(own_pos, rec.position))
            dq_y = rec.dq.get(cls, 0.0)
            for z, entry in rec.two_hop.items():
                d_z = dist(entry.position, dest_pos)
                if d_y - d_z <= 0:
                    continue
                progress = d_own - d_z
                denom = dq_x + dt_xy + dq_y + entry.dt_yz
                if denom <= 0:
                    raise ZeroDivisionError(
                        f"zero delay denominator for pair ({rec.neighbor},{z})")
                pairs.append(ForwarderPair(
                    y=rec.neighbor, z=z, progress=progress, denominator=denom,
                    velocity=progress / denom, prr_xy=rec.prr_xy,
                    prr_yz=entry.prr_yz, energy_y=rec.energy, tx_cost_y=cost_y))
        return pairs
