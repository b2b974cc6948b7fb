"""Shared domain types: node ids, positions, packet classes, packets, energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

NodeId = int

# Speed of light, used for propagation delay (negligible at sensor ranges
# but kept so hop timestamps are strictly increasing).
LIGHT_SPEED = 299_792_458.0


class PacketClass(Enum):
    REGULAR = "regular"
    RELIABILITY_RESPONSIVE = "reliability_responsive"
    DELAY_RESPONSIVE = "delay_responsive"
    CRITICAL = "critical"

    @property
    def queue_priority(self) -> int:
        """Scheduling rank: 0 is served first. Reliability-responsive and
        regular traffic share the lowest-priority queue."""
        return _PRIORITY[self]

    def __lt__(self, other: "PacketClass") -> bool:
        if not isinstance(other, PacketClass):
            return NotImplemented
        return self.queue_priority < other.queue_priority


_PRIORITY = {
    PacketClass.CRITICAL: 0,
    PacketClass.DELAY_RESPONSIVE: 1,
    PacketClass.RELIABILITY_RESPONSIVE: 2,
    PacketClass.REGULAR: 2,
}


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("position coordinates must be finite")


def dist(a: Position, b: Position) -> float:
    """Euclidean distance in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


def tx_power_cost(d: float, tx_range: float, alpha: float, cost_tx: float) -> float:
    """Energy cost in joules of one transmission over distance d.

    Free-space model: cost_tx * (d / tx_range)**alpha, so a full-range
    transmission costs exactly the nominal per-packet value.
    """
    if d <= 0:
        raise ValueError(f"transmission distance must be positive, got {d}")
    if d > tx_range:
        raise ValueError(f"distance {d} m exceeds transmission range {tx_range} m")
    return cost_tx * (d / tx_range) ** alpha


@dataclass
class Packet:
    packet_id: int
    cls: PacketClass
    source: NodeId
    destination_sink: NodeId
    lag_time: float            # remaining deadline budget, seconds
    deadline: float            # original end-to-end budget, seconds
    payload_size: int          # bytes
    creation_time: float
    hop_count: int = 0
    duplicate_of: int | None = None
    logical_id: int = -1       # shared across duplicates of one logical packet
    received_time: float = 0.0  # when the current holder received it
    missed_velocity: bool = False
    hop_trace: list = field(default_factory=list)
    recovery_anchor: float | None = None  # distance-to-sink where a detour began

    def __post_init__(self):
        if self.logical_id < 0:
            self.logical_id = self.packet_id
        if self.lag_time > self.deadline + 1e-12:
            raise ValueError("lag time cannot exceed the deadline budget")


@dataclass
class EnergyBudget:
    """Per-node energy accounting in integer nanojoules.

    Integer arithmetic keeps the conservation check exact: initial minus
    residual always equals the sum of logged deductions.
    """
    initial_nj: int
    cost_tx_nj: int
    cost_rx_nj: int
    cost_sleep_nj: int
    cost_idle_nj: int
    spent_nj: int = 0

    @classmethod
    def from_joules(cls, initial, cost_tx, cost_rx, cost_sleep, cost_idle):
        return cls(
            initial_nj=joules_to_nj(initial),
            cost_tx_nj=joules_to_nj(cost_tx),
            cost_rx_nj=joules_to_nj(cost_rx),
            cost_sleep_nj=joules_to_nj(cost_sleep),
            cost_idle_nj=joules_to_nj(cost_idle),
        )

    @property
    def residual_nj(self) -> int:
        return self.initial_nj - self.spent_nj

    @property
    def residual(self) -> float:
        return self.residual_nj / 1e9

    def can_afford(self, cost_nj: int) -> bool:
        return self.residual_nj >= cost_nj

    def deduct(self, cost_nj: int) -> int:
        """Deduct cost, clamped at zero residual. Returns the amount
        actually deducted (for the conservation ledger)."""
        actual = min(cost_nj, self.residual_nj)
        self.spent_nj += actual
        return actual


def joules_to_nj(j: float) -> int:
    return round(j * 1e9)
