"""Per-node queuing controller: three strict-priority FIFO queues with
timer-based promotion of aged non-critical packets into the critical queue.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .core import Packet, PacketClass

CRITICAL_Q = "critical"
DELAY_Q = "delay"
RELIABILITY_Q = "reliability"

_QUEUE_ORDER = (CRITICAL_Q, DELAY_Q, RELIABILITY_Q)


@dataclass
class QueueEntry:
    packet: Packet
    enqueue_time: float
    timer_deadline: float | None   # None for critical-queue packets


class QueueBank:
    """Strict-priority scheduler. `single_queue=True` collapses everything
    into one FIFO with no promotion (used by the baseline protocols)."""

    def __init__(self, capacity: int = 64, single_queue: bool = False):
        self.capacity = capacity
        self.single_queue = single_queue
        self.queues = {name: deque() for name in _QUEUE_ORDER}
        self.drops = {cls: 0 for cls in PacketClass}
        self.promotions = 0
        self.enqueued = 0
        self.dequeued = 0

    def _target_queue(self, cls: PacketClass) -> str:
        if self.single_queue:
            return RELIABILITY_Q
        if cls is PacketClass.CRITICAL:
            return CRITICAL_Q
        if cls is PacketClass.DELAY_RESPONSIVE:
            return DELAY_Q
        return RELIABILITY_Q

    def enqueue(self, packet: Packet, now: float, timer_deadline: float | None) -> bool:
        """Returns False on tail drop (queue full). Non-critical packets get
        a promotion timer; the caller is responsible for scheduling its
        expiry event."""
        name = self._target_queue(packet.cls)
        q = self.queues[name]
        if len(q) >= self.capacity:
            self.drops[packet.cls] += 1
            return False
        if name == CRITICAL_Q or self.single_queue:
            timer_deadline = None
        q.append(QueueEntry(packet, now, timer_deadline))
        self.enqueued += 1
        return True

    def dequeue_next(self, now: float):
        """Head of the first non-empty queue in priority order, with the
        realized queue wait (the packet's queuing-delay sample). The
        promotion timer, if still armed, is implicitly cancelled because the
        packet leaves the bank."""
        for name in _QUEUE_ORDER:
            q = self.queues[name]
            if q:
                entry = q.popleft()
                self.dequeued += 1
                return entry.packet, now - entry.enqueue_time
        return None

    def on_timer_expire(self, packet_id: int, now: float) -> bool:
        """Move an aged packet to the tail of the critical queue. A timer
        that raced with (and lost to) a dequeue is a no-op."""
        for name in (DELAY_Q, RELIABILITY_Q):
            q = self.queues[name]
            for i, entry in enumerate(q):
                if entry.packet.packet_id == packet_id:
                    del q[i]
                    entry.timer_deadline = None
                    self.queues[CRITICAL_Q].append(entry)
                    self.promotions += 1
                    return True
        return False

    def flush(self):
        """Empties every queue and returns the stranded packets (a node
        going down takes its backlog with it)."""
        stranded = []
        for name in _QUEUE_ORDER:
            q = self.queues[name]
            stranded.extend(entry.packet for entry in q)
            q.clear()
        return stranded

    def __len__(self) -> int:
        return sum(len(q) for q in self.queues.values())

    @property
    def total_drops(self) -> int:
        return sum(self.drops.values())
