"""Deterministic discrete-event engine.

Topology generation, the hidden link ground truth, an idealized contention
MAC with ACKs and retries, energy accounting in integer nanojoules, HELLO
dissemination, traffic generation, and the per-node event loop that wires
the estimators, neighbor tables, forwarding rules and queuing controller
together. The full event trace is a pure function of (config, seed).
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from .core import (LIGHT_SPEED, EnergyBudget, NodeId, Packet, PacketClass,
                   Position, dist)
from .estimators import DelayEstimator, PrrEstimator
from .forwarding import (DeadlineExpired, NoQualifyingPair, VoidRegion,
                         best_effort_pair, required_velocity, route_regular,
                         route_reliability, select_next_hop, update_lag_time)
from .metrics import MetricsLedger
from .neighborhood import HelloMessage, NeighborTable, TwoHopEntry
from .queueing import QueueBank

PROTOCOLS = ("tdthr", "one_hop_velocity", "greedy_geo")

PRIMARY_SINK: NodeId = 0
SECONDARY_SINK: NodeId = 1
SOURCE: NodeId = 2

_TOPOLOGY_RETRIES = 50


@dataclass
class SimConfig:
    # network
    node_count: int = 900
    field_width: float = 1800.0
    field_height: float = 1800.0
    node_density: float = 0.00027
    sink_inset: float = 0.0
    tx_range: float = 100.0
    # traffic
    rate_bytes_per_s: float = 1000.0
    payload_bytes: int = 150
    traffic_start: float = 0.0
    critical_rate: float = 0.0
    delay_responsive_rate: float = 0.0
    reliability_responsive_rate: float = 0.0
    deadline: float = 0.3
    # energy (joules, Table-like per-event constants)
    energy_initial: float = 2.0
    energy_tx: float = 0.0522
    energy_rx: float = 0.0591
    energy_sleep: float = 0.00006
    energy_idle: float = 0.000003
    path_loss_alpha: float = 2.0
    # estimators
    prr_window: int = 30
    prr_beta: float = 0.6
    delay_gamma: float = 0.5
    # protocol
    protocol: str = "tdthr"
    hello_period: float = 5.0
    neighbor_expiry_factor: float = 2.5
    critical_prr_scope: str = "two_hop"
    duplicate_critical: bool = True
    duplicate_reliability: bool = True
    promotion_floor: float = 0.010
    promotion_fraction: float = 0.5
    queue_capacity: int = 64
    # mac / channel
    bandwidth_bps: float = 250000.0
    backoff_window: float = 0.008
    max_retries: int = 3
    ack_bytes: int = 12
    ack_timeout_guard: float = 0.001
    loss_exponent: float = 4.0
    min_delivery_prob: float = 0.1
    # run
    duration: float = 120.0
    rng_seed: int = 1
    audit_period: float = 1.0
    stop_when_partitioned: bool = True
    stop_at_first_death: bool = False
    stop_energy_fraction: float = 0.0
    lifetime_metric: str = "first_death"
    drain_window: float = 0.5

    _SECTIONS = {
        "network": ("node_count", "field_width", "field_height", "node_density",
                    "sink_inset",
                    "tx_range"),
        "traffic": ("rate_bytes_per_s", "payload_bytes", "traffic_start",
                    "critical_rate", "delay_responsive_rate",
                    "reliability_responsive_rate", "deadline"),
        "energy": ("energy_initial", "energy_tx", "energy_rx", "energy_sleep",
                   "energy_idle", "path_loss_alpha"),
        "estimators": ("prr_window", "prr_beta", "delay_gamma"),
        "protocol": ("protocol", "hello_period", "neighbor_expiry_factor",
                     "critical_prr_scope", "duplicate_critical",
                     "duplicate_reliability", "promotion_floor",
                     "promotion_fraction", "queue_capacity"),
        "mac": ("bandwidth_bps", "backoff_window", "max_retries", "ack_bytes",
                "ack_timeout_guard", "loss_exponent", "min_delivery_prob"),
        "run": ("duration", "rng_seed", "audit_period", "stop_when_partitioned",
                "stop_at_first_death", "stop_energy_fraction", "drain_window",
                "lifetime_metric"),
    }

    @staticmethod
    def _attr_name(section: str, key: str) -> str:
        # YAML uses short names inside the energy section (energy.tx etc.)
        if section == "energy" and key != "path_loss_alpha":
            return f"energy_{key}"
        return key

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        kwargs = {}
        for section, entries in data.items():
            if section not in cls._SECTIONS:
                raise ValueError(f"unknown config section {section!r}")
            if not isinstance(entries, dict):
                raise ValueError(f"config section {section!r} must be a mapping")
            for key, value in entries.items():
                attr = cls._attr_name(section, key)
                if attr not in cls._SECTIONS[section]:
                    raise ValueError(f"unknown config field {section}.{key}")
                kwargs[attr] = value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for section, names in self._SECTIONS.items():
            sec = {}
            for name in names:
                key = name[len("energy_"):] if name.startswith("energy_") else name
                sec[key] = getattr(self, name)
            out[section] = sec
        return out

    def validate(self) -> list[str]:
        errors = []

        def check(cond, msg):
            if not cond:
                errors.append(msg)

        check(self.node_count >= 4, "network.node_count: need at least 4 nodes "
              "(two sinks, a source, a relay)")
        check(self.field_width > 0 and self.field_height > 0,
              "network.field dimensions must be positive")
        check(self.tx_range > 0, "network.tx_range must be positive")
        expected = self.node_count / (self.field_width * self.field_height)
        check(abs(expected - self.node_density) <= 0.2 * max(expected, 1e-12),
              f"network.node_density {self.node_density} inconsistent with "
              f"count/area ({expected:.6g}) by more than 20%")
        check(self.rate_bytes_per_s > 0, "traffic.rate_bytes_per_s must be positive")
        check(self.payload_bytes > 0, "traffic.payload_bytes must be positive")
        check(self.traffic_start >= 0, "traffic.traffic_start must be >= 0")
        for name in ("critical_rate", "delay_responsive_rate",
                     "reliability_responsive_rate"):
            v = getattr(self, name)
            check(0.0 <= v <= 1.0, f"traffic.{name} must lie in [0, 1], got {v}")
        mix = (self.critical_rate + self.delay_responsive_rate
               + self.reliability_responsive_rate)
        check(mix <= 1.0 + 1e-9, f"traffic class rates sum to {mix:.6g} > 1")
        check(self.deadline > 0, "traffic.deadline must be positive")
        for name in ("energy_initial", "energy_tx", "energy_rx", "energy_sleep",
                     "energy_idle"):
            check(getattr(self, name) > 0, f"energy.{name} must be positive")
        check(self.path_loss_alpha >= 2, "energy.path_loss_alpha must be >= 2")
        check(self.prr_window >= 1, "estimators.prr_window must be >= 1")
        check(0.0 <= self.prr_beta <= 1.0, "estimators.prr_beta must lie in [0, 1]")
        check(0.0 <= self.delay_gamma <= 1.0,
              "estimators.delay_gamma must lie in [0, 1]")
        check(self.protocol in PROTOCOLS,
              f"protocol.protocol must be one of {PROTOCOLS}")
        check(self.hello_period > 0, "protocol.hello_period must be positive")
        check(self.neighbor_expiry_factor > 1,
              "protocol.neighbor_expiry_factor must exceed 1")
        check(self.critical_prr_scope in ("one_hop", "two_hop"),
              "protocol.critical_prr_scope must be one_hop or two_hop")
        check(self.promotion_floor > 0, "protocol.promotion_floor must be positive")
        check(0 < self.promotion_fraction <= 1,
              "protocol.promotion_fraction must lie in (0, 1]")
        check(self.queue_capacity >= 1, "protocol.queue_capacity must be >= 1")
        check(self.bandwidth_bps > 0, "mac.bandwidth_bps must be positive")
        check(self.backoff_window >= 0, "mac.backoff_window must be >= 0")
        check(self.max_retries >= 0, "mac.max_retries must be >= 0")
        check(self.ack_bytes > 0, "mac.ack_bytes must be positive")
        check(self.loss_exponent > 0, "mac.loss_exponent must be positive")
        check(0 < self.min_delivery_prob <= 1,
              "mac.min_delivery_prob must lie in (0, 1]")
        check(self.duration >= 0, "run.duration must be >= 0")
        check(self.drain_window >= 0, "run.drain_window must be >= 0")
        check(0 <= self.stop_energy_fraction < 1,
              "run.stop_energy_fraction must lie in [0, 1)")
        check(self.lifetime_metric in ("first_death", "partition"),
              "run.lifetime_metric must be first_death or partition")
        check(self.audit_period > 0, "run.audit_period must be positive")
        check(0 <= self.sink_inset < min(self.field_width, self.field_height) / 2,
              "network.sink_inset must be >= 0 and less than half the shorter "
              "field side")
        # sinks live on the field diagonal (corners by default); source at center
        sinks = self.sink_positions
        for name, pos in (("primary sink", (sinks[PRIMARY_SINK].x,
                                            sinks[PRIMARY_SINK].y)),
                          ("secondary sink", (sinks[SECONDARY_SINK].x,
                                              sinks[SECONDARY_SINK].y)),
                          ("source", (self.field_width / 2, self.field_height / 2))):
            ok = 0 <= pos[0] <= self.field_width and 0 <= pos[1] <= self.field_height
            check(ok, f"{name} position {pos} lies outside the field")
        return errors

    @property
    def sink_positions(self) -> dict:
        inset = self.sink_inset
        return {PRIMARY_SINK: Position(inset, inset),
                SECONDARY_SINK: Position(self.field_width - inset,
                                         self.field_height - inset)}

    @property
    def source_position(self) -> Position:
        return Position(self.field_width / 2, self.field_height / 2)

    @property
    def neighbor_expiry(self) -> float:
        return self.neighbor_expiry_factor * self.hello_period

    @property
    def cbr_interval(self) -> float:
        return self.payload_bytes / self.rate_bytes_per_s


def delivery_probability(d: float, cfg: SimConfig) -> float:
    """Hidden per-link delivery probability: degrades with distance, clamped
    to [min_delivery_prob, 1]. Never read by the protocol side."""
    p = 1.0 - (d / cfg.tx_range) ** cfg.loss_exponent
    return min(1.0, max(cfg.min_delivery_prob, p))


def generate_topology(cfg: SimConfig, seed: int) -> dict:
    """Random uniform node placement with fixed sink/source positions.

    Ids 0 and 1 are the primary and secondary sinks, id 2 the source, the
    rest are relays. Regenerates (bounded) until the source can reach both
    sinks over the range graph.
    """
    for attempt in range(_TOPOLOGY_RETRIES):
        rng = random.Random(f"topology:{seed}:{attempt}")
        positions = dict(cfg.sink_positions)
        positions[SOURCE] = cfg.source_position
        for nid in range(3, cfg.node_count):
            positions[nid] = Position(rng.uniform(0.0, cfg.field_width),
                                      rng.uniform(0.0, cfg.field_height))
        if _connected(positions, cfg.tx_range, SOURCE,
                      {PRIMARY_SINK, SECONDARY_SINK}):
            return positions
    raise ValueError(
        f"could not generate a topology connecting the source to both sinks "
        f"after {_TOPOLOGY_RETRIES} attempts (seed {seed}); increase density "
        f"or range")


def _connected(positions, tx_range, start, targets) -> bool:
    ids = sorted(positions)
    frontier = [start]
    seen = {start}
    remaining = set(targets)
    while frontier and remaining:
        nxt = []
        for x in frontier:
            px = positions[x]
            for y in ids:
                if y not in seen and dist(px, positions[y]) <= tx_range:
                    seen.add(y)
                    nxt.append(y)
                    remaining.discard(y)
        frontier = nxt
    return not remaining


class _Node:
    __slots__ = ("id", "pos", "is_sink", "alive", "energy", "table", "delays",
                 "prr_in", "seq_out", "seq_seen", "queues", "busy", "seen_packets")

    def __init__(self, nid, pos, is_sink, cfg: SimConfig):
        self.id = nid
        self.pos = pos
        self.is_sink = is_sink
        self.alive = True
        self.energy = None if is_sink else EnergyBudget.from_joules(
            cfg.energy_initial, cfg.energy_tx, cfg.energy_rx,
            cfg.energy_sleep, cfg.energy_idle)
        self.table = NeighborTable(nid, cfg.neighbor_expiry)
        self.delays = DelayEstimator(
            gamma=cfg.delay_gamma, dq_prior=0.0,
            dt_prior=cfg.payload_bytes * 8 / cfg.bandwidth_bps)
        self.prr_in = {}       # sender -> PrrEstimator (receiver-side)
        self.seq_out = {}      # receiver -> last sequence number sent
        self.seq_seen = {}     # sender -> last sequence number observed
        self.queues = QueueBank(capacity=cfg.queue_capacity,
                                single_queue=cfg.protocol != "tdthr")
        self.busy = False
        self.seen_packets = set()

    @property
    def reported_energy(self) -> float:
        return 1e9 if self.is_sink else self.energy.residual


class _TxState:
    __slots__ = ("packet", "next_hop", "t_s", "attempts", "acked", "done",
                 "delivered_any")

    def __init__(self, packet, next_hop, t_s):
        self.packet = packet
        self.next_hop = next_hop
        self.t_s = t_s
        self.attempts = 0
        self.acked = False
        self.done = False
        self.delivered_any = False


class Simulation:
    """One protocol run. `run()` drives events until the configured duration
    elapses or the source node dies."""

    def __init__(self, cfg: SimConfig, trace=None):
        errors = cfg.validate()
        if errors:
            raise ValueError("invalid configuration: " + "; ".join(errors))
        self.cfg = cfg
        self.rng = random.Random(f"run:{cfg.rng_seed}")
        self.positions = generate_topology(cfg, cfg.rng_seed)
        self.nodes = {
            nid: _Node(nid, pos, nid in (PRIMARY_SINK, SECONDARY_SINK), cfg)
            for nid, pos in sorted(self.positions.items())}
        self.link_prob = {}
        self.adjacency = {nid: [] for nid in self.nodes}
        ids = sorted(self.nodes)
        for x in ids:
            for y in ids:
                if x == y:
                    continue
                d = dist(self.positions[x], self.positions[y])
                if d <= cfg.tx_range:
                    self.link_prob[(x, y)] = delivery_probability(d, cfg)
                    self.adjacency[x].append(y)
        self.metrics = MetricsLedger()
        self.metrics.lifetime_metric = cfg.lifetime_metric
        self.trace = trace                     # file-like or None
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self._next_packet_id = 0
        self._next_logical_id = 0
        self._drain_until = None
        self._payload_ser = cfg.payload_bytes * 8 / cfg.bandwidth_bps
        self._ack_ser = cfg.ack_bytes * 8 / cfg.bandwidth_bps
        self._schedule_initial()

    # ---- event plumbing --------------------------------------------------

    def _schedule(self, t, kind, *payload):
        if t < self.now - 1e-12:
            raise RuntimeError(f"event {kind} scheduled in the past ({t} < {self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def _log(self, node, kind, packet_id="-", detail=""):
        if self.trace is not None:
            self.trace.write(f"{self.now:.9f} {node} {kind} {packet_id} {detail}\n")

    def _schedule_initial(self):
        cfg = self.cfg
        for nid in sorted(self.nodes):
            offset = self.rng.uniform(0.0, cfg.hello_period)
            self._schedule(offset, "hello", nid)
        self._schedule(cfg.traffic_start, "cbr")
        self._schedule(cfg.audit_period, "audit")

    def run(self) -> MetricsLedger:
        duration = self.cfg.duration
        while self._heap:
            t, _, kind, payload = heapq.heappop(self._heap)
            if t > duration or (self._drain_until is not None
                                and t > self._drain_until):
                break
            self.now = t
            getattr(self, "_ev_" + kind)(*payload)
        self.now = min(self.now, duration)
        return self.metrics

    # ---- energy / death --------------------------------------------------

    def _charge(self, node: _Node, cost_nj: int):
        if node.is_sink:
            return
        self.metrics.record_energy(node.energy.deduct(cost_nj))
        if (self.cfg.stop_energy_fraction > 0 and self._drain_until is None
                and node.energy.residual_nj
                < self.cfg.stop_energy_fraction * node.energy.initial_nj):
            self._log(node.id, "energy_low")
            self._begin_drain()

    def _die(self, node: _Node):
        if not node.alive:
            return
        node.alive = False
        self.metrics.record_death(self.now)
        self._log(node.id, "death")
        for packet in node.queues.flush():
            self._drop(packet, "dead_node", node.id)
        if node.id == SOURCE or self.cfg.stop_at_first_death:
            self._begin_drain()
        elif not self._sinks_reachable():
            self.metrics.record_partition(self.now)
            self._log(node.id, "partitioned")
            if self.cfg.stop_when_partitioned:
                self._begin_drain()

    def _begin_drain(self):
        """Stop traffic generation; let in-flight packets settle briefly so
        the reception ratio is not censored by an abrupt halt."""
        if self._drain_until is None:
            self._drain_until = self.now + self.cfg.drain_window

    def _sinks_reachable(self) -> bool:
        """True while an all-alive path links the source to either sink."""
        frontier = [SOURCE]
        seen = {SOURCE}
        while frontier:
            nxt = []
            for x in frontier:
                for y in self.adjacency[x]:
                    if y in seen or not self.nodes[y].alive:
                        continue
                    if y in (PRIMARY_SINK, SECONDARY_SINK):
                        return True
                    seen.add(y)
                    nxt.append(y)
            frontier = nxt
        return False

    def _tx_cost_nj(self, node: _Node, d: float) -> int:
        frac = (d / self.cfg.tx_range) ** self.cfg.path_loss_alpha
        return round(node.energy.cost_tx_nj * frac)

    def _tx_cost_j(self, d: float) -> float:
        return self.cfg.energy_tx * (d / self.cfg.tx_range) ** self.cfg.path_loss_alpha

    # ---- sequence-number reception accounting ----------------------------

    def _note_reception(self, receiver: _Node, sender: NodeId, seq: int):
        est = receiver.prr_in.get(sender)
        if est is None:
            est = PrrEstimator(window=self.cfg.prr_window, beta=self.cfg.prr_beta)
            receiver.prr_in[sender] = est
        last = receiver.seq_seen.get(sender, 0)
        for _ in range(max(0, seq - last - 1)):
            est.record(False)
        est.record(True)
        receiver.seq_seen[sender] = max(last, seq)

    def _next_seq(self, sender: _Node, receiver: NodeId) -> int:
        seq = sender.seq_out.get(receiver, 0) + 1
        sender.seq_out[receiver] = seq
        return seq

    def _prop(self, x: NodeId, y: NodeId) -> float:
        return dist(self.positions[x], self.positions[y]) / LIGHT_SPEED

    # ---- HELLO dissemination ---------------------------------------------

    def _ev_hello(self, nid: NodeId):
        node = self.nodes[nid]
        if not node.alive:
            return
        cfg = self.cfg
        node.table.evict_stale(self.now)
        if not node.is_sink:
            if not node.energy.can_afford(node.energy.cost_idle_nj):
                self._charge(node, node.energy.cost_idle_nj)
                self._die(node)
                return
            self._charge(node, node.energy.cost_idle_nj)
        hello = self._build_hello(node)
        self.metrics.hello_sent += 1
        ser = hello.size_bytes * 8 / cfg.bandwidth_bps
        for peer in self.adjacency[nid]:
            seq = self._next_seq(node, peer)
            if self.rng.random() < self.link_prob[(nid, peer)]:
                self._schedule(self.now + ser + self._prop(nid, peer),
                               "hello_rx", peer, nid, hello, seq)
        self._log(nid, "hello")
        self._schedule(self.now + cfg.hello_period, "hello", nid)

    def _build_hello(self, node: _Node) -> HelloMessage:
        one_hop = [
            TwoHopEntry(node=rec.neighbor, position=rec.position,
                        dq=dict(rec.dq), dt_yz=node.delays.dt_for(rec.neighbor),
                        prr_yz=rec.prr_xy, energy=rec.energy)
            for rec in node.table.live_records(self.now)]
        return HelloMessage(
            sender=node.id, position=node.pos, energy=node.reported_energy,
            dq={cls: node.delays.dq_for(cls) for cls in PacketClass},
            reverse_prr={s: est.prr for s, est in sorted(node.prr_in.items())},
            one_hop=one_hop)

    def _ev_hello_rx(self, receiver_id: NodeId, sender_id: NodeId,
                     hello: HelloMessage, seq: int):
        node = self.nodes[receiver_id]
        if not node.alive:
            return
        if not node.is_sink:
            if not node.energy.can_afford(node.energy.cost_idle_nj):
                self._charge(node, node.energy.cost_idle_nj)
                self._die(node)
                return
            self._charge(node, node.energy.cost_idle_nj)
        self._note_reception(node, sender_id, seq)
        node.table.process_hello(hello, self.now)

    # ---- traffic generation ----------------------------------------------

    def _ev_cbr(self):
        cfg = self.cfg
        source = self.nodes[SOURCE]
        if not source.alive or self._drain_until is not None:
            return
        cls = self._draw_class()
        sinks = cfg.sink_positions
        d_primary = dist(self.positions[SOURCE], sinks[PRIMARY_SINK])
        d_secondary = dist(self.positions[SOURCE], sinks[SECONDARY_SINK])
        if abs(d_primary - d_secondary) < 1e-9:
            # exactly equidistant (centered source): alternate to spread load
            nearest = PRIMARY_SINK if self._next_logical_id % 2 == 0 else SECONDARY_SINK
        else:
            nearest = PRIMARY_SINK if d_primary <= d_secondary else SECONDARY_SINK
        other = SECONDARY_SINK if nearest == PRIMARY_SINK else PRIMARY_SINK
        logical = self._next_logical_id
        self._next_logical_id += 1
        first = self._make_packet(cls, nearest, logical, duplicate_of=None)
        copies = [first]
        duplicated = (cfg.protocol == "tdthr"
                      and ((cls is PacketClass.CRITICAL and cfg.duplicate_critical)
                           or (cls is PacketClass.RELIABILITY_RESPONSIVE
                               and cfg.duplicate_reliability)))
        if duplicated:
            copies.append(self._make_packet(cls, other, logical,
                                            duplicate_of=first.packet_id))
            self.metrics.duplicates_generated += 1
        self.metrics.record_generated(logical, cls, self.now,
                                      [p.packet_id for p in copies])
        self._log(SOURCE, "generated", logical, cls.value)
        for packet in copies:
            self._accept_packet(source, packet)
        self._schedule(self.now + cfg.cbr_interval, "cbr")

    def _draw_class(self) -> PacketClass:
        cfg = self.cfg
        u = self.rng.random()
        if u < cfg.critical_rate:
            return PacketClass.CRITICAL
        u -= cfg.critical_rate
        if u < cfg.delay_responsive_rate:
            return PacketClass.DELAY_RESPONSIVE
        u -= cfg.delay_responsive_rate
        if u < cfg.reliability_responsive_rate:
            return PacketClass.RELIABILITY_RESPONSIVE
        return PacketClass.REGULAR

    def _make_packet(self, cls, sink, logical, duplicate_of) -> Packet:
        pid = self._next_packet_id
        self._next_packet_id += 1
        return Packet(packet_id=pid, cls=cls, source=SOURCE,
                      destination_sink=sink, lag_time=self.cfg.deadline,
                      deadline=self.cfg.deadline,
                      payload_size=self.cfg.payload_bytes,
                      creation_time=self.now, duplicate_of=duplicate_of,
                      logical_id=logical, received_time=self.now)

    # ---- queueing --------------------------------------------------------

    def _accept_packet(self, node: _Node, packet: Packet):
        """Enqueue at `node` and kick the transmitter."""
        cfg = self.cfg
        timer = None
        if cfg.protocol == "tdthr" and packet.cls is not PacketClass.CRITICAL:
            timer = self.now + max(cfg.promotion_floor,
                                   cfg.promotion_fraction * packet.lag_time)
        if not node.queues.enqueue(packet, self.now, timer):
            self._drop(packet, "queue_full", node.id)
            return
        if timer is not None:
            self._schedule(timer, "promo", node.id, packet.packet_id)
        self._schedule(self.now, "kick", node.id)

    def _ev_promo(self, nid: NodeId, packet_id: int):
        node = self.nodes[nid]
        if node.alive and node.queues.on_timer_expire(packet_id, self.now):
            self.metrics.promotions += 1
            self._log(nid, "promoted", packet_id)

    def _ev_kick(self, nid: NodeId):
        node = self.nodes[nid]
        if not node.alive or node.busy:
            return
        item = node.queues.dequeue_next(self.now)
        if item is None:
            return
        packet, wait = item
        node.busy = True
        self._start_tx(node, packet, wait)

    def _finish_tx(self, node: _Node):
        node.busy = False
        if node.alive:
            self._schedule(self.now, "kick", node.id)

    # ---- forwarding decision ---------------------------------------------

    def _start_tx(self, node: _Node, packet: Packet, queue_wait: float):
        cfg = self.cfg
        node.delays.dq_update(packet.cls, queue_wait)
        try:
            packet.lag_time = update_lag_time(
                packet.lag_time, packet.received_time, self.now,
                packet.payload_size, cfg.bandwidth_bps)
        except DeadlineExpired:
            # Only the deadline-bound classes of the two-hop protocol discard
            # expired packets in-network; everything else is delivered late
            # (and scored as a deadline miss at the sink).
            if cfg.protocol == "tdthr" and packet.cls in (
                    PacketClass.CRITICAL, PacketClass.DELAY_RESPONSIVE):
                self._drop(packet, "deadline", node.id)
                self._finish_tx(node)
                return
            packet.lag_time = 0.0
        try:
            next_hop = self._select(node, packet)
        except VoidRegion:
            self._drop(packet, "void", node.id)
            self._finish_tx(node)
            return
        state = _TxState(packet, next_hop, t_s=self.now)
        self._begin_attempt(node, state)

    def _select(self, node: _Node, packet: Packet) -> NodeId:
        cfg = self.cfg
        dest = packet.destination_sink
        dest_pos = self.positions[dest]
        live = node.table.live_records(self.now)
        if any(r.neighbor == dest for r in live):
            return dest
        f1 = [(r.neighbor, dist(node.pos, dest_pos) - dist(r.position, dest_pos))
              for r in node.table.favorable_one_hop(node.pos, dest_pos, self.now)]
        if cfg.protocol == "greedy_geo":
            return route_regular(f1)
        if cfg.protocol == "one_hop_velocity":
            return self._select_one_hop_velocity(node, packet, dest_pos, f1)
        # tdthr
        if packet.recovery_anchor is not None:
            if dist(node.pos, dest_pos) < packet.recovery_anchor:
                packet.recovery_anchor = None  # escaped the dead-end region
            else:
                return self._detour(node, packet, dest_pos)
        cls = packet.cls
        if cls is PacketClass.REGULAR:
            return self._route_or_detour(node, packet, f1, dest_pos)
        pairs = node.table.favorable_pairs(
            node.pos, dest_pos, cls, node.delays.dq_for(cls), node.delays,
            self._tx_cost_j, self.now)
        if cls is PacketClass.RELIABILITY_RESPONSIVE:
            fallback = [(r.neighbor, r.prr_xy)
                        for r in node.table.favorable_one_hop(node.pos, dest_pos,
                                                              self.now)]
            try:
                return route_reliability(pairs, fallback)
            except VoidRegion:
                return self._detour(node, packet, dest_pos)
        # critical / delay-responsive: velocity-filtered two-hop selection
        v_req = required_velocity(dist(node.pos, dest_pos), packet.lag_time)
        try:
            return select_next_hop(pairs, v_req, cls, cfg.critical_prr_scope).y
        except NoQualifyingPair:
            if pairs:
                packet.missed_velocity = True
                self.metrics.missed_velocity += 1
                return best_effort_pair(pairs).y
            return self._route_or_detour(node, packet, f1, dest_pos)

    def _route_or_detour(self, node, packet, f1, dest_pos) -> NodeId:
        try:
            return route_regular(f1)
        except VoidRegion:
            return self._detour(node, packet, dest_pos)

    def _detour(self, node: _Node, packet: Packet, dest_pos) -> NodeId:
        """Local-minimum escape: no live neighbor offers positive progress, so
        hand the packet to the neighbor closest to the destination that it has
        not visited yet. The packet stays in recovery mode until it gets
        strictly closer to the destination than where the detour began; the
        hop trace breaks routing loops and the deadline bounds the
        excursion."""
        if packet.recovery_anchor is None:
            packet.recovery_anchor = dist(node.pos, dest_pos)
        visited = {nid for nid, _ in packet.hop_trace}
        visited.add(node.id)
        candidates = [(dist(r.position, dest_pos), r.neighbor)
                      for r in node.table.live_records(self.now)
                      if r.neighbor not in visited]
        if not candidates:
            raise VoidRegion("no unvisited neighbor for detour")
        return min(candidates)[1]

    def _select_one_hop_velocity(self, node, packet, dest_pos, f1) -> NodeId:
        if not f1:
            raise VoidRegion("no favorable one-hop forwarder")
        speeds = [(nid, progress / node.delays.dt_for(nid))
                  for nid, progress in f1]
        if packet.lag_time > 0:
            v_req = required_velocity(dist(node.pos, dest_pos), packet.lag_time)
            qualifying = [s for s in speeds if s[1] >= v_req]
        else:
            qualifying = []
        if not qualifying:
            packet.missed_velocity = True
            self.metrics.missed_velocity += 1
            qualifying = speeds
        return min(qualifying, key=lambda s: (-s[1], s[0]))[0]

    # ---- MAC: attempts, ACKs, retries ------------------------------------

    def _begin_attempt(self, node: _Node, state: _TxState):
        cfg = self.cfg
        packet = state.packet
        peer = state.next_hop
        d = dist(node.pos, self.positions[peer])
        if not node.is_sink:
            cost = self._tx_cost_nj(node, d)
            if not node.energy.can_afford(cost):
                self._die(node)
                if not state.delivered_any:
                    self._drop(packet, "dead_node", node.id)
                return
            self._charge(node, cost)
        state.attempts += 1
        self.metrics.data_attempts += 1
        seq = self._next_seq(node, peer)
        backoff = self.rng.uniform(0.0, cfg.backoff_window)
        arrival = self.now + backoff + self._payload_ser + self._prop(node.id, peer)
        delivered = self.rng.random() < self.link_prob[(node.id, peer)]
        self._log(node.id, "tx_attempt", packet.packet_id,
                  f"to={peer} n={state.attempts} seq={seq}")
        if delivered:
            self._schedule(arrival, "data_rx", peer, node.id, state, seq)
        timeout = (arrival + self._ack_ser + self._prop(node.id, peer)
                   + cfg.ack_timeout_guard)
        self._schedule(timeout, "ack_timeout", node.id, state)

    def _ev_data_rx(self, receiver_id: NodeId, sender_id: NodeId,
                    state: _TxState, seq: int):
        receiver = self.nodes[receiver_id]
        if not receiver.alive:
            return
        if not receiver.is_sink:
            if not receiver.energy.can_afford(receiver.energy.cost_rx_nj):
                self._charge(receiver, receiver.energy.cost_rx_nj)
                self._die(receiver)
                return
            self._charge(receiver, receiver.energy.cost_rx_nj)
        self._note_reception(receiver, sender_id, seq)
        state.delivered_any = True
        packet = state.packet
        fresh = packet.packet_id not in receiver.seen_packets
        if fresh:
            receiver.seen_packets.add(packet.packet_id)
            self._log(receiver_id, "data_rx", packet.packet_id, f"from={sender_id}")
        # ACK back (control-plane energy, idle rate), subject to reverse loss
        if self.rng.random() < self.link_prob[(receiver_id, sender_id)]:
            ack_t = self.now + self._ack_ser + self._prop(receiver_id, sender_id)
            self._schedule(ack_t, "ack_rx", sender_id, receiver_id, state)
        if not receiver.is_sink:
            self._charge(receiver, receiver.energy.cost_idle_nj)
        if not fresh:
            return
        if receiver.is_sink:
            self.metrics.record_delivery(packet.logical_id, packet.packet_id,
                                         self.now, packet.deadline)
            self._log(receiver_id, "delivered", packet.packet_id,
                      f"class={packet.cls.value}")
            return
        packet.hop_count += 1
        packet.received_time = self.now
        packet.hop_trace.append((receiver_id, self.now))
        self._accept_packet(receiver, packet)

    def _ev_ack_rx(self, sender_id: NodeId, receiver_id: NodeId, state: _TxState):
        node = self.nodes[sender_id]
        if not node.alive or state.done:
            return
        if not node.is_sink:
            self._charge(node, node.energy.cost_idle_nj)
        state.acked = True
        state.done = True
        peer = self.nodes[receiver_id]
        node.delays.dt_update(receiver_id, state.t_s, self.now,
                              self.cfg.ack_bytes, self.cfg.bandwidth_bps)
        # piggybacked state of the ACKing node
        rev = peer.prr_in.get(sender_id)
        node.table.process_ack_info(
            receiver_id, peer.pos, peer.reported_energy,
            {cls: peer.delays.dq_for(cls) for cls in PacketClass},
            rev.prr if rev is not None else None, self.now)
        self._log(sender_id, "ack_rx", state.packet.packet_id, f"from={receiver_id}")
        self._finish_tx(node)

    def _ev_ack_timeout(self, sender_id: NodeId, state: _TxState):
        if state.acked or state.done:
            return
        node = self.nodes[sender_id]
        if not node.alive:
            state.done = True
            if not state.delivered_any:
                self._drop(state.packet, "dead_node", sender_id)
            return
        if state.attempts > self.cfg.max_retries:
            state.done = True
            self._log(sender_id, "hop_failed", state.packet.packet_id,
                      f"to={state.next_hop}")
            # unreachable-neighbor detection: a hop that never ACKed is
            # dropped from the table until its next HELLO revives it
            node.table.records.pop(state.next_hop, None)
            if not state.delivered_any:
                self._drop(state.packet, "retries_exhausted", sender_id)
            self._finish_tx(node)
            return
        self._begin_attempt(node, state)

    # ---- housekeeping ----------------------------------------------------

    def _ev_audit(self):
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.is_sink or not node.alive:
                continue
            cost = node.energy.cost_idle_nj
            affordable = node.energy.can_afford(cost)
            self._charge(node, cost)
            if not affordable:
                self._die(node)
        if self._drain_until is None:
            self._schedule(self.now + self.cfg.audit_period, "audit")

    def _drop(self, packet: Packet, cause: str, nid: NodeId):
        self.metrics.record_copy_lost(packet.logical_id, packet.packet_id,
                                      packet.cls, cause)
        self._log(nid, "drop", packet.packet_id, cause)

    # ---- verification hooks ----------------------------------------------

    def energy_spent_by_nodes_nj(self) -> int:
        return sum(self.nodes[nid].energy.spent_nj
                   for nid in sorted(self.nodes) if not self.nodes[nid].is_sink)

    def initial_minus_residual_nj(self) -> int:
        return sum(self.nodes[nid].energy.initial_nj
                   - self.nodes[nid].energy.residual_nj
                   for nid in sorted(self.nodes) if not self.nodes[nid].is_sink)


def run(cfg: SimConfig, trace=None) -> MetricsLedger:
    sim = Simulation(cfg, trace=trace)
    return sim.run()
