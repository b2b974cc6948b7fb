"""Shared test utilities: independent brute-force oracles and canned
configurations.

The oracles here deliberately re-derive every rule from scratch with plain
loops — they must not share logic with the package, or the oracle tests
would only prove the code agrees with itself.
"""

from __future__ import annotations

import random

from tdthr.core import PacketClass, Position, dist
from tdthr.estimators import DelayEstimator
from tdthr.neighborhood import (ForwarderPair, HelloMessage, NeighborTable,
                                TwoHopEntry)
from tdthr.simkernel import SimConfig


# ---- desk-scale configuration -------------------------------------------

def desk_config(**overrides) -> SimConfig:
    """100 nodes on 600x600 m, range 100 m, 120 s: the small field used by
    the trend tests. Sinks sit 80 m in from the corners so they stay
    surrounded by relays; traffic starts after three beacon rounds."""
    cfg = SimConfig(
        node_count=100,
        field_width=600.0,
        field_height=600.0,
        node_density=0.000278,
        sink_inset=80.0,
        tx_range=100.0,
        rate_bytes_per_s=1000.0,
        payload_bytes=150,
        traffic_start=15.0,
        deadline=0.3,
        max_retries=4,
        min_delivery_prob=0.6,
        duration=120.0,
        stop_energy_fraction=0.05,
    )
    for name, value in overrides.items():
        if not hasattr(cfg, name):
            raise AttributeError(f"unknown config field {name}")
        setattr(cfg, name, value)
    return cfg


def mini_config(**overrides) -> SimConfig:
    """A fast variant for plumbing tests (a run takes well under a second)."""
    overrides.setdefault("node_count", 60)
    overrides.setdefault("field_width", 450.0)
    overrides.setdefault("field_height", 450.0)
    overrides.setdefault("node_density", 60 / (450.0 * 450.0))
    overrides.setdefault("sink_inset", 60.0)
    overrides.setdefault("duration", 30.0)
    return desk_config(**overrides)


# ---- random geometric topologies and neighbor tables --------------------

def random_positions(rng: random.Random, max_nodes: int = 50,
                     side: float = 250.0) -> dict:
    n = rng.randint(5, max_nodes)
    return {nid: Position(rng.uniform(0, side), rng.uniform(0, side))
            for nid in range(n)}


def geometric_one_hop(positions: dict, tx_range: float) -> dict:
    """Ground-truth neighbor sets straight from the geometry."""
    return {x: {y for y in positions
                if y != x and dist(positions[x], positions[y]) <= tx_range}
            for x in positions}


def build_tables(positions: dict, tx_range: float,
                 dq_value: float = 0.002, prr_value: float = 0.9,
                 energy: float = 2.0, dt_yz: float = 0.005,
                 expiry: float = 1e9) -> dict:
    """Populate one table per node via two loss-free beacon rounds.

    Round one distributes positions (empty neighbor lists); round two
    carries each sender's freshly learned one-hop list, which becomes the
    receivers' two-hop view — exactly how the live protocol converges.
    """
    n1 = geometric_one_hop(positions, tx_range)
    dq = {cls: dq_value for cls in PacketClass}
    tables = {x: NeighborTable(x, expiry) for x in positions}
    for rnd, now in ((1, 0.0), (2, 1.0)):
        for sender in positions:
            one_hop = []
            if rnd == 2:
                one_hop = [
                    TwoHopEntry(node=rec.neighbor, position=rec.position,
                                dq=dict(rec.dq), dt_yz=dt_yz,
                                prr_yz=rec.prr_xy, energy=rec.energy)
                    for rec in tables[sender].live_records(now)]
            hello = HelloMessage(
                sender=sender, position=positions[sender], energy=energy,
                dq=dict(dq),
                reverse_prr={peer: prr_value for peer in n1[sender]},
                one_hop=one_hop)
            for receiver in n1[sender]:
                tables[receiver].process_hello(hello, now)
    return tables


def brute_favorable_one_hop(positions, n1, x, dest: Position) -> set:
    d_x = dist(positions[x], dest)
    return {y for y in n1[x] if d_x - dist(positions[y], dest) > 0}


def brute_favorable_pairs(positions, n1, x, dest: Position) -> set:
    """All (y, z): y a favorable neighbor of x, z a neighbor of y (z != x)
    strictly closer to the destination than y."""
    pairs = set()
    for y in brute_favorable_one_hop(positions, n1, x, dest):
        d_y = dist(positions[y], dest)
        for z in n1[y]:
            if z == x:
                continue
            if d_y - dist(positions[z], dest) > 0:
                pairs.add((y, z))
    return pairs


# ---- next-hop selection oracle ------------------------------------------

# Discrete value grids so that ties actually occur.
_PROGRESS = (20.0, 40.0, 60.0)
_DENOM = (0.02, 0.04, 0.05)
_PRR = (0.7, 0.8, 0.9, 0.95, 1.0)
_ENERGY = (0.5, 1.0, 1.5, 2.0)
_TX_COST = (0.01, 0.02, 0.04)
_V_REQ = (0.0, 300.0, 500.0, 1000.0, 1500.0, 5000.0)


def random_pair_snapshot(rng: random.Random):
    """A randomized candidate-pair set plus a velocity requirement."""
    pairs = []
    for _ in range(rng.randint(0, 8)):
        progress = rng.choice(_PROGRESS)
        denom = rng.choice(_DENOM)
        pairs.append(ForwarderPair(
            y=rng.randint(3, 9), z=rng.randint(3, 11),
            progress=progress, denominator=denom,
            velocity=progress / denom,
            prr_xy=rng.choice(_PRR), prr_yz=rng.choice(_PRR),
            energy_y=rng.choice(_ENERGY), tx_cost_y=rng.choice(_TX_COST)))
    return pairs, rng.choice(_V_REQ)


def brute_select(pairs, v_req: float, cls: PacketClass, scope: str):
    """Independent re-derivation of the class-differentiated selection.

    Returns the winning (y, z) or None when no pair meets the requirement.
    """
    s_req = [p for p in pairs if p.velocity >= v_req]
    if not s_req:
        return None
    if len(s_req) == 1:
        return (s_req[0].y, s_req[0].z)
    if cls is PacketClass.DELAY_RESPONSIVE:
        # most residual energy; ties: cheapest transmission, then lowest ids
        best = None
        for p in s_req:
            rank = (p.energy_y, -p.tx_cost_y, -p.y, -p.z)
            if best is None or rank > best[0]:
                best = (rank, p)
        return (best[1].y, best[1].z)
    # critical: most reliable, ties by energy per unit cost, then lowest ids
    if scope == "one_hop":
        reliabilities = [p.prr_xy for p in s_req]
    else:
        reliabilities = [p.prr_xy * p.prr_yz for p in s_req]
    top = max(reliabilities)
    s_c = [p for p, r in zip(s_req, reliabilities) if r == top]
    if len(s_c) == 1:
        return (s_c[0].y, s_c[0].z)
    best = None
    for p in s_c:
        rank = (p.energy_y / p.tx_cost_y, -p.y, -p.z)
        if best is None or rank > best[0]:
            best = (rank, p)
    return (best[1].y, best[1].z)


def delay_estimator_with(dt: float, gamma: float = 0.5) -> DelayEstimator:
    return DelayEstimator(gamma=gamma, dt_prior=dt)
