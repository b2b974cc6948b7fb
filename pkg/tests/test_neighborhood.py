"""Neighbor-table tests: beacon processing, eviction, and equivalence of the
table-derived neighbor/forwarder sets with brute-force geometric evaluation."""

import random

from tdthr.core import PacketClass, Position, dist
from tdthr.estimators import DelayEstimator
from tdthr.neighborhood import (HELLO_HEADER_BYTES, HELLO_NEIGHBOR_ENTRY_BYTES,
                                HELLO_PRR_ENTRY_BYTES, HelloMessage,
                                NeighborTable, TwoHopEntry)

from helpers import (brute_favorable_one_hop, brute_favorable_pairs,
                     build_tables, geometric_one_hop, random_positions)

TX_RANGE = 60.0


def _hello(sender, position, energy=2.0, one_hop=(), reverse_prr=None):
    return HelloMessage(sender=sender, position=position, energy=energy,
                        dq={cls: 0.0 for cls in PacketClass},
                        reverse_prr=reverse_prr or {},
                        one_hop=list(one_hop))


# ---- beacon processing ---------------------------------------------------

def test_first_hello_inserts_record():
    table = NeighborTable(owner=1, expiry=12.5)
    table.process_hello(_hello(2, Position(10, 0), reverse_prr={1: 0.8}), 0.0)
    rec = table.records[2]
    assert rec.position == Position(10, 0)
    assert rec.prr_xy == 0.8
    assert rec.last_heard == 0.0


def test_repeat_hello_refreshes_fields():
    table = NeighborTable(owner=1, expiry=12.5)
    table.process_hello(_hello(2, Position(10, 0), energy=2.0), 0.0)
    table.process_hello(_hello(2, Position(12, 0), energy=1.5,
                               reverse_prr={1: 0.7}), 5.0)
    rec = table.records[2]
    assert rec.energy == 1.5
    assert rec.position == Position(12, 0)
    assert rec.prr_xy == 0.7
    assert rec.last_heard == 5.0


def test_two_hop_entries_exclude_owner():
    table = NeighborTable(owner=1, expiry=12.5)
    entries = [TwoHopEntry(node=n, position=Position(n, 0), dq={}, dt_yz=0.005,
                           prr_yz=0.9, energy=2.0) for n in (1, 3, 4)]
    table.process_hello(_hello(2, Position(10, 0), one_hop=entries), 0.0)
    assert set(table.records[2].two_hop) == {3, 4}


def test_malformed_hello_counted_not_raised():
    table = NeighborTable(owner=1, expiry=12.5)
    table.process_hello("not a hello", 0.0)
    table.process_hello(_hello(1, Position(0, 0)), 0.0)  # own echo
    assert table.records == {}
    assert table.malformed_dropped == 2


def test_silent_neighbor_is_evicted():
    table = NeighborTable(owner=1, expiry=12.5)
    table.process_hello(_hello(2, Position(10, 0)), 0.0)
    assert table.one_hop_set(12.5) == {2}
    assert table.one_hop_set(12.6) == set()
    table.evict_stale(12.6)
    assert table.records == {}


def test_ack_info_refreshes_without_touching_two_hop():
    table = NeighborTable(owner=1, expiry=12.5)
    entries = [TwoHopEntry(node=3, position=Position(20, 0), dq={}, dt_yz=0.005,
                           prr_yz=0.9, energy=2.0)]
    table.process_hello(_hello(2, Position(10, 0), one_hop=entries), 0.0)
    table.process_ack_info(2, Position(10, 0), energy=1.2,
                           dq={PacketClass.REGULAR: 0.01}, prr_xy=0.6, now=3.0)
    rec = table.records[2]
    assert rec.energy == 1.2 and rec.prr_xy == 0.6 and rec.last_heard == 3.0
    assert set(rec.two_hop) == {3}


def test_hello_wire_size():
    hello = _hello(2, Position(0, 0), reverse_prr={1: 0.9, 3: 0.8},
                   one_hop=[TwoHopEntry(node=3, position=Position(1, 1), dq={},
                                        dt_yz=0.005, prr_yz=0.9, energy=2.0)])
    assert hello.size_bytes == (HELLO_HEADER_BYTES + 2 * HELLO_PRR_ENTRY_BYTES
                                + HELLO_NEIGHBOR_ENTRY_BYTES)


# ---- small canonical topologies ------------------------------------------

def test_line_topology_two_hop():
    positions = {0: Position(0, 0), 1: Position(50, 0), 2: Position(100, 0)}
    tables = build_tables(positions, TX_RANGE)
    assert tables[0].one_hop_set(1.0) == {1}
    assert tables[0].two_hop_set(1.0) == {2}


def test_triangle_two_hop_includes_direct_neighbors():
    positions = {0: Position(0, 0), 1: Position(40, 0), 2: Position(20, 30)}
    tables = build_tables(positions, TX_RANGE)
    assert tables[0].one_hop_set(1.0) == {1, 2}
    # a node two hops away may also be one hop away; the sets overlap
    assert tables[0].two_hop_set(1.0) == {1, 2}


def test_isolated_node_has_empty_sets():
    positions = {0: Position(0, 0), 1: Position(500, 500), 2: Position(510, 500)}
    tables = build_tables(positions, TX_RANGE)
    assert tables[0].one_hop_set(1.0) == set()
    assert tables[0].two_hop_set(1.0) == set()


def test_destination_as_second_hop_is_ordinary():
    # x -- y -- D in a line: the (y, D) pair exists with zero distance left
    positions = {0: Position(0, 0), 1: Position(50, 0), 2: Position(100, 0)}
    tables = build_tables(positions, TX_RANGE)
    est = DelayEstimator(dt_prior=0.005)
    pairs = tables[0].favorable_pairs(positions[0], positions[2],
                                      PacketClass.CRITICAL, 0.0, est,
                                      lambda d: 0.01, 1.0)
    assert [(p.y, p.z) for p in pairs] == [(1, 2)]
    assert pairs[0].progress == 100.0


def test_all_neighbors_behind_gives_empty_favorable_set():
    positions = {0: Position(0, 0), 1: Position(30, 0), 2: Position(40, 10)}
    tables = build_tables(positions, TX_RANGE)
    dest = Position(-200, 0)  # destination behind the owner
    assert tables[0].favorable_one_hop(positions[0], dest, 1.0) == []


# ---- brute-force oracle over random topologies ---------------------------

def test_tables_match_geometric_ground_truth():
    """After two loss-free beacon rounds, every derived set equals an
    independent geometric evaluation, on 60 random topologies."""
    _oracle_check(n_topologies=60, seed_base=500)


def _oracle_check(n_topologies: int, seed_base: int):
    for trial in range(n_topologies):
        rng = random.Random(seed_base + trial)
        positions = random_positions(rng)
        n1 = geometric_one_hop(positions, TX_RANGE)
        tables = build_tables(positions, TX_RANGE)
        dest = Position(rng.uniform(0, 250), rng.uniform(0, 250))
        est = DelayEstimator(dt_prior=0.005)
        for x in positions:
            assert tables[x].one_hop_set(1.0) == n1[x]
            expected_two_hop = set().union(*(n1[y] for y in n1[x])) - {x} \
                if n1[x] else set()
            assert tables[x].two_hop_set(1.0) == expected_two_hop
            favorable = {r.neighbor
                         for r in tables[x].favorable_one_hop(positions[x],
                                                              dest, 1.0)}
            assert favorable == brute_favorable_one_hop(positions, n1, x, dest)
            pairs = tables[x].favorable_pairs(
                positions[x], dest, PacketClass.CRITICAL, 0.002, est,
                lambda d: 0.0522 * (d / TX_RANGE) ** 2, 1.0)
            assert ({(p.y, p.z) for p in pairs}
                    == brute_favorable_pairs(positions, n1, x, dest))
            d_x = dist(positions[x], dest)
            for p in pairs:
                assert p.progress == d_x - dist(positions[p.z], dest)
                assert p.progress > 0
                assert p.velocity == p.progress / p.denominator
                # both-hop delay budget: local queue + both links + next queue
                assert p.denominator == 0.002 + 0.005 + 0.002 + 0.005
