"""Traffic-differentiated two-hop QoS routing for wireless sensor networks,
with a deterministic discrete-event simulator and baseline protocols."""

from .core import NodeId, Packet, PacketClass, Position, dist, tx_power_cost
from .estimators import DelayEstimator, PrrEstimator, nodal_delay
from .forwarding import (DeadlineExpired, NoQualifyingPair, VoidRegion,
                         offered_velocity, required_velocity, select_next_hop,
                         update_lag_time)
from .metrics import MetricsLedger
from .neighborhood import ForwarderPair, HelloMessage, NeighborTable
from .queueing import QueueBank
from .simkernel import SimConfig, Simulation, generate_topology, run

__all__ = [
    "NodeId", "Packet", "PacketClass", "Position", "dist", "tx_power_cost",
    "DelayEstimator", "PrrEstimator", "nodal_delay",
    "DeadlineExpired", "NoQualifyingPair", "VoidRegion",
    "offered_velocity", "required_velocity", "select_next_hop",
    "update_lag_time",
    "MetricsLedger", "ForwarderPair", "HelloMessage", "NeighborTable",
    "QueueBank", "SimConfig", "Simulation", "generate_topology", "run",
]

__version__ = "0.1.0"
