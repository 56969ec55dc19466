"""Slotted simulation of wireless network capacity: eta = E(Y) * W / k.

Static, mobile, multicast and hybrid (infrastructure) scenarios share one
engine; the analysis layer sweeps a parameter and fits the log-log slope.
"""

from .analysis import (
    ScalingFit,
    SweepSpec,
    aggregate,
    loglog_fit,
    scenario_report,
    sweep,
)
from .engine import (
    HYBRID,
    MOBILE,
    MULTICAST,
    STATIC,
    MetricsRecord,
    SimConfig,
    StabilityReport,
    UnstableRunError,
    measure_capacity,
    measure_EY,
    measure_k,
    mobility_step,
    per_pair_throughput,
    run,
    stability_check,
    verify_identity,
)
from .geometry import (
    Placement,
    Point,
    euclidean_mst,
    nearest_node,
    place_grid,
    place_uniform,
)
from .interference import Link, RadioModel, Slot, conflict, greedy_slot, packing_upper_bound
from .topology import RangeGraph, avg_hop_count, build_range_graph, min_connectivity_range
from .traffic import (
    FlowSpec,
    HybridConfig,
    MulticastGroup,
    Route,
    gen_multicast_groups,
    gen_unicast_pairs,
    hybrid_route,
    route_multicast,
    route_static,
    two_hop_policy,
)

__version__ = "0.1.0"
