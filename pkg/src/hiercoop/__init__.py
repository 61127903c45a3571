"""Capacity scaling of random wireless ad hoc networks.

Hierarchical cooperation (clustered distributed MIMO) as a slot/rate
accounting engine, the matching cutset upper bounds, and a sweep harness
that fits scaling exponents at desk scale.
"""

from hiercoop.errors import (
    InvalidArgument,
    InvalidRegime,
    NearFieldViolation,
    NumericError,
)
from hiercoop.netmodel import (
    ClusterGrid,
    NetworkInstance,
    build_cluster_grid,
    cell_occupancy_stats,
    min_pairwise_distance,
    random_pairing,
    sample_network,
    squarelet_checks,
)
from hiercoop.channel import ChannelParams, gain, interference_bound

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "ClusterGrid",
    "InvalidArgument",
    "InvalidRegime",
    "NearFieldViolation",
    "NetworkInstance",
    "NumericError",
    "build_cluster_grid",
    "cell_occupancy_stats",
    "gain",
    "interference_bound",
    "min_pairwise_distance",
    "random_pairing",
    "sample_network",
    "squarelet_checks",
]
