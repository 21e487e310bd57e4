"""Partition-based Lipschitz bandits: TreeUCB and friends."""

from .partition import Domain, DomainError, Partition, Region, SplitError, diameter, region_of, split_region, verify_nested
from .treefit import FitConfig, SplitDecision, best_split, node_mae, refit
from .engine import (
    ConfigError,
    Decision,
    Engine,
    EngineConfig,
    ObservationLog,
    RegionStats,
    corrected_stats,
    mesh_refine,
    sample_arm,
    select_region,
    singleton_partition,
    ucb_index,
    zooming_refine,
)

__version__ = "0.1.0"
