"""Deterministic model of hinted handoff and read repair in quorum key-value stores."""

from antientropy.model import Budget, ClusterState, Config, WriteOp, coordinator_of, preference_list
from antientropy.scenarios import Scenario, builtin, parse_scenario, serialize

__all__ = [
    "Budget", "ClusterState", "Config", "Scenario", "WriteOp", "builtin", "coordinator_of",
    "parse_scenario", "preference_list", "serialize",
]
