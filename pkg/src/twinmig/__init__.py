"""Vehicle-twin migration over attack-prone edge servers.

A seeded, deterministic simulator (servers, vehicles, attacks, trust
scoring) plus a hybrid-action generative-diffusion RL trainer that learns
migration decisions: which server carries the twin, which server receives
the pre-migrated share, and how large that share is.
"""

__version__ = "0.1.0"

from twinmig.channel import (
    ChannelConstants,
    LatencyBreakdown,
    channel_gain,
    distance,
    link_rate,
    migration_latency,
)
from twinmig.config import ScenarioConfig, desk_profile, load_config, paper_profile
from twinmig.world import EdgeServer, Position, TaskSpec, Vehicle, World, build_scenario

__all__ = [
    "ChannelConstants",
    "LatencyBreakdown",
    "EdgeServer",
    "Position",
    "ScenarioConfig",
    "TaskSpec",
    "Vehicle",
    "World",
    "build_scenario",
    "channel_gain",
    "desk_profile",
    "distance",
    "link_rate",
    "load_config",
    "migration_latency",
    "paper_profile",
]
