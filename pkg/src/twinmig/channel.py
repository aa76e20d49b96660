"""Migration latency pipeline: distance, path loss, link rates, delay breakdown.

All functions are pure and operate in SI units (meters, bits, cycles,
seconds, watts, Hz). The twin task of a vehicle is uploaded to a current
server ``s``; a fraction ``k_pre`` of the processing share is shipped over
the wired backbone to a pre-migration server ``s_p`` that works in
parallel, and both result shares come back over their own downlinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from twinmig.world import EdgeServer, Position, TaskSpec

SPEED_OF_LIGHT = 2.998e8  # m/s


class DomainError(ValueError):
    """Raised when an input is outside a function's mathematical domain."""


@dataclass(frozen=True)
class ChannelConstants:
    """Physical constants of one wireless link."""

    speed_of_light: float = SPEED_OF_LIGHT
    carrier_frequency: float = 2.4e9  # Hz

    def __post_init__(self) -> None:
        if self.speed_of_light <= 0 or self.carrier_frequency <= 0:
            raise DomainError("speed of light and carrier frequency must be > 0")


@dataclass(frozen=True)
class Rates:
    """Link rates relevant to one vehicle's migration, bits/s."""

    uplink: float
    downlink_current: float
    downlink_pre: float


@dataclass(frozen=True)
class LatencyBreakdown:
    """Per-slot delay decomposition for one vehicle, all in seconds."""

    uplink: float
    migration: float
    queue_current: float
    queue_pre: float
    process_current: float
    process_pre: float
    process_max: float
    downlink: float
    total: float


def distance(a: "Position", b: "Position") -> float:
    """3-D Euclidean distance between two positions."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def channel_gain(server: "EdgeServer", dist: float, consts: ChannelConstants) -> float:
    """Path-loss channel gain of the vehicle-server link.

    RSUs use a single gain coefficient; satellites add their LoS and NLoS
    coefficients. Colocated endpoints (dist == 0) have no defined gain.
    """
    if dist <= 0.0:
        raise DomainError(f"channel gain undefined for distance {dist}")
    base = (consts.speed_of_light / (4.0 * math.pi * consts.carrier_frequency * dist)) ** 2
    if server.kind == "satellite":
        return (server.gain_los + server.gain_nlos) * base
    return server.gain_los * base


def link_rate(bandwidth: float, transmit_power: float, gain: float, noise_power: float) -> float:
    """Shannon rate B*log2(1 + p*h/sigma^2) in bits/s.

    Used for the uplink with the server's uplink bandwidth and for each
    downlink with the server's downlink bandwidth.
    """
    if bandwidth <= 0 or noise_power <= 0:
        raise DomainError("bandwidth and noise power must be > 0")
    return bandwidth * math.log2(1.0 + transmit_power * gain / noise_power)


def migration_latency(
    task: "TaskSpec",
    k_pre: float,
    server: "EdgeServer",
    pre_server: "EdgeServer",
    rates: Rates,
    cycles_per_bit: float,
) -> LatencyBreakdown:
    """Full delay breakdown of one vehicle's migration decision.

    ``k_pre`` is the pre-migrated share of the processing task. Choosing
    the same server for both roles means nothing is shipped, so the action
    degenerates to ``k_pre = 0``. Queue delay on either server is its
    current load divided by its compute capability; the pre-migration
    server additionally waits for the share to arrive over the backbone.
    """
    if server.id == pre_server.id:
        k_pre = 0.0
    migrated_bits = k_pre * task.process_size
    inter_bw = server.inter_server_bandwidth.get(pre_server.id, 0.0)

    uplink = task.upload_size / rates.uplink
    migration = migrated_bits / inter_bw if migrated_bits > 0.0 else 0.0
    queue_current = server.current_load / server.compute_capability
    queue_pre = pre_server.current_load / pre_server.compute_capability
    process_current = queue_current + cycles_per_bit * (task.process_size - migrated_bits) / server.compute_capability
    process_pre = migration + queue_pre + cycles_per_bit * migrated_bits / pre_server.compute_capability
    process_max = max(process_current, process_pre)
    downlink = (task.process_size - migrated_bits) / rates.downlink_current
    if migrated_bits > 0.0:
        downlink += migrated_bits / rates.downlink_pre
    total = uplink + process_max + downlink
    return LatencyBreakdown(
        uplink=uplink,
        migration=migration,
        queue_current=queue_current,
        queue_pre=queue_pre,
        process_current=process_current,
        process_pre=process_pre,
        process_max=process_max,
        downlink=downlink,
        total=total,
    )
