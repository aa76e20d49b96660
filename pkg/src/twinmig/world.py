"""Scenario state: servers, vehicles, trajectories, load dynamics.

A ``World`` is built once per run seed (placement, capabilities,
trajectories and task streams are fixed); episodes differ only in their
noise and attack streams, which the environment reseeds per episode.
Server load has three parts: a mean-reverting background, a backlog of
assigned twin work drained at the server's compute rate, and a transient
attack contribution pinned on top by the attack engine.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from twinmig.config import ConfigError, ScenarioConfig
from twinmig.trust import DefenseHistory, InteractionLog, ReputationRecord

SNAPSHOT_FORMAT = "twinmig-world/1"

# Stream ids for derived RNGs; every consumer seeds as (seed, stream, *key).
STREAM_BUILD = 0
STREAM_EPISODE = 1
STREAM_POLICY = 2
STREAM_EVAL = 3


def rng_stream(seed: int, stream: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, stream, key...), stable across runs."""
    return np.random.default_rng(np.random.SeedSequence((seed, stream, *key)))


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self) -> None:
        if not all(map(math.isfinite, (self.x, self.y, self.z))):
            raise ConfigError("positions must be finite")
        if self.z < 0:
            raise ConfigError("positions must be at or above ground")


@dataclass(frozen=True)
class TaskSpec:
    """One slot's twin-update task for one vehicle, in bits."""

    upload_size: float
    process_size: float

    def __post_init__(self) -> None:
        if self.upload_size <= 0 or self.process_size <= 0:
            raise ConfigError("task sizes must be > 0")


@dataclass
class EdgeServer:
    id: int  # 1-based, stable across the run
    kind: str  # "rsu" | "satellite"
    position: Position
    compute_capability: float  # cycles/s
    max_load: float  # cycles
    comm_range: float  # meters
    uplink_bandwidth: float  # Hz
    downlink_bandwidth: float  # Hz
    inter_server_bandwidth: dict[int, float]  # bits/s, by peer id
    gain_los: float  # A_rsu for RSUs, LoS coefficient for satellites
    gain_nlos: float  # 0 for RSUs
    noise_power: float  # watts
    base_load: float  # resting background load, cycles
    # dynamic state, reset per episode
    current_load: float = 0.0
    background_load: float = 0.0
    backlog: float = 0.0
    attack_load: float = 0.0
    defense_prior: tuple[int, int] = (0, 0)  # (successes, attacks) seeded at build
    defense_success_prob: float = 1.0
    defense: DefenseHistory = field(default_factory=DefenseHistory)
    interactions: InteractionLog = field(default_factory=InteractionLog)
    reputation: ReputationRecord = field(default_factory=ReputationRecord)


@dataclass
class Vehicle:
    id: int  # 1-based
    waypoints: list[Position]
    speed: float  # m/s
    transmit_power: float  # watts
    cycles_per_bit: float
    task_stream: list[TaskSpec]  # one spec per slot
    slot_positions: np.ndarray  # (slots+1, 3) precomputed interpolation

    def position_at(self, slot: int) -> Position:
        x, y, z = self.slot_positions[slot]
        return Position(float(x), float(y), float(z))


@dataclass
class World:
    config: ScenarioConfig
    servers: list[EdgeServer]
    vehicles: list[Vehicle]
    slot: int = 0
    episode_rng: np.random.Generator | None = None

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @property
    def num_vehicles(self) -> int:
        return len(self.vehicles)

    def loads(self) -> np.ndarray:
        return np.array([s.current_load for s in self.servers])

    def reputations(self) -> np.ndarray:
        return np.array([s.reputation.rep_current for s in self.servers])


def _interpolate_trajectory(
    waypoints: list[Position], speed: float, slot_duration: float, slots: int
) -> np.ndarray:
    """Per-slot positions walking the waypoint polyline at constant speed."""
    pts = np.array([[p.x, p.y, p.z] for p in waypoints])
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    out = np.empty((slots + 1, 3))
    for k in range(slots + 1):
        d = min(k * speed * slot_duration, cum[-1])
        i = int(np.searchsorted(cum, d, side="right")) - 1
        i = min(i, len(seg_len) - 1)
        frac = 0.0 if seg_len[i] == 0 else (d - cum[i]) / seg_len[i]
        out[k] = pts[i] + frac * seg[i]
    return out


def build_scenario(config: ScenarioConfig) -> World:
    """Place servers and vehicles and sample every static capability.

    RSUs sit on a jittered grid at the configured height; satellites sit
    at their scaled altitude with map-wide range. All draws come from the
    build stream of the run seed, so equal configs give equal worlds.
    """
    config.validate()
    rng = rng_stream(config.seed, STREAM_BUILD)
    w, ch = config.world, config.channel
    n_sat = config.world.num_satellites
    n_rsu = w.num_servers - n_sat

    servers: list[EdgeServer] = []
    positions: list[Position] = []
    if n_rsu > 0:
        cols = max(1, math.ceil(math.sqrt(n_rsu)))
        rows = math.ceil(n_rsu / cols)
        dx, dy = w.map_extent / (cols + 1), w.map_extent / (rows + 1)
        for i in range(n_rsu):
            gx, gy = (i % cols + 1) * dx, (i // cols + 1) * dy
            jx, jy = rng.uniform(-0.1, 0.1, size=2) * min(dx, dy)
            positions.append(Position(gx + jx, gy + jy, w.rsu_height))
    sat_z = w.satellite_altitude * w.satellite_altitude_scale
    for i in range(n_sat):
        positions.append(Position((i + 1) / (n_sat + 1) * w.map_extent, 0.5 * w.map_extent, sat_z))

    for idx, pos in enumerate(positions):
        is_sat = idx >= n_rsu
        max_load = rng.uniform(*w.max_load_range)
        lo, hi = config.attack.defense_prior_attacks
        prior_attacks = int(rng.integers(lo, hi + 1))
        skill = rng.uniform(*config.attack.defense_success_range)
        prior_successes = int(rng.binomial(prior_attacks, skill))
        servers.append(
            EdgeServer(
                id=idx + 1,
                kind="satellite" if is_sat else "rsu",
                position=pos,
                compute_capability=rng.uniform(*w.compute_range),
                max_load=max_load,
                comm_range=w.satellite_comm_range if is_sat else w.rsu_comm_range,
                uplink_bandwidth=ch.uplink_bandwidth,
                downlink_bandwidth=ch.downlink_bandwidth,
                inter_server_bandwidth={},
                gain_los=ch.gain_satellite_los if is_sat else ch.gain_rsu,
                gain_nlos=ch.gain_satellite_nlos if is_sat else 0.0,
                noise_power=ch.noise_power,
                base_load=w.base_load_fraction * max_load,
                defense_prior=(prior_successes, prior_attacks),
                defense_success_prob=skill,
            )
        )
    for i in range(len(servers)):
        for j in range(i + 1, len(servers)):
            bw = rng.uniform(*w.inter_bandwidth_range)
            servers[i].inter_server_bandwidth[servers[j].id] = bw
            servers[j].inter_server_bandwidth[servers[i].id] = bw

    vehicles: list[Vehicle] = []
    slots = w.slots_per_episode
    for v in range(w.num_vehicles):
        speed = rng.uniform(*w.vehicle_speed_range)
        needed = speed * w.slot_duration * slots
        waypoints = [Position(rng.uniform(0, w.map_extent), rng.uniform(0, w.map_extent), 0.0)]
        total = 0.0
        while total < needed:
            nxt = Position(rng.uniform(0, w.map_extent), rng.uniform(0, w.map_extent), 0.0)
            total += math.dist(
                (waypoints[-1].x, waypoints[-1].y), (nxt.x, nxt.y)
            )
            waypoints.append(nxt)
        tasks = []
        for _ in range(slots):
            up = rng.uniform(*w.task_size_range)
            tasks.append(TaskSpec(upload_size=up, process_size=w.task_process_factor * up))
        vehicles.append(
            Vehicle(
                id=v + 1,
                waypoints=waypoints,
                speed=speed,
                transmit_power=ch.transmit_power,
                cycles_per_bit=ch.cycles_per_bit,
                task_stream=tasks,
                slot_positions=_interpolate_trajectory(waypoints, speed, w.slot_duration, slots),
            )
        )

    world = World(config=config, servers=servers, vehicles=vehicles)
    reset_episode_state(world)
    return world


def reset_episode_state(world: World, episode: int = 0) -> None:
    """Return the world to slot 0 and reseed the episode noise stream."""
    world.slot = 0
    world.episode_rng = rng_stream(world.config.seed, STREAM_EPISODE, episode)
    init_rep = world.config.trust.initial_reputation
    for s in world.servers:
        s.background_load = s.base_load
        s.backlog = 0.0
        s.attack_load = 0.0
        s.current_load = min(s.base_load, s.max_load)
        s.defense = DefenseHistory(*s.defense_prior)
        s.interactions = InteractionLog()
        s.reputation = ReputationRecord(
            rep_net=0.0, rep_int=init_rep, rep_combined=init_rep, rep_current=init_rep
        )


def advance_slot(world: World, assigned_loads: np.ndarray) -> World:
    """Advance one slot: move vehicles, evolve loads, drain backlog.

    Background load mean-reverts toward each server's resting level with
    seeded noise; the backlog takes this slot's assigned cycles and drains
    at the server's compute rate. The clamped sum becomes the visible
    load; attack pinning is applied afterwards by the attack engine.
    """
    w = world.config.world
    if world.slot >= w.slots_per_episode:
        raise ConfigError("cannot advance past the end of the episode")
    rng = world.episode_rng
    for i, s in enumerate(world.servers):
        noise = 0.0
        if w.load_noise_fraction > 0:
            noise = rng.normal(0.0, w.load_noise_fraction * s.max_load)
        bg = s.background_load + w.load_reversion * (s.base_load - s.background_load) + noise
        s.background_load = min(max(bg, 0.0), s.max_load)
        drained = s.compute_capability * w.slot_duration
        s.backlog = max(0.0, s.backlog + float(assigned_loads[i]) - drained)
        s.attack_load = 0.0
        s.current_load = min(s.background_load + s.backlog, s.max_load)
    world.slot += 1
    return world


def snapshot(world: World) -> str:
    """Versioned structured-text dump of the full world state."""
    doc = {
        "format": SNAPSHOT_FORMAT,
        "seed": world.config.seed,
        "slot": world.slot,
        "servers": [
            {
                "id": s.id,
                "kind": s.kind,
                "position": [s.position.x, s.position.y, s.position.z],
                "compute_capability": s.compute_capability,
                "max_load": s.max_load,
                "comm_range": s.comm_range,
                "inter_server_bandwidth": {str(k): v for k, v in sorted(s.inter_server_bandwidth.items())},
                "current_load": s.current_load,
                "background_load": s.background_load,
                "backlog": s.backlog,
                "defense": [s.defense.successful_defenses, s.defense.total_attacks],
                "reputation": s.reputation.rep_current,
            }
            for s in world.servers
        ],
        "vehicles": [
            {
                "id": v.id,
                "speed": v.speed,
                "position": list(map(float, v.slot_positions[min(world.slot, len(v.slot_positions) - 1)])),
                "waypoints": [[p.x, p.y, p.z] for p in v.waypoints],
                "task_upload_bits": [t.upload_size for t in v.task_stream],
            }
            for v in world.vehicles
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def save_snapshot(world: World, path: str | Path) -> None:
    Path(path).write_text(snapshot(world))
