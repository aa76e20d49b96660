"""Attack scheduling and per-slot effects on edge servers.

Three attack kinds are modeled. A direct flood pins the target's load at
its maximum and wrecks its detection statistics and user evaluations. An
indirect flood overloads the target's nearest wired neighbors (they take
direct-like damage) while the target itself degrades moderately. A
co-resident intruder stays quiet: a small load bump and slightly worse
detection numbers, with user evaluations untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from twinmig.channel import distance
from twinmig.config import AttackParams
from twinmig.world import World

DIRECT = "direct_ddos"
INDIRECT = "indirect_ddos"
CORESIDENT = "coresident"
KINDS = (DIRECT, INDIRECT, CORESIDENT)


@dataclass(frozen=True)
class AttackEvent:
    kind: str
    target: int  # server id, 1-based
    start: int  # slot index
    duration: int  # slots

    def active_at(self, slot: int) -> bool:
        return self.start <= slot < self.start + self.duration


@dataclass
class AttackEffects:
    """Per-slot damage applied to one server."""

    load_add: float = 0.0  # cycles, clamped against max load downstream
    abnormal_rate_add: float = 0.0
    failure_rate_add: float = 0.0
    force_negative_evaluations: bool = False

    def merge(self, other: "AttackEffects") -> None:
        self.load_add += other.load_add
        self.abnormal_rate_add = min(1.0, self.abnormal_rate_add + other.abnormal_rate_add)
        self.failure_rate_add = min(1.0, self.failure_rate_add + other.failure_rate_add)
        self.force_negative_evaluations |= other.force_negative_evaluations


def schedule_attacks(
    params: AttackParams, num_servers: int, episode_length: int, rng: np.random.Generator
) -> list[AttackEvent]:
    """Sample one episode's attack events.

    Arrivals per kind and slot are Poisson at the configured mean rates,
    targets are uniform over servers, durations uniform in the configured
    range. Events are ordered by (start, kind, target) so the schedule is
    stable for export and replay.
    """
    events: list[AttackEvent] = []
    rates = {DIRECT: params.direct_rate, INDIRECT: params.indirect_rate, CORESIDENT: params.coresident_rate}
    lo, hi = params.duration_range
    for slot in range(episode_length):
        for kind in KINDS:
            if rates[kind] <= 0:
                continue
            for _ in range(int(rng.poisson(rates[kind]))):
                events.append(
                    AttackEvent(
                        kind=kind,
                        target=int(rng.integers(1, num_servers + 1)),
                        start=slot,
                        duration=int(rng.integers(lo, hi + 1)),
                    )
                )
    events.sort(key=lambda e: (e.start, e.kind, e.target))
    return events


def nearest_rsu_neighbors(world: World, server_id: int, count: int) -> list[int]:
    """Ids of the ``count`` nearest RSUs sharing the wired backbone."""
    me = world.servers[server_id - 1]
    others = [
        (distance(me.position, s.position), s.id)
        for s in world.servers
        if s.id != server_id and s.kind == "rsu"
    ]
    others.sort()
    return [sid for _, sid in others[:count]]


def apply_attacks(
    world: World, events: list[AttackEvent], slot: int, params: AttackParams
) -> dict[int, AttackEffects]:
    """Compute and apply this slot's attack effects.

    Returns the per-server effects (servers missing from the dict are
    untouched). Load pinning happens here: the visible load is raised by
    each effect's cycles and clamped at the server's maximum.
    """
    effects: dict[int, AttackEffects] = {}

    def hit(server_id: int, effect: AttackEffects) -> None:
        effects.setdefault(server_id, AttackEffects()).merge(effect)

    for ev in events:
        if not ev.active_at(slot):
            continue
        target = world.servers[ev.target - 1]
        if ev.kind == DIRECT:
            hit(ev.target, AttackEffects(
                load_add=target.max_load,
                abnormal_rate_add=params.direct_abnormal_add,
                failure_rate_add=params.direct_failure_add,
                force_negative_evaluations=True,
            ))
        elif ev.kind == INDIRECT:
            hit(ev.target, AttackEffects(
                load_add=params.indirect_target_load_add * target.max_load,
                failure_rate_add=params.indirect_target_failure_add,
            ))
            for nid in nearest_rsu_neighbors(world, ev.target, params.indirect_neighbors):
                neighbor = world.servers[nid - 1]
                hit(nid, AttackEffects(
                    load_add=neighbor.max_load,
                    abnormal_rate_add=params.direct_abnormal_add,
                    failure_rate_add=params.direct_failure_add,
                    force_negative_evaluations=True,
                ))
        else:
            hit(ev.target, AttackEffects(
                load_add=params.coresident_load_add * target.max_load,
                abnormal_rate_add=params.coresident_abnormal_add,
                failure_rate_add=params.coresident_failure_add,
            ))

    for sid, eff in effects.items():
        s = world.servers[sid - 1]
        s.attack_load = eff.load_add
        s.current_load = min(s.current_load + eff.load_add, s.max_load)
    return effects


def record_defenses(world: World, events: list[AttackEvent], slot: int, rng: np.random.Generator) -> None:
    """Update defense histories for events starting this slot.

    Every starting event counts as one attack; the defense succeeds with
    the server's sampled skill. Effects apply either way (defense history
    only feeds trust scoring).
    """
    for ev in events:
        if ev.start != slot:
            continue
        s = world.servers[ev.target - 1]
        s.defense.total_attacks += 1
        if rng.random() < s.defense_success_prob:
            s.defense.successful_defenses += 1


def export_schedule(events: list[AttackEvent], path: str | Path) -> None:
    """Write a schedule as CSV (kind, target, start, duration) for audits."""
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["kind", "target", "start", "duration"])
        for ev in events:
            writer.writerow([ev.kind, ev.target, ev.start, ev.duration])
