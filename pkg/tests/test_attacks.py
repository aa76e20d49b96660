"""Attack scheduling and effect-application tests."""

import csv
import dataclasses

import numpy as np

from twinmig.attacks import (
    CORESIDENT,
    DIRECT,
    INDIRECT,
    AttackEvent,
    apply_attacks,
    export_schedule,
    nearest_rsu_neighbors,
    record_defenses,
    schedule_attacks,
)
from twinmig.channel import distance
from twinmig.config import desk_profile
from twinmig.world import build_scenario, rng_stream


def make_world(seed=0, **world_overrides):
    cfg = desk_profile(seed=seed)
    for key, value in world_overrides.items():
        setattr(cfg.world, key, value)
    return build_scenario(cfg.validate())


class TestSchedule:
    def test_zero_rates_empty(self):
        params = dataclasses.replace(
            desk_profile().attack, direct_rate=0.0, indirect_rate=0.0, coresident_rate=0.0
        )
        assert schedule_attacks(params, 6, 100, np.random.default_rng(0)) == []

    def test_high_rate_always_fires(self):
        params = dataclasses.replace(desk_profile().attack, direct_rate=0.2)
        for seed in range(1000):
            events = schedule_attacks(params, 6, 100, np.random.default_rng(seed))
            assert len(events) >= 1

    def test_seeded_determinism(self):
        params = desk_profile().attack
        a = schedule_attacks(params, 6, 100, rng_stream(5, 9))
        b = schedule_attacks(params, 6, 100, rng_stream(5, 9))
        assert a == b

    def test_fields_in_range(self):
        params = desk_profile().attack
        events = schedule_attacks(params, 8, 200, np.random.default_rng(3))
        lo, hi = params.duration_range
        for ev in events:
            assert 1 <= ev.target <= 8
            assert 0 <= ev.start < 200
            assert lo <= ev.duration <= hi
            assert ev.kind in (DIRECT, INDIRECT, CORESIDENT)


class TestApplyEffects:
    def test_direct_pins_load_for_duration(self):
        world = make_world()
        params = world.config.attack
        event = AttackEvent(DIRECT, target=2, start=3, duration=4)
        for slot in range(10):
            world.servers[1].current_load = 123.0
            effects = apply_attacks(world, [event], slot, params)
            if 3 <= slot < 7:
                assert world.servers[1].current_load == world.servers[1].max_load
                assert effects[2].force_negative_evaluations
            else:
                assert effects == {}
                assert world.servers[1].current_load == 123.0

    def test_indirect_hits_two_nearest_rsus(self):
        world = make_world(seed=2)
        params = world.config.attack
        target = 1
        effects = apply_attacks(world, [AttackEvent(INDIRECT, target, 0, 5)], 0, params)
        # brute-force nearest RSU sort
        me = world.servers[target - 1]
        ranked = sorted(
            (s for s in world.servers if s.id != target and s.kind == "rsu"),
            key=lambda s: distance(me.position, s.position),
        )
        expected = {s.id for s in ranked[:2]}
        assert expected == set(nearest_rsu_neighbors(world, target, 2))
        flooded = {sid for sid, eff in effects.items() if eff.force_negative_evaluations}
        assert flooded == expected
        assert not effects[target].force_negative_evaluations
        assert effects[target].failure_rate_add == params.indirect_target_failure_add

    def test_satellites_never_indirect_neighbors(self):
        world = make_world(seed=3)
        sat_ids = {s.id for s in world.servers if s.kind == "satellite"}
        for target in range(1, world.num_servers + 1):
            assert not sat_ids & set(nearest_rsu_neighbors(world, target, 3))

    def test_coresident_is_stealthy(self):
        world = make_world()
        effects = apply_attacks(world, [AttackEvent(CORESIDENT, 4, 0, 2)], 0, world.config.attack)
        eff = effects[4]
        assert not eff.force_negative_evaluations
        assert 0 < eff.abnormal_rate_add < 0.5
        server = world.servers[3]
        assert server.current_load <= server.max_load

    def test_stacked_effects_clamped(self):
        world = make_world()
        events = [AttackEvent(DIRECT, 1, 0, 2), AttackEvent(CORESIDENT, 1, 0, 2)]
        effects = apply_attacks(world, events, 0, world.config.attack)
        assert world.servers[0].current_load == world.servers[0].max_load
        assert effects[1].abnormal_rate_add <= 1.0
        assert effects[1].failure_rate_add <= 1.0

    def test_no_active_events_no_effects(self):
        world = make_world()
        assert apply_attacks(world, [], 0, world.config.attack) == {}


class TestDefenseRecording:
    def test_counts_only_event_starts(self):
        world = make_world(seed=4)
        server = world.servers[0]
        before = server.defense.total_attacks
        events = [AttackEvent(DIRECT, 1, 2, 5)]
        rng = np.random.default_rng(0)
        for slot in range(8):
            record_defenses(world, events, slot, rng)
        assert server.defense.total_attacks == before + 1
        assert server.defense.successful_defenses <= server.defense.total_attacks


def test_schedule_export(tmp_path):
    params = desk_profile().attack
    events = schedule_attacks(params, 6, 50, np.random.default_rng(8))
    out = tmp_path / "schedule.csv"
    export_schedule(events, out)
    with out.open() as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == len(events)
    if rows:
        assert set(rows[0]) == {"kind", "target", "start", "duration"}
