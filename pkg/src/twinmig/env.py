"""Migration environment: observations, constraint repair, utility, reward.

One step serves every vehicle's twin task under the current loads and
reputations, records user evaluations and detection reports, updates
reputations, advances the world, and applies the next slot's attack
effects. Reputations and loads seen in the observation are exactly the
values the utility charges for, so the agent is graded on what it saw.

Infeasible server choices (out of range, reputation below threshold, or
load at capacity) are repaired to the highest-reputation feasible server
and penalized. When no feasible server exists the repair falls back to
the best in-range server (then to the best server overall) and the slot
is counted as an infeasible state rather than a violation, since the
constraint set is empty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from twinmig.attacks import AttackEffects, apply_attacks, record_defenses, schedule_attacks
from twinmig.channel import ChannelConstants, LatencyBreakdown, Rates, channel_gain, distance, link_rate, migration_latency
from twinmig.config import ScenarioConfig
from twinmig.trust import (
    TrustParams,
    combine_and_update,
    interaction_layer_reputation,
    network_layer_reputation,
    synthesize_detection_report,
)
from twinmig.world import World, advance_slot, build_scenario, reset_episode_state, rng_stream

STREAM_ATTACK = 10
STREAM_DETECT = 11
STREAM_EVAL = 12
STREAM_DEFENSE = 13


class ActionError(ValueError):
    """Raised for malformed hybrid actions (indices outside 1..S)."""


@dataclass
class HybridAction:
    """Joint decision for all vehicles; server indices are 1-based."""

    server_idx: np.ndarray  # (V,)
    pre_idx: np.ndarray  # (V,)
    k_pre: np.ndarray  # (V,) in [0, 1]


def utility(rep_current: float, rep_pre: float, total_latency: float, lam: float, mu: float) -> float:
    """Money value of one served slot: reputation credit minus delay cost."""
    return lam * (rep_current + rep_pre) - mu * total_latency


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    latencies: list[LatencyBreakdown]
    utilities: np.ndarray  # (V,) per-vehicle Eq-style utility, before penalties
    executed: HybridAction  # post-repair action actually served
    repairs: int  # chosen servers swapped by the repair path
    violations: int  # executed infeasible choices while feasibility existed
    infeasible_states: int  # role choices with an empty feasible set
    selected_reputation_mean: float


class MigrationEnv:
    """Single-rollout environment over one seeded world."""

    def __init__(self, config: ScenarioConfig, world: World | None = None):
        self.cfg = config.validate()
        self.world = world if world is not None else build_scenario(config)
        t = config.trust
        self.trust_params = TrustParams(
            theta1=t.theta1,
            theta2=t.theta2,
            alpha=t.alpha,
            omega=t.omega,
            xi=t.xi,
            update_rate=t.update_rate,
            rep_threshold=t.rep_threshold,
        )
        self._consts = {
            "rsu": ChannelConstants(carrier_frequency=config.channel.carrier_frequency_rsu),
            "satellite": ChannelConstants(carrier_frequency=config.channel.carrier_frequency_satellite),
        }
        self.num_vehicles = self.world.num_vehicles
        self.num_servers = self.world.num_servers
        self.obs_dim = 4 * self.num_vehicles + 2 * self.num_servers
        self.episode = -1
        self.metrics: SlotMetricsWriter | None = None
        self.reset()

    # ------------------------------------------------------------------
    # episode control and observations
    # ------------------------------------------------------------------

    def reset(self, episode: int | None = None) -> np.ndarray:
        """Start an episode: fresh loads, reputations, and attack schedule."""
        self.episode = self.episode + 1 if episode is None else episode
        seed = self.cfg.seed
        reset_episode_state(self.world, episode=self.episode)
        self._detect_rng = rng_stream(seed, STREAM_DETECT, self.episode)
        self._eval_rng = rng_stream(seed, STREAM_EVAL, self.episode)
        self._defense_rng = rng_stream(seed, STREAM_DEFENSE, self.episode)
        self.schedule = schedule_attacks(
            self.cfg.attack,
            self.num_servers,
            self.cfg.world.slots_per_episode,
            rng_stream(seed, STREAM_ATTACK, self.episode),
        )
        self.effects = apply_attacks(self.world, self.schedule, 0, self.cfg.attack)
        record_defenses(self.world, self.schedule, 0, self._defense_rng)
        self.prev_delays = np.zeros(self.num_vehicles)
        self._delay_norm = 1.0
        self._masks_slot = -1
        return self.observation()

    def observation(self) -> np.ndarray:
        """Flat observation: positions, previous delays, loads, reputations.

        Layout (length 4V + 2S): 3V map-normalized vehicle coordinates,
        V previous-slot delays normalized by the running maximum, S loads
        normalized by each server's capacity, S reputation values.
        """
        extent = self.cfg.world.map_extent
        parts = [
            np.concatenate(
                [v.slot_positions[self.world.slot] / extent for v in self.world.vehicles]
            ),
            self.prev_delays / self._delay_norm,
            np.array([s.current_load / s.max_load for s in self.world.servers]),
            self.world.reputations(),
        ]
        return np.concatenate(parts)

    def in_range_mask(self) -> np.ndarray:
        """(V, S) boolean: server within communication range of vehicle."""
        out = np.empty((self.num_vehicles, self.num_servers), dtype=bool)
        for vi, v in enumerate(self.world.vehicles):
            pos = v.position_at(self.world.slot)
            for si, s in enumerate(self.world.servers):
                out[vi, si] = distance(pos, s.position) <= s.comm_range
        return out

    def feasible_masks(self) -> np.ndarray:
        """(V, S) boolean: in range, reputable, and not at load capacity."""
        if self._masks_slot == self.world.slot:
            return self._masks
        ok_rep = self.world.reputations() >= self.trust_params.rep_threshold
        ok_load = np.array([s.current_load < s.max_load for s in self.world.servers])
        self._masks = self.in_range_mask() & ok_rep[None, :] & ok_load[None, :]
        self._masks_slot = self.world.slot
        return self._masks

    def feasible_mask(self, vehicle: int) -> np.ndarray:
        """(S,) feasibility row for one vehicle (1-based id or 0-based index)."""
        return self.feasible_masks()[vehicle - 1 if vehicle >= 1 else vehicle]

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def _repair_choice(
        self, vehicle: int, chosen: int, masks: np.ndarray, reps: np.ndarray | None = None
    ) -> tuple[int, bool, bool]:
        """Returns (server id, was_repaired, feasible_set_empty)."""
        row = masks[vehicle]
        if row[chosen - 1]:
            return chosen, False, False
        if reps is None:
            reps = self.world.reputations()
        if row.any():
            best = int(np.argmax(np.where(row, reps, -1.0)))
            return best + 1, True, False
        in_range = self.in_range_mask()[vehicle]
        pool = in_range if in_range.any() else np.ones(self.num_servers, dtype=bool)
        best = int(np.argmax(np.where(pool, reps, -1.0)))
        return best + 1, True, True

    def step(self, action: HybridAction) -> StepResult:
        """Serve all vehicles, update trust, advance the world one slot."""
        w = self.cfg.world
        if self.world.slot >= w.slots_per_episode:
            raise ActionError("episode already terminal; call reset()")
        server_idx = np.asarray(action.server_idx, dtype=int)
        pre_idx = np.asarray(action.pre_idx, dtype=int)
        k_pre = np.asarray(action.k_pre, dtype=float)
        for arr in (server_idx, pre_idx):
            if arr.shape != (self.num_vehicles,) or ((arr < 1) | (arr > self.num_servers)).any():
                raise ActionError(f"server indices must lie in 1..{self.num_servers}")
        if ((k_pre < 0.0) | (k_pre > 1.0)).any():
            raise ActionError("pre-migration shares must lie in [0, 1]")

        masks = self.feasible_masks()
        reps = self.world.reputations()
        repairs = violations = infeasible_states = 0
        exec_s = server_idx.copy()
        exec_sp = pre_idx.copy()
        for v in range(self.num_vehicles):
            for role, arr in (("s", exec_s), ("sp", exec_sp)):
                fixed, repaired, empty = self._repair_choice(v, int(arr[v]), masks, reps)
                arr[v] = fixed
                if repaired:
                    repairs += 1
                if empty:
                    infeasible_states += 1
                elif not masks[v, fixed - 1]:
                    violations += 1  # repair failed despite a feasible option

        lam = self.cfg.utility.reputation_coeff
        mu = self.cfg.utility.latency_coeff
        latencies: list[LatencyBreakdown] = []
        utilities = np.empty(self.num_vehicles)
        assigned = np.zeros(self.num_servers)
        slot = self.world.slot
        force_negative = {
            sid: eff.force_negative_evaluations for sid, eff in self.effects.items()
        }
        pending_evals: list[tuple[int, int, bool]] = []  # (server id, vehicle id, positive)

        for v, vehicle in enumerate(self.world.vehicles):
            s = self.world.servers[exec_s[v] - 1]
            sp = self.world.servers[exec_sp[v] - 1]
            task = vehicle.task_stream[slot]
            pos = vehicle.position_at(slot)
            gain_s = channel_gain(s, distance(pos, s.position), self._consts[s.kind])
            gain_sp = channel_gain(sp, distance(pos, sp.position), self._consts[sp.kind])
            rates = Rates(
                uplink=link_rate(s.uplink_bandwidth, vehicle.transmit_power, gain_s, s.noise_power),
                downlink_current=link_rate(
                    s.downlink_bandwidth, vehicle.transmit_power, gain_s, s.noise_power
                ),
                downlink_pre=link_rate(
                    sp.downlink_bandwidth, vehicle.transmit_power, gain_sp, sp.noise_power
                ),
            )
            breakdown = migration_latency(task, float(k_pre[v]), s, sp, rates, vehicle.cycles_per_bit)
            latencies.append(breakdown)
            utilities[v] = utility(
                reps[exec_s[v] - 1], reps[exec_sp[v] - 1], breakdown.total, lam, mu
            )
            migrated = (0.0 if s.id == sp.id else float(k_pre[v])) * task.process_size
            assigned[exec_s[v] - 1] += vehicle.cycles_per_bit * (task.process_size - migrated)
            if migrated > 0.0:
                assigned[exec_sp[v] - 1] += vehicle.cycles_per_bit * migrated

            good = breakdown.total < self.cfg.trust.latency_good_threshold
            served = [s.id] if (s.id == sp.id or migrated == 0.0) else [s.id, sp.id]
            for sid in served:
                positive = good and not force_negative.get(sid, False)
                if self.cfg.trust.malicious_evaluator_fraction > 0.0 and (
                    self._eval_rng.random() < self.cfg.trust.malicious_evaluator_fraction
                ):
                    positive = not positive
                pending_evals.append((sid, vehicle.id, positive))

        # trust update for the slot just served, before the world moves on
        served_effects = self.effects
        for s in self.world.servers:
            eff = served_effects.get(s.id, AttackEffects())
            report = synthesize_detection_report(
                self.cfg.trust.baseline_abnormal_rate + eff.abnormal_rate_add,
                self.cfg.trust.baseline_failure_rate + eff.failure_rate_add,
                self._detect_rng,
                data_units=self.cfg.trust.detection_data_units,
                unit_bits=self.cfg.trust.detection_unit_bits,
                total_requests=self.cfg.trust.detection_requests,
            )
            for sid, vid, positive in pending_evals:
                if sid == s.id:
                    s.interactions.record(vid, positive)
            rep_net = network_layer_reputation(report, s.defense, self.trust_params)
            rep_int = interaction_layer_reputation(s.interactions)
            s.reputation = combine_and_update(
                rep_net, rep_int, s.reputation.rep_current, self.trust_params
            )

        advance_slot(self.world, assigned)
        self.effects = apply_attacks(self.world, self.schedule, self.world.slot, self.cfg.attack)
        record_defenses(self.world, self.schedule, self.world.slot, self._defense_rng)

        totals = np.array([b.total for b in latencies])
        self._delay_norm = max(self._delay_norm, float(totals.max()))
        self.prev_delays = totals
        reward = float(utilities.sum()) - self.cfg.trainer.repair_penalty * repairs
        selected_rep = float(np.mean([(reps[exec_s[v] - 1] + reps[exec_sp[v] - 1]) / 2.0 for v in range(self.num_vehicles)]))
        terminal = self.world.slot >= w.slots_per_episode
        result = StepResult(
            observation=self.observation(),
            reward=reward,
            terminal=terminal,
            latencies=latencies,
            utilities=utilities,
            executed=HybridAction(exec_s, exec_sp, k_pre.copy()),
            repairs=repairs,
            violations=violations,
            infeasible_states=infeasible_states,
            selected_reputation_mean=selected_rep,
        )
        if self.metrics is not None:
            self.metrics.write(self, result)
        return result


class SlotMetricsWriter:
    """Per-slot CSV stream: reward, latencies, chosen reputations, violations.

    Columns: episode, slot, reward, violations, repairs, mean_latency,
    mean_selected_reputation, latency_v<i> per vehicle, rep_server_<j>
    per server (the post-update reputation trace).
    """

    def __init__(self, path: str | Path, env: MigrationEnv):
        self._fh: IO[str] = Path(path).open("w", newline="")
        self._writer = csv.writer(self._fh)
        header = ["episode", "slot", "reward", "violations", "repairs", "mean_latency", "mean_selected_reputation"]
        header += [f"latency_v{v + 1}" for v in range(env.num_vehicles)]
        header += [f"rep_server_{s + 1}" for s in range(env.num_servers)]
        self._writer.writerow(header)

    def write(self, env: MigrationEnv, result: StepResult) -> None:
        totals = [b.total for b in result.latencies]
        row = [
            env.episode,
            env.world.slot - 1,
            f"{result.reward:.6f}",
            result.violations,
            result.repairs,
            f"{np.mean(totals):.6f}",
            f"{result.selected_reputation_mean:.6f}",
        ]
        row += [f"{t:.6f}" for t in totals]
        row += [f"{r:.6f}" for r in env.world.reputations()]
        self._writer.writerow(row)

    def close(self) -> None:
        self._fh.close()
