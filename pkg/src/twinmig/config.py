"""Scenario and training configuration.

One ``ScenarioConfig`` carries every tunable of the simulator, the trust
model, the diffusion policy and the trainer, grouped in sections that
mirror the package modules. Configs load from an INI-style key-value text
file; two shipped profiles exist:

* ``desk``  - small scenario (4 vehicles, 6 servers, 50-slot episodes)
  sized so a full training run fits on a laptop CPU.
* ``paper`` - the large-scale experiment profile (10 vehicles, 22 servers,
  1e5 epochs); same code paths, hours of compute.

Unit conventions: meters, seconds, bits, cycles, watts, Hz. Task sizes in
config files are given in bits (15 MB = 1.2e8 bits).
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unparseable or out-of-range configuration."""


@dataclass
class WorldParams:
    num_vehicles: int = 4
    num_servers: int = 6
    num_satellites: int = 1
    map_extent: float = 1000.0  # square side, meters
    slots_per_episode: int = 50
    slot_duration: float = 240.0  # seconds of load draining per slot
    rsu_height: float = 10.0
    rsu_comm_range: float = 700.0
    satellite_altitude: float = 500e3
    satellite_altitude_scale: float = 0.02  # map-coordinate compression of orbit height
    satellite_comm_range: float = 1e9
    vehicle_speed_range: tuple[float, float] = (0.3, 1.0)  # m/s along waypoints
    compute_range: tuple[float, float] = (100e6, 200e6)  # cycles/s
    max_load_range: tuple[float, float] = (2.5e10, 6.5e10)  # cycles
    inter_bandwidth_range: tuple[float, float] = (500e6, 900e6)  # bits/s
    task_size_range: tuple[float, float] = (15 * 8e6, 175 * 8e6)  # bits uploaded per slot
    task_process_factor: float = 1.0  # processed bits per uploaded bit
    base_load_fraction: float = 0.22  # resting load as share of max load
    load_reversion: float = 0.3  # pull toward the resting load per slot
    load_noise_fraction: float = 0.07  # load noise sd as share of max load


@dataclass
class ChannelParams:
    carrier_frequency_rsu: float = 2.4e9
    carrier_frequency_satellite: float = 12e9
    uplink_bandwidth: float = 20e6
    downlink_bandwidth: float = 20e6
    transmit_power: float = 0.5
    noise_power: float = 1e-13
    gain_rsu: float = 4.0
    gain_satellite_los: float = 2.0
    gain_satellite_nlos: float = 0.5
    cycles_per_bit: float = 50.0


@dataclass
class AttackParams:
    direct_rate: float = 0.03  # mean arrivals per slot
    indirect_rate: float = 0.02
    coresident_rate: float = 0.02
    duration_range: tuple[int, int] = (3, 10)  # slots
    indirect_neighbors: int = 2
    direct_abnormal_add: float = 0.6
    direct_failure_add: float = 0.7
    indirect_target_load_add: float = 0.4  # share of max load
    indirect_target_failure_add: float = 0.3
    coresident_load_add: float = 0.1  # share of max load
    coresident_abnormal_add: float = 0.1
    coresident_failure_add: float = 0.05
    defense_prior_attacks: tuple[int, int] = (6, 20)  # seeded history length
    defense_success_range: tuple[float, float] = (0.4, 0.95)  # per-server skill


@dataclass
class TrustConfig:
    theta1: float = 0.3
    theta2: float = 0.7
    alpha: float = 0.5
    omega: float = 0.5
    xi: float = 0.5
    update_rate: float = 0.3
    rep_threshold: float = 0.3
    initial_reputation: float = 0.5
    baseline_abnormal_rate: float = 0.02
    baseline_failure_rate: float = 0.02
    detection_data_units: int = 1000
    detection_unit_bits: float = 1e3
    detection_requests: int = 200
    latency_good_threshold: float = 450.0  # seconds; degraded slots earn negative reviews
    malicious_evaluator_fraction: float = 0.0


@dataclass
class UtilityParams:
    reputation_coeff: float = 4.0  # money per unit reputation
    latency_coeff: float = 1.0  # money per second of delay

    @property
    def weight_ratio(self) -> float:
        return self.reputation_coeff / self.latency_coeff


@dataclass
class PolicyParams:
    denoise_steps: int = 5
    beta_min: float = 0.05
    beta_max: float = 0.5
    hidden_width: int = 256
    time_embed_dim: int = 16
    noise_scale: str = "paper"  # "paper": (beta_tilde/2)^2, "standard": sqrt(beta_tilde)
    exploration_sigma: float = 0.1
    share_temperature: float = 5.0  # softens the bounded share map (tanh(x/T)+1)/2
    eval_chain_draws: int = 5  # chains averaged per eval-mode decision


@dataclass
class TrainerParams:
    epochs: int = 2000
    steps_per_epoch: int = 200
    batch_size: int = 384
    buffer_capacity: int = 100_000
    discount: float = 0.4
    soft_update: float = 0.02
    actor_lr: float = 1e-3
    actor_lr_final: float = 2.5e-4  # linear decay target over the epoch budget
    critic_lr: float = 4e-3
    actor_warmup_epochs: int = 50  # critic pre-fit before the actor starts moving
    reward_scale: float = 2e-3  # applied to rewards entering the buffer only
    reward_offset: float = -1500.0  # subtracted from raw rewards before scaling
    target_chain_draws: int = 3  # chain samples averaged into the bootstrap target
    repair_penalty: float = 1.0  # money per infeasible chosen server
    eval_interval: int = 100  # epochs between deterministic evaluations
    eval_episodes: int = 5
    checkpoint_interval: int = 500
    train_dtype: str = "float32"  # "float64" for gradient-check work


@dataclass
class ScenarioConfig:
    seed: int = 0
    profile: str = "desk"
    world: WorldParams = field(default_factory=WorldParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    attack: AttackParams = field(default_factory=AttackParams)
    trust: TrustConfig = field(default_factory=TrustConfig)
    utility: UtilityParams = field(default_factory=UtilityParams)
    policy: PolicyParams = field(default_factory=PolicyParams)
    trainer: TrainerParams = field(default_factory=TrainerParams)

    def validate(self) -> "ScenarioConfig":
        w = self.world
        if w.num_vehicles < 1 or w.num_servers < 1:
            raise ConfigError("need at least one vehicle and one server")
        if w.num_satellites > w.num_servers:
            raise ConfigError("more satellites than servers")
        if w.slots_per_episode < 1:
            raise ConfigError("episodes need at least one slot")
        for name in (
            "vehicle_speed_range",
            "compute_range",
            "max_load_range",
            "inter_bandwidth_range",
            "task_size_range",
        ):
            lo, hi = getattr(w, name)
            if lo > hi or lo <= 0:
                raise ConfigError(f"world.{name} must satisfy 0 < min <= max, got ({lo}, {hi})")
        lo, hi = self.attack.duration_range
        if lo < 1 or lo > hi:
            raise ConfigError("attack durations must satisfy 1 <= min <= max")
        if not 0.0 < self.policy.beta_min <= self.policy.beta_max < 1.0:
            raise ConfigError("need 0 < beta_min <= beta_max < 1")
        if self.policy.noise_scale not in ("paper", "standard"):
            raise ConfigError("policy.noise_scale must be 'paper' or 'standard'")
        if self.utility.reputation_coeff <= 0 or self.utility.latency_coeff <= 0:
            raise ConfigError("utility coefficients must be > 0")
        if self.trainer.train_dtype not in ("float32", "float64"):
            raise ConfigError("trainer.train_dtype must be float32 or float64")
        # Trust thresholds are re-checked by TrustParams at build time.
        if not 0.0 < self.trust.theta1 < self.trust.theta2 < 1.0:
            raise ConfigError("need 0 < theta1 < theta2 < 1")
        return self


def desk_profile(seed: int = 0) -> ScenarioConfig:
    """Small scenario tuned so one training run stays laptop-sized."""
    return ScenarioConfig(seed=seed, profile="desk").validate()


def paper_profile(seed: int = 0) -> ScenarioConfig:
    """Large-scale experiment profile (10 vehicles, 22 servers, 1e5 epochs)."""
    cfg = ScenarioConfig(seed=seed, profile="paper")
    cfg.world = dataclasses.replace(
        cfg.world,
        num_vehicles=10,
        num_servers=22,
        num_satellites=2,
        map_extent=2000.0,
        rsu_comm_range=800.0,
        slots_per_episode=100,
    )
    cfg.trainer = dataclasses.replace(
        cfg.trainer,
        epochs=100_000,
        steps_per_epoch=1000,
        buffer_capacity=1_000_000,
        actor_lr=1e-4,
        actor_lr_final=1e-4,
        critic_lr=1e-3,
        discount=0.95,
        soft_update=0.005,
        reward_offset=-3600.0,  # ~mean raw reward of the 10-vehicle scenario
        eval_interval=1000,
        checkpoint_interval=5000,
    )
    return cfg.validate()


_PROFILES = {"desk": desk_profile, "paper": paper_profile}

_SECTIONS = {
    "world": WorldParams,
    "channel": ChannelParams,
    "attack": AttackParams,
    "trust": TrustConfig,
    "utility": UtilityParams,
    "policy": PolicyParams,
    "trainer": TrainerParams,
}


def _parse_value(raw: str, pytype: type, key: str):
    raw = raw.strip()
    try:
        if pytype is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        if pytype is int:
            return int(float(raw))
        if pytype is float:
            return float(raw)
        if pytype is str:
            return raw
        # tuple fields: "lo, hi" with element type taken from the default
        parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
        return tuple(float(p) if "." in p or "e" in p.lower() else int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from exc


def load_config(path: str | Path | None = None, profile: str = "desk", seed: int | None = None) -> ScenarioConfig:
    """Build a config from a profile, optionally overridden by an INI file.

    File sections mirror the config sections; unknown sections or keys are
    rejected so typos fail loudly. ``seed``, when given, wins over both.
    """
    if profile not in _PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (use one of {sorted(_PROFILES)})")
    cfg = _PROFILES[profile]()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            if section == "run":
                if parser.has_option("run", "seed"):
                    cfg.seed = int(parser.get("run", "seed"))
                if parser.has_option("run", "profile"):
                    base = parser.get("run", "profile").strip()
                    if base != profile and base in _PROFILES:
                        cfg = _PROFILES[base]()
                        cfg.seed = int(parser.get("run", "seed", fallback=cfg.seed))
                continue
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            target = getattr(cfg, section)
            known = {f.name: f for f in dataclasses.fields(target)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {section}.{key}")
                current = getattr(target, key)
                pytype = type(current) if not isinstance(current, tuple) else tuple
                setattr(target, key, _parse_value(raw, pytype, f"{section}.{key}"))
        cfg.profile = profile if not parser.has_option("run", "profile") else parser.get("run", "profile")
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()


def dump_config(cfg: ScenarioConfig) -> str:
    """Render a config as the same INI text ``load_config`` accepts."""
    lines = ["[run]", f"seed = {cfg.seed}", f"profile = {cfg.profile}", ""]
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for f in dataclasses.fields(getattr(cfg, section)):
            value = getattr(getattr(cfg, section), f.name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)
