"""Command-line entry point: train, eval, sweep, oracle-check.

Every run is pinned by (config, seed): the manifest written before
training freezes the config snapshot and output paths, and all produced
CSVs are byte-reproducible from those inputs. Sweeps fan out over worker
processes and merge rows in sorted order so parallelism never changes the
output bytes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import twinmig
from twinmig import baselines
from twinmig.attacks import export_schedule
from twinmig.config import ConfigError, ScenarioConfig, dump_config, load_config
from twinmig.env import MigrationEnv, SlotMetricsWriter
from twinmig.oracles import check_diffusion_stats, check_gradients, check_latency, check_trust
from twinmig.trainer import (
    TrainingDiverged,
    build_agent,
    evaluate_policy,
    load_bundle_into,
    train,
)
from twinmig.world import save_snapshot

METRICS_SCHEMA = "# schema: twinmig-metrics/1"
SWEEP_SCHEMA = "# schema: twinmig-sweep/1"
EVAL_SCHEMA = "# schema: twinmig-eval/1"

SWEEP_PARAMS = ("utility_ratio", "task_size", "migration_bandwidth", "attack_type")
ATTACK_SCENARIOS = ("direct", "indirect", "coresident", "hybrid")

TRAINABLE = {
    baselines.HYBRID_GDM: None,
    baselines.HYBRID_GDM_NOPRE: 0.0,
    baselines.HYBRID_GDM_FULLPRE: 1.0,
}


def _write_manifest(out: Path, cfg: ScenarioConfig, seeds: list[int], outputs: list[str]) -> None:
    manifest = {
        "format": "twinmig-manifest/1",
        "version": twinmig.__version__,
        "seeds": seeds,
        "profile": cfg.profile,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": outputs,
        "config": dump_config(cfg),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))


def _finish(out: Path, ok: bool) -> None:
    status = "complete" if ok else "failed"
    (out / "status.txt").write_text(
        f"{status}\nfinished_at = {time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n"
    )


def apply_sweep_value(cfg: ScenarioConfig, param: str, value) -> ScenarioConfig:
    """Return a config with one swept parameter pinned to ``value``."""
    cfg = dataclasses.replace(cfg)
    cfg.world = dataclasses.replace(cfg.world)
    cfg.utility = dataclasses.replace(cfg.utility)
    cfg.attack = dataclasses.replace(cfg.attack)
    if param == "utility_ratio":
        cfg.utility.reputation_coeff = float(value) * cfg.utility.latency_coeff
    elif param == "task_size":  # value in MB, range collapsed to the level
        bits = float(value) * 8e6
        cfg.world.task_size_range = (bits, bits)
    elif param == "migration_bandwidth":  # value in Mbps
        bps = float(value) * 1e6
        cfg.world.inter_bandwidth_range = (bps, bps)
    elif param == "attack_type":
        if value not in ATTACK_SCENARIOS:
            raise ConfigError(f"unknown attack scenario {value!r} (use {ATTACK_SCENARIOS})")
        if value != "hybrid":
            keep = {"direct": "direct_rate", "indirect": "indirect_rate", "coresident": "coresident_rate"}[value]
            for field in ("direct_rate", "indirect_rate", "coresident_rate"):
                if field != keep:
                    setattr(cfg.attack, field, 0.0)
    else:
        raise ConfigError(f"unknown sweep parameter {param!r} (use {SWEEP_PARAMS})")
    return cfg.validate()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config(args.config, profile=args.profile, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = ["metrics.csv", "final_checkpoint.npz", "attack_schedule_ep0.csv", "world_snapshot.json", "config.ini"]
    _write_manifest(out, cfg, [cfg.seed], outputs)
    (out / "config.ini").write_text(dump_config(cfg))

    env = MigrationEnv(cfg)
    save_snapshot(env.world, out / "world_snapshot.json")
    env.reset(episode=0)
    export_schedule(env.schedule, out / "attack_schedule_ep0.csv")

    force_pre = TRAINABLE.get(args.variant)
    if args.variant == baselines.RANDOM:
        print("the random baseline needs no training; use `twinmig eval --variant random`", file=sys.stderr)
        return 2
    try:
        train(cfg, force_pre=force_pre, out_dir=out, env=env, progress=args.progress)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc} (diagnostic checkpoint retained)", file=sys.stderr)
        _finish(out, ok=False)
        return 3
    # prepend the schema marker so downstream tools can verify columns
    metrics = out / "metrics.csv"
    metrics.write_text(METRICS_SCHEMA + "\n" + metrics.read_text())
    _finish(out, ok=True)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, profile=args.profile, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = MigrationEnv(cfg)
    rows = []
    for variant_name in args.variants:
        if variant_name == baselines.RANDOM:
            variant = baselines.PolicyVariant(baselines.RANDOM)
        else:
            bundle = build_agent(cfg, env, force_pre=TRAINABLE.get(variant_name))
            if args.checkpoint is None:
                print(f"variant {variant_name} needs --checkpoint", file=sys.stderr)
                return 2
            load_bundle_into(bundle, args.checkpoint)
            variant = baselines.PolicyVariant(variant_name, bundle.policy)
        if args.slot_metrics:
            env.metrics = SlotMetricsWriter(out / f"slots_{variant_name}.csv", env)
        stats = evaluate_policy(
            env,
            lambda obs, masks, rng, v=variant: baselines.act(v, obs, masks, rng),
            episodes=args.episodes,
        )
        if env.metrics is not None:
            env.metrics.close()
            env.metrics = None
        rows.append(
            [
                variant_name,
                args.episodes,
                f"{stats.mean_reward:.6f}",
                f"{stats.mean_latency:.6f}",
                f"{stats.mean_selected_reputation:.6f}",
                stats.violations,
            ]
        )
    with (out / "eval.csv").open("w", newline="") as fh:
        fh.write(EVAL_SCHEMA + "\n")
        writer = csv.writer(fh)
        writer.writerow(["variant", "episodes", "mean_reward", "mean_latency", "mean_selected_reputation", "violations"])
        writer.writerows(rows)
    for row in rows:
        print(" ".join(str(c) for c in row))
    return 0


def _sweep_job(job: tuple) -> list[list]:
    """Train (or restore) one (seed, variant) agent, then eval across values."""
    param, values, seed, variant_name, profile, config_path, train_epochs = job
    base = load_config(config_path, profile=profile, seed=seed)
    if train_epochs is not None:
        base.trainer.epochs = train_epochs
    rows = []
    policy = None
    if variant_name != baselines.RANDOM:
        result = train(base, force_pre=TRAINABLE.get(variant_name))
        policy = result.bundle.policy
    for value in values:
        cfg = apply_sweep_value(load_config(config_path, profile=profile, seed=seed), param, value)
        env = MigrationEnv(cfg)
        if variant_name == baselines.RANDOM:
            variant = baselines.PolicyVariant(baselines.RANDOM)
        else:
            variant = baselines.PolicyVariant(variant_name, policy)
        stats = evaluate_policy(
            env,
            lambda obs, masks, rng, v=variant: baselines.act(v, obs, masks, rng),
            episodes=cfg.trainer.eval_episodes,
        )
        rows.append(
            [
                param,
                value,
                seed,
                variant_name,
                f"{stats.mean_reward:.6f}",
                f"{stats.mean_latency:.6f}",
                f"{stats.mean_selected_reputation:.6f}",
            ]
        )
    return rows


def cmd_sweep(args) -> int:
    values: list = []
    if args.param == "attack_type":
        values = list(args.values) if args.values else list(ATTACK_SCENARIOS)
    else:
        values = [float(v) for v in args.values]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [
        (args.param, values, seed, variant, args.profile, args.config, args.train_epochs)
        for seed in args.seeds
        for variant in args.variants
    ]
    if not values:
        jobs = []
    rows: list[list] = []
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for job_rows in pool.map(_sweep_job, jobs):
                rows.extend(job_rows)
    else:
        for job in jobs:
            rows.extend(_sweep_job(job))
    rows.sort(key=lambda r: (str(r[1]), int(r[2]), str(r[3])))
    with (out / "sweep.csv").open("w", newline="") as fh:
        fh.write(SWEEP_SCHEMA + "\n")
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "seed", "variant", "mean_reward", "mean_latency", "mean_selected_reputation"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    mutate = 0.01 if args.mutate else 0.0
    checks = [
        check_latency(samples=1000, mutate=mutate),
        check_trust(samples=1000, mutate=mutate),
        check_gradients(mutate=mutate * 0.1),
        check_diffusion_stats(samples=100_000, mutate=mutate * 50),
    ]
    ok = True
    for result in checks:
        print(result.line())
        ok &= result.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twinmig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file (overrides profile values)")
    common.add_argument("--profile", default="desk", choices=("desk", "paper"))
    common.add_argument("--seed", type=int, default=None)

    p_train = sub.add_parser("train", parents=[common], help="train one agent and stream metrics")
    p_train.add_argument("--out", required=True)
    p_train.add_argument(
        "--variant",
        default=baselines.HYBRID_GDM,
        choices=sorted(baselines.VARIANTS),
    )
    p_train.add_argument("--progress", action="store_true")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint and/or baselines")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--episodes", type=int, default=5)
    p_eval.add_argument("--variants", type=_str_list, default=[baselines.HYBRID_GDM, baselines.RANDOM])
    p_eval.add_argument("--slot-metrics", action="store_true", help="also write per-slot reputation traces")
    p_eval.set_defaults(fn=cmd_eval)

    p_sweep = sub.add_parser("sweep", parents=[common], help="evaluate variants across one parameter")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p_sweep.add_argument("--values", type=_str_list, default=[])
    p_sweep.add_argument("--seeds", type=_int_list, default=[0])
    p_sweep.add_argument("--variants", type=_str_list, default=list(baselines.VARIANTS))
    p_sweep.add_argument("--workers", type=int, default=2)
    p_sweep.add_argument(
        "--train-epochs",
        type=int,
        default=None,
        help="override the training budget of each sweep agent",
    )
    p_sweep.set_defaults(fn=cmd_sweep)

    p_oracle = sub.add_parser("oracle-check", help="run the independent self-check oracles")
    p_oracle.add_argument("--mutate", action="store_true", help="perturb one constant per check to prove sensitivity")
    p_oracle.set_defaults(fn=cmd_oracle_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
