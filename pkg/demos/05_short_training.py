"""A compressed training run: watch the agent pull ahead of random.

Uses the desk scenario with a reduced epoch budget so it finishes in a
couple of minutes; the full desk profile (2000 epochs) separates much
further. The final comparison evaluates the trained policy, its no-pre
ablation behavior, and the random baseline on the same seeded episodes.
"""

from twinmig import baselines
from twinmig.config import desk_profile
from twinmig.trainer import evaluate_policy, policy_act_fn, train


def main() -> None:
    cfg = desk_profile(seed=1)
    cfg.trainer.epochs = 400
    cfg.trainer.eval_interval = 50
    print(f"training {cfg.trainer.epochs} epochs x {cfg.trainer.steps_per_epoch} steps ...")
    result = train(cfg, progress=True)

    env = result.env
    trained = evaluate_policy(env, policy_act_fn(result.bundle.policy), episodes=5)
    nopre = evaluate_policy(env, policy_act_fn(result.bundle.policy, force_pre=0.0), episodes=5)
    variant = baselines.PolicyVariant(baselines.RANDOM)
    random_stats = evaluate_policy(
        env, lambda o, m, r: baselines.act(variant, o, m, r), episodes=5
    )

    print("\n                    reward   latency  selected-reputation")
    for name, stats in (("trained", trained), ("forced k=0", nopre), ("random", random_stats)):
        print(
            f"  {name:14s} {stats.mean_reward:9.1f}  {stats.mean_latency:7.1f}"
            f"  {stats.mean_selected_reputation:9.3f}"
        )


if __name__ == "__main__":
    main()
