"""One seeded episode under the hybrid attack mix, served by random actions.

Shows the attack schedule, then steps the environment and prints how
loads, reputations, and feasibility react while vehicles keep being
served by the repair-guarded random policy.
"""

import numpy as np

from twinmig import baselines
from twinmig.config import desk_profile
from twinmig.env import MigrationEnv


def main() -> None:
    cfg = desk_profile(seed=42)
    cfg.world.slots_per_episode = 25
    env = MigrationEnv(cfg)
    obs = env.reset(episode=0)

    print("attack schedule for this episode:")
    for ev in env.schedule:
        print(f"  slot {ev.start:3d} +{ev.duration:2d}  {ev.kind:14s} -> server {ev.target}")
    print()

    variant = baselines.PolicyVariant(baselines.RANDOM)
    rng = np.random.default_rng(0)
    print("slot  reward     feasible  mean_load  min_rep  repairs")
    for slot in range(cfg.world.slots_per_episode):
        action = baselines.act(variant, obs, env.feasible_masks(), rng)
        result = env.step(action)
        loads = np.array([s.current_load / s.max_load for s in env.world.servers])
        reps = env.world.reputations()
        feasible = int(env.feasible_masks().any(axis=0).sum())
        print(
            f"{slot:4d}  {result.reward:9.1f}  {feasible:5d}/{env.num_servers}"
            f"   {loads.mean():8.2f}  {reps.min():7.3f}  {result.repairs:5d}"
        )
        obs = result.observation
        if result.terminal:
            break


if __name__ == "__main__":
    main()
