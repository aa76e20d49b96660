"""Anatomy of one hybrid action: noise schedule, reverse chain, processing.

Prints the schedule tables, verifies the zero-network chain statistics
against their closed form, and shows how feasibility masks reshape the
processed distribution before an action is drawn.
"""

import numpy as np

from twinmig.autodiff import no_grad
from twinmig.config import PolicyParams
from twinmig.diffusion import DiffusionPolicy, build_schedule
from twinmig.oracles import zero_net_chain_variance


def main() -> None:
    sched = build_schedule(5, 0.05, 0.5)
    print("t   beta    alpha   alpha_bar  beta_tilde")
    for t in range(1, 6):
        print(
            f"{t}  {sched.betas[t]:6.3f}  {sched.alphas[t]:6.3f}   {sched.alpha_bars[t]:7.4f}"
            f"    {sched.beta_tildes[t]:7.4f}"
        )

    params = PolicyParams(hidden_width=16)
    policy = DiffusionPolicy(num_vehicles=1, num_servers=4, obs_dim=6, params=params, dtype=np.float64)
    policy.net.set_flat(np.zeros(policy.net.num_params()))
    rng = np.random.default_rng(0)
    with no_grad():
        x0 = policy.reverse_chain(np.zeros((50_000, 6)), policy.draw_chain_noise(50_000, rng)).data
    scales = np.array([0.0] + [sched.noise_scale(t) for t in range(1, 6)])
    want = zero_net_chain_variance(sched.alphas, sched.alpha_bars, scales)
    print(f"\nzero-network chain: empirical var {x0.var():.4f}, closed form {want:.4f}")

    obs = np.linspace(0, 1, 6)
    masks = np.array([[True, False, True, True]])  # server 2 out of range
    out = policy.generate(obs, masks, np.random.default_rng(3), mode="eval")
    print("\nfeasibility mask", masks[0].tolist())
    print("serving-server probabilities:", out.distribution[policy.server_block(0)].round(4))
    print("pre-server probabilities:    ", out.distribution[policy.pre_server_block(0)].round(4))
    print(f"chosen: serve on {out.server_idx[0]}, pre-migrate {out.k_pre[0]:.2f} to {out.pre_idx[0]}")


if __name__ == "__main__":
    main()
