"""Comparison policies: the trained actor, its share ablations, and random.

The ablations share every code path with the full policy and only pin the
pre-migration share (0 = never pre-migrate, 1 = always ship everything).
The random policy draws uniformly over feasible servers and a uniform
share, so it respects the same constraint masks the learned policy sees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from twinmig.diffusion import DiffusionPolicy
from twinmig.env import HybridAction

HYBRID_GDM = "hybrid_gdm"
HYBRID_GDM_NOPRE = "hybrid_gdm_nopre"
HYBRID_GDM_FULLPRE = "hybrid_gdm_fullpre"
RANDOM = "random"
VARIANTS = (HYBRID_GDM, HYBRID_GDM_NOPRE, HYBRID_GDM_FULLPRE, RANDOM)

FORCED_SHARE = {HYBRID_GDM_NOPRE: 0.0, HYBRID_GDM_FULLPRE: 1.0}


@dataclass
class PolicyVariant:
    kind: str
    policy: DiffusionPolicy | None = None  # None only for the random variant

    def __post_init__(self) -> None:
        if self.kind not in VARIANTS:
            raise ValueError(f"unknown variant {self.kind!r}")
        if self.kind != RANDOM and self.policy is None:
            raise ValueError(f"variant {self.kind} needs a policy")

    @property
    def force_pre(self) -> float | None:
        return FORCED_SHARE.get(self.kind)


def act(
    variant: PolicyVariant,
    obs: np.ndarray,
    masks: np.ndarray,
    rng: np.random.Generator,
    mode: str = "eval",
) -> HybridAction:
    """One joint action under the variant's rule."""
    if variant.kind == RANDOM:
        num_vehicles, num_servers = masks.shape
        server_idx = np.empty(num_vehicles, dtype=np.int64)
        pre_idx = np.empty(num_vehicles, dtype=np.int64)
        for v in range(num_vehicles):
            feasible = np.flatnonzero(masks[v])
            if feasible.size == 0:
                feasible = np.arange(num_servers)  # repaired downstream
            server_idx[v] = 1 + int(rng.choice(feasible))
            pre_idx[v] = 1 + int(rng.choice(feasible))
        return HybridAction(server_idx, pre_idx, rng.uniform(0.0, 1.0, num_vehicles))
    out = variant.policy.generate(obs, masks, rng, mode=mode, force_pre=variant.force_pre)
    return HybridAction(out.server_idx, out.pre_idx, out.k_pre)
