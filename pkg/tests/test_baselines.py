"""Baseline policy variants: forced shares and mask-respecting randomness."""

import numpy as np
import pytest

from twinmig.baselines import (
    HYBRID_GDM,
    HYBRID_GDM_FULLPRE,
    HYBRID_GDM_NOPRE,
    RANDOM,
    PolicyVariant,
    act,
)
from twinmig.config import desk_profile
from twinmig.diffusion import DiffusionPolicy


def make_policy(V=2, S=4):
    params = desk_profile().policy
    return DiffusionPolicy(V, S, 4 * V + 2 * S, params, seed=1)


class TestVariants:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            PolicyVariant("mappo")

    def test_trained_variants_need_policy(self):
        with pytest.raises(ValueError):
            PolicyVariant(HYBRID_GDM)

    def test_forced_shares(self):
        policy = make_policy()
        assert PolicyVariant(HYBRID_GDM, policy).force_pre is None
        assert PolicyVariant(HYBRID_GDM_NOPRE, policy).force_pre == 0.0
        assert PolicyVariant(HYBRID_GDM_FULLPRE, policy).force_pre == 1.0


class TestAct:
    def test_nopre_zero_share(self):
        variant = PolicyVariant(HYBRID_GDM_NOPRE, make_policy())
        obs = np.zeros(16)
        masks = np.ones((2, 4), dtype=bool)
        for seed in range(5):
            action = act(variant, obs, masks, np.random.default_rng(seed), mode="train")
            np.testing.assert_array_equal(action.k_pre, np.zeros(2))

    def test_fullpre_unit_share(self):
        variant = PolicyVariant(HYBRID_GDM_FULLPRE, make_policy())
        action = act(variant, np.zeros(16), np.ones((2, 4), dtype=bool), np.random.default_rng(0))
        np.testing.assert_array_equal(action.k_pre, np.ones(2))

    def test_random_single_feasible(self):
        variant = PolicyVariant(RANDOM)
        masks = np.zeros((2, 4), dtype=bool)
        masks[:, 2] = True
        for seed in range(10):
            action = act(variant, np.zeros(16), masks, np.random.default_rng(seed))
            assert (action.server_idx == 3).all()
            assert (action.pre_idx == 3).all()
            assert ((action.k_pre >= 0) & (action.k_pre <= 1)).all()

    def test_random_respects_masks(self):
        variant = PolicyVariant(RANDOM)
        masks = np.zeros((1, 5), dtype=bool)
        masks[0, [0, 4]] = True
        rng = np.random.default_rng(3)
        seen = set()
        for _ in range(100):
            action = act(variant, np.zeros(14), masks, rng)
            seen.add(int(action.server_idx[0]))
        assert seen == {1, 5}

    def test_variants_share_server_machinery(self):
        # same seed stream: NoPre and FullPre pick identical servers, only
        # the share channel differs
        policy = make_policy()
        obs = np.linspace(0, 1, 16)
        masks = np.ones((2, 4), dtype=bool)
        a = act(PolicyVariant(HYBRID_GDM_NOPRE, policy), obs, masks, np.random.default_rng(7))
        b = act(PolicyVariant(HYBRID_GDM_FULLPRE, policy), obs, masks, np.random.default_rng(7))
        np.testing.assert_array_equal(a.server_idx, b.server_idx)
        np.testing.assert_array_equal(a.pre_idx, b.pre_idx)
        assert a.k_pre.tolist() == [0.0, 0.0] and b.k_pre.tolist() == [1.0, 1.0]
