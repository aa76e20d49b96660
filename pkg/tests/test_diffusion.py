"""Schedule math, reverse-chain behavior, and distribution processing."""

import numpy as np
import pytest

from twinmig.autodiff import no_grad
from twinmig.config import PolicyParams
from twinmig.diffusion import (
    DiffusionPolicy,
    build_schedule,
    forward_noise,
)
from twinmig.oracles import check_diffusion_stats


def make_policy(V=2, S=4, obs_dim=6, dtype=np.float64, **param_overrides):
    params = PolicyParams(hidden_width=16, **param_overrides)
    return DiffusionPolicy(V, S, obs_dim, params, seed=3, dtype=dtype)


class TestSchedule:
    def test_single_step(self):
        sched = build_schedule(1, 0.2, 0.2)
        assert sched.alpha_bars[1] == pytest.approx(0.8)
        assert sched.beta_tildes[1] == 0.0

    def test_constant_beta_closed_form(self):
        sched = build_schedule(6, 0.1, 0.1)
        for t in range(1, 7):
            assert sched.alpha_bars[t] == pytest.approx(0.9**t, rel=1e-12)

    def test_alpha_bar_strictly_decreasing(self):
        sched = build_schedule(5, 0.05, 0.5)
        assert np.all(np.diff(sched.alpha_bars[0:]) < 0)

    def test_invalid_range_rejected(self):
        with pytest.raises(ValueError):
            build_schedule(5, 0.0, 0.5)
        with pytest.raises(ValueError):
            build_schedule(5, 0.6, 0.5)
        with pytest.raises(ValueError):
            build_schedule(0, 0.1, 0.2)

    def test_noise_scale_modes(self):
        sched = build_schedule(5, 0.05, 0.5)
        assert sched.noise_scale(1, "paper") == 0.0
        for t in range(2, 6):
            assert sched.noise_scale(t, "paper") == pytest.approx((sched.beta_tildes[t] / 2) ** 2)
            assert sched.noise_scale(t, "standard") == pytest.approx(np.sqrt(sched.beta_tildes[t]))


class TestForwardNoise:
    def test_tiny_beta_keeps_sample(self):
        sched = build_schedule(4, 1e-8, 1e-8)
        x0 = np.linspace(-1, 1, 10)
        xt = forward_noise(x0, 4, sched, np.random.default_rng(0))
        np.testing.assert_allclose(xt, x0, atol=1e-3)

    def test_variance_matches_schedule(self):
        sched = build_schedule(5, 0.05, 0.5)
        rng = np.random.default_rng(1)
        xt = forward_noise(np.zeros(100_000), 3, sched, rng)
        assert xt.var() == pytest.approx(1.0 - sched.alpha_bars[3], rel=0.02)

    def test_seeded_determinism(self):
        sched = build_schedule(5, 0.05, 0.5)
        x0 = np.ones(8)
        a = forward_noise(x0, 2, sched, np.random.default_rng(7))
        b = forward_noise(x0, 2, sched, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_step_bounds(self):
        sched = build_schedule(3, 0.05, 0.5)
        with pytest.raises(ValueError):
            forward_noise(np.zeros(2), 0, sched, np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward_noise(np.zeros(2), 4, sched, np.random.default_rng(0))


class TestReverseChain:
    def test_single_step_zero_net_mean(self):
        # a zero prediction leaves mu = x_t / sqrt(alpha_t)
        from twinmig.autodiff import Tensor

        policy = make_policy()
        policy.net.set_flat(np.zeros(policy.net.num_params()))
        x = np.random.default_rng(0).normal(size=(2, policy.action_dim))
        obs = Tensor(np.zeros((2, policy.obs_dim)))
        for t in (1, 3, 5):
            with no_grad():
                out = policy.denoise_step(Tensor(x), t, obs, eps=None).data
            np.testing.assert_allclose(out, x / np.sqrt(policy.schedule.alphas[t]), rtol=1e-12)

    def test_zero_net_matches_manual_unroll(self):
        policy = make_policy()
        policy.net.set_flat(np.zeros(policy.net.num_params()))
        rng = np.random.default_rng(5)
        noises = policy.draw_chain_noise(3, rng)
        with no_grad():
            got = policy.reverse_chain(np.zeros((3, policy.obs_dim)), noises).data
        sched = policy.schedule
        x = noises[0].astype(np.float64)
        for i, t in enumerate(range(sched.steps, 0, -1)):
            x = x / np.sqrt(sched.alphas[t]) + sched.noise_scale(t) * noises[1 + i]
        np.testing.assert_allclose(got, x, rtol=1e-6, atol=1e-9)

    def test_final_step_deterministic(self):
        # beta_tilde_1 = 0: the last update adds no noise regardless of eps
        policy = make_policy()
        rng = np.random.default_rng(6)
        noises = policy.draw_chain_noise(1, rng)
        variant = [n.copy() for n in noises]
        variant[-1] = np.full_like(variant[-1], 99.0)  # eps of step t=1
        obs = np.zeros((1, policy.obs_dim))
        with no_grad():
            a = policy.reverse_chain(obs, noises).data
            b = policy.reverse_chain(obs, variant).data
        np.testing.assert_array_equal(a, b)

    def test_zero_eps_gives_mean_path(self):
        policy = make_policy()
        rng = np.random.default_rng(8)
        noises = policy.draw_chain_noise(1, rng)
        zeroed = [noises[0]] + [np.zeros_like(n) for n in noises[1:]]
        with no_grad():
            out1 = policy.reverse_chain(np.zeros((1, policy.obs_dim)), zeroed).data
            out2 = policy.reverse_chain(np.zeros((1, policy.obs_dim)), zeroed).data
        np.testing.assert_array_equal(out1, out2)

    def test_zero_net_stats_match_closed_form(self):
        result = check_diffusion_stats(samples=100_000, seed=21)
        assert result.passed, result.detail

    def test_zero_net_stats_standard_mode(self):
        result = check_diffusion_stats(samples=100_000, seed=22, noise_scale="standard")
        assert result.passed, result.detail

    def test_stats_check_detects_mutation(self):
        assert not check_diffusion_stats(samples=20_000, seed=23, mutate=1.0).passed


class TestProcessing:
    def test_equal_logits_uniform(self):
        policy = make_policy(V=1, S=4)
        from twinmig.autodiff import Tensor

        x0 = Tensor(np.zeros((1, policy.action_dim)))
        logits, _ = policy.mask_logits(np.ones((1, 1, 4), dtype=bool))
        dist = policy.process(x0, logits).data[0]
        np.testing.assert_allclose(dist[policy.server_block(0)], 0.25)
        np.testing.assert_allclose(dist[policy.pre_server_block(0)], 0.25)

    def test_single_feasible_server_gets_all_mass(self):
        policy = make_policy(V=1, S=4)
        from twinmig.autodiff import Tensor

        masks = np.zeros((1, 1, 4), dtype=bool)
        masks[0, 0, 2] = True
        logits, empty = policy.mask_logits(masks)
        assert not empty.any()
        x0 = Tensor(np.random.default_rng(0).normal(size=(1, policy.action_dim)))
        dist = policy.process(x0, logits).data[0]
        block = dist[policy.server_block(0)]
        assert block[2] == pytest.approx(1.0)
        assert block[[0, 1, 3]].max() <= 1e-12

    def test_block_sums_and_share_range(self):
        policy = make_policy(V=3, S=5)
        from twinmig.autodiff import Tensor

        rng = np.random.default_rng(1)
        x0 = Tensor(rng.normal(size=(64, policy.action_dim)) * 3)
        masks = rng.random((64, 3, 5)) < 0.6
        logits, _ = policy.mask_logits(masks)
        dist = policy.process(x0, logits).data
        for v in range(3):
            np.testing.assert_allclose(dist[:, policy.server_block(v)].sum(axis=1), 1.0, atol=1e-9)
            np.testing.assert_allclose(dist[:, policy.pre_server_block(v)].sum(axis=1), 1.0, atol=1e-9)
            shares = dist[:, policy.pre_fraction_index(v)]
            assert np.all((shares >= 0.0) & (shares <= 1.0))

    def test_shift_invariance_of_blocks(self):
        policy = make_policy(V=1, S=4)
        from twinmig.autodiff import Tensor

        rng = np.random.default_rng(2)
        raw = rng.normal(size=(1, policy.action_dim))
        shifted = raw.copy()
        shifted[0, policy.server_block(0)] += 55.0
        logits, _ = policy.mask_logits(np.ones((1, 1, 4), dtype=bool))
        a = policy.process(Tensor(raw), logits).data[0][policy.server_block(0)]
        b = policy.process(Tensor(shifted), logits).data[0][policy.server_block(0)]
        np.testing.assert_allclose(a, b, atol=1e-9)
        assert np.argmax(a) == np.argmax(b)

    def test_empty_mask_flagged_and_unmasked(self):
        policy = make_policy(V=2, S=3)
        masks = np.zeros((2, 3), dtype=bool)
        masks[1, 0] = True
        logits, empty = policy.mask_logits(masks)
        assert empty.tolist() == [True, False]
        assert np.all(logits[policy.server_block(0)] == 0.0)

    def test_force_pre(self):
        policy = make_policy(V=2, S=3)
        from twinmig.autodiff import Tensor

        x0 = Tensor(np.random.default_rng(3).normal(size=(1, policy.action_dim)))
        logits, _ = policy.mask_logits(np.ones((2, 3), dtype=bool))
        dist = policy.process(x0, logits[None], force_pre=1.0).data[0]
        for v in range(2):
            assert dist[policy.pre_fraction_index(v)] == 1.0


class TestGenerate:
    def test_length_scales_with_scenario(self):
        for V, S in ((1, 1), (2, 5), (4, 6), (3, 22)):
            policy = make_policy(V=V, S=S, obs_dim=4 * V + 2 * S)
            assert policy.action_dim == V * (2 * S + 1)
            out = policy.generate(
                np.zeros(4 * V + 2 * S), np.ones((V, S), dtype=bool), np.random.default_rng(0)
            )
            assert out.distribution.shape == (V * (2 * S + 1),)

    def test_output_shapes(self):
        policy = make_policy(V=3, S=4, obs_dim=10)
        out = policy.generate(
            np.zeros(10), np.ones((3, 4), dtype=bool), np.random.default_rng(0), mode="train"
        )
        assert out.distribution.shape == (3 * 9,)
        assert out.server_idx.shape == (3,)
        assert np.all((1 <= out.server_idx) & (out.server_idx <= 4))
        assert np.all((0.0 <= out.k_pre) & (out.k_pre <= 1.0))

    def test_eval_mode_deterministic(self):
        policy = make_policy(V=2, S=4, obs_dim=6)
        obs = np.linspace(0, 1, 6)
        masks = np.ones((2, 4), dtype=bool)
        a = policy.generate(obs, masks, np.random.default_rng(9), mode="eval")
        b = policy.generate(obs, masks, np.random.default_rng(9), mode="eval")
        np.testing.assert_array_equal(a.distribution, b.distribution)
        np.testing.assert_array_equal(a.server_idx, b.server_idx)
        np.testing.assert_array_equal(a.k_pre, b.k_pre)

    def test_train_sampling_respects_masks(self):
        policy = make_policy(V=1, S=5, obs_dim=6)
        masks = np.zeros((1, 5), dtype=bool)
        masks[0, [1, 3]] = True
        rng = np.random.default_rng(4)
        for _ in range(200):
            out = policy.generate(np.zeros(6), masks, rng, mode="train")
            assert out.server_idx[0] in (2, 4)
            assert out.pre_idx[0] in (2, 4)

    def test_invalid_mode_rejected(self):
        policy = make_policy()
        with pytest.raises(ValueError):
            policy.generate(np.zeros(6), np.ones((2, 4), dtype=bool), np.random.default_rng(0), mode="x")
