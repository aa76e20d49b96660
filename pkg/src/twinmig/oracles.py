"""Independent straight-line oracles for self-checking.

Each oracle re-derives a pipeline from the base formulas with no code
shared with the implementation it audits. The ``check_*`` functions run
randomized comparisons and are used both by the test suite and by the
``oracle-check`` CLI subcommand. A ``mutate`` knob deliberately perturbs
one constant on the implementation side so the sensitivity of each check
can itself be demonstrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# latency pipeline oracle (straight-line re-derivation)
# ---------------------------------------------------------------------------

def latency_oracle(
    pv_pos: tuple[float, float, float],
    s_pos: tuple[float, float, float],
    sp_pos: tuple[float, float, float],
    s_is_satellite: bool,
    sp_is_satellite: bool,
    gain_rsu: float,
    gain_sat_los: float,
    gain_sat_nlos: float,
    freq_rsu: float,
    freq_sat: float,
    light_speed: float,
    tx_power: float,
    noise: float,
    up_bw: float,
    down_bw_s: float,
    down_bw_sp: float,
    inter_bw: float,
    upload_bits: float,
    process_bits: float,
    k_pre: float,
    load_s: float,
    load_sp: float,
    cap_s: float,
    cap_sp: float,
    cycles_per_bit: float,
    same_server: bool,
) -> dict[str, float]:
    """Total migration delay from raw scalars, re-derived end to end."""

    def dist(a, b):
        return ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2) ** 0.5

    def gain(pos, is_sat):
        d = dist(pv_pos, pos)
        f = freq_sat if is_sat else freq_rsu
        a = (gain_sat_los + gain_sat_nlos) if is_sat else gain_rsu
        return a * (light_speed / (4.0 * math.pi * f * d)) ** 2

    def rate(bw, g):
        return bw * math.log(1.0 + tx_power * g / noise, 2)

    if same_server:
        k_pre = 0.0
    d_mig = k_pre * process_bits
    r_up = rate(up_bw, gain(s_pos, s_is_satellite))
    r_down_s = rate(down_bw_s, gain(s_pos, s_is_satellite))
    r_down_sp = rate(down_bw_sp, gain(sp_pos, sp_is_satellite))
    t_up = upload_bits / r_up
    t_que_s = load_s / cap_s
    t_que_sp = load_sp / cap_sp
    t_mig = 0.0 if d_mig == 0.0 else d_mig / inter_bw
    t_pro_s = t_que_s + cycles_per_bit * (process_bits - d_mig) / cap_s
    t_pro_sp = t_mig + t_que_sp + cycles_per_bit * d_mig / cap_sp
    t_pro = t_pro_s if t_pro_s >= t_pro_sp else t_pro_sp
    t_down = (process_bits - d_mig) / r_down_s
    if d_mig > 0.0:
        t_down += d_mig / r_down_sp
    return {
        "uplink": t_up,
        "migration": t_mig,
        "queue_current": t_que_s,
        "queue_pre": t_que_sp,
        "process_current": t_pro_s,
        "process_pre": t_pro_sp,
        "process_max": t_pro,
        "downlink": t_down,
        "total": t_up + t_pro + t_down,
    }


def check_latency(samples: int = 1000, seed: int = 2024, mutate: float = 0.0) -> CheckResult:
    """Compare the channel pipeline against the oracle on random inputs."""
    from twinmig.channel import ChannelConstants, Rates, channel_gain, link_rate, migration_latency
    from twinmig.world import EdgeServer, Position, TaskSpec

    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        pv = tuple(rng.uniform(0, 2000, size=3))
        ps = tuple(rng.uniform(1, 2000, size=3))
        psp = tuple(rng.uniform(1, 2000, size=3))
        s_sat = bool(rng.random() < 0.3)
        sp_sat = bool(rng.random() < 0.3)
        same = bool(rng.random() < 0.1)
        gains = dict(gain_rsu=rng.uniform(1, 6), gain_sat_los=rng.uniform(0.5, 3), gain_sat_nlos=rng.uniform(0.1, 1))
        freqs = dict(freq_rsu=rng.uniform(1e9, 6e9), freq_sat=rng.uniform(8e9, 16e9))
        caps = rng.uniform(5e7, 3e8, size=2)
        loads = rng.uniform(0, 5e10, size=2)
        maxl = 1e11
        inter = rng.uniform(1e8, 1e9)
        bws = rng.uniform(5e6, 5e7, size=3)
        upload = rng.uniform(1e7, 2e9)
        process = rng.uniform(1e7, 2e9)
        k = float(rng.uniform(0, 1))
        ev = float(rng.uniform(0.1, 100))

        def mk(idx, pos, sat, cap, load):
            return EdgeServer(
                id=idx,
                kind="satellite" if sat else "rsu",
                position=Position(*pos),
                compute_capability=cap,
                max_load=maxl,
                comm_range=1e9,
                uplink_bandwidth=bws[0],
                downlink_bandwidth=bws[1] if idx == 1 else bws[2],
                inter_server_bandwidth={1: inter, 2: inter},
                gain_los=gains["gain_sat_los"] if sat else gains["gain_rsu"],
                gain_nlos=gains["gain_sat_nlos"] if sat else 0.0,
                noise_power=1e-13,
                base_load=0.0,
                current_load=load,
            )

        s = mk(1, ps, s_sat, caps[0], loads[0])
        sp = s if same else mk(2, psp, sp_sat, caps[1], loads[1])
        consts_s = ChannelConstants(carrier_frequency=freqs["freq_sat"] if s_sat else freqs["freq_rsu"])
        consts_sp = ChannelConstants(carrier_frequency=freqs["freq_sat"] if sp_sat else freqs["freq_rsu"])
        pvp = Position(*pv)
        rates = Rates(
            uplink=link_rate(bws[0], 0.5, channel_gain(s, math.dist(pv, ps), consts_s), 1e-13),
            downlink_current=link_rate(s.downlink_bandwidth, 0.5, channel_gain(s, math.dist(pv, ps), consts_s), 1e-13),
            downlink_pre=link_rate(sp.downlink_bandwidth, 0.5, channel_gain(sp, math.dist(pv, ps if same else psp), consts_sp), 1e-13),
        )
        got = migration_latency(TaskSpec(upload, process), k, s, sp, rates, cycles_per_bit=ev + mutate)
        want = latency_oracle(
            pv, ps, ps if same else psp, s_sat, (s_sat if same else sp_sat),
            gains["gain_rsu"], gains["gain_sat_los"], gains["gain_sat_nlos"],
            freqs["freq_rsu"], freqs["freq_sat"], 2.998e8, 0.5, 1e-13,
            bws[0], bws[1], bws[1] if same else bws[2], inter, upload, process, k,
            loads[0], loads[0] if same else loads[1], caps[0], caps[0] if same else caps[1],
            ev, same,
        )
        for field, expected in want.items():
            actual = getattr(got, field)
            denom = max(abs(expected), 1e-30)
            worst = max(worst, abs(actual - expected) / denom)
    passed = worst < 1e-9
    return CheckResult("latency_pipeline", passed, f"max relative error {worst:.3e} over {samples} inputs")


# ---------------------------------------------------------------------------
# finite-difference gradient oracle
# ---------------------------------------------------------------------------

def finite_difference(fn, vec: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``fn`` at ``vec``."""
    grad = np.zeros_like(vec, dtype=np.float64)
    work = vec.astype(np.float64).copy()
    for i in range(vec.size):
        orig = work[i]
        work[i] = orig + h
        hi = fn(work)
        work[i] = orig - h
        lo = fn(work)
        work[i] = orig
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def max_relative_error(got: np.ndarray, want: np.ndarray, floor: float = 1e-8) -> float:
    """Worst elementwise relative error with a denominator floor."""
    denom = np.maximum(np.abs(want), floor)
    return float(np.max(np.abs(got - want) / denom))


# ---------------------------------------------------------------------------
# trust formula oracle
# ---------------------------------------------------------------------------

def trust_oracle(
    d_tot: float,
    d_abr: float,
    r_tot: int,
    r_suc: int,
    n_suc: int,
    n_tot: int,
    positives: int,
    evaluations: int,
    rep_past: float,
    theta1: float,
    theta2: float,
    alpha: float,
    omega: float,
    xi: float,
    phi: float,
) -> dict[str, float]:
    """Reputation chain re-derived from the base formulas."""
    p_data = 1.0 - d_abr / d_tot
    p_ser = r_suc / r_tot
    beta = 1.0 if n_tot == 0 else n_suc / n_tot
    weighted = omega * p_data + (1.0 - omega) * p_ser
    if beta < theta1:
        rep_net = 0.0
    elif beta < theta2:
        rep_net = alpha * weighted
    else:
        rep_net = weighted
    rep_int = (positives + 1.0) / (evaluations + 2.0)
    rep = xi * rep_net + (1.0 - xi) * rep_int
    rep_new = phi * rep + (1.0 - phi) * rep_past
    return {
        "p_data": p_data,
        "p_ser": p_ser,
        "rep_net": rep_net,
        "rep_int": rep_int,
        "rep_combined": rep,
        "rep_current": rep_new,
    }


# ---------------------------------------------------------------------------
# miniature-agent gradient check through the full denoising chain
# ---------------------------------------------------------------------------

def check_gradients(seed: int = 33, mutate: float = 0.0, tolerance: float = 1e-4) -> CheckResult:
    """Actor- and critic-loss gradients vs central finite differences.

    Runs a miniature agent (1 vehicle, 2 servers, 2 denoising steps,
    width-8 networks, float64) so the actor check exercises gradient flow
    through every reverse step. Relative errors use a 1e-8 denominator
    floor for near-zero components.
    """
    from twinmig.config import PolicyParams
    from twinmig.diffusion import DiffusionPolicy
    from twinmig.nn import DenseNet
    from twinmig.trainer import actor_loss, critic_input, critic_loss

    rng = np.random.default_rng(seed)
    params = PolicyParams(denoise_steps=2, hidden_width=8)
    policy = DiffusionPolicy(num_vehicles=1, num_servers=2, obs_dim=8, params=params, seed=seed, dtype=np.float64)
    batch = 3
    obs = rng.normal(size=(batch, 8))
    masks = np.ones((batch, 1, 2), dtype=bool)
    masks[0, 0, 0] = False
    logits, _ = policy.mask_logits(masks)
    q = rng.normal(size=(batch, policy.action_dim))
    noises = policy.draw_chain_noise(batch, rng)

    def actor_loss_at(flat):
        policy.net.set_flat(flat)
        return float(actor_loss(policy, obs, logits, q, noises).data)

    flat0 = policy.net.get_flat()
    policy.net.zero_grad()
    actor_loss(policy, obs, logits, q, noises).backward()
    analytic = policy.net.grad_flat() + mutate
    numeric = finite_difference(actor_loss_at, flat0)
    policy.net.set_flat(flat0)
    actor_err = max_relative_error(analytic, numeric)

    critic_dims = [8 + 1, 8, 8, policy.action_dim]
    critic1 = DenseNet(critic_dims, seed=seed + 1, dtype=np.float64)
    critic2 = DenseNet(critic_dims, seed=seed + 2, dtype=np.float64)
    fake_batch = {
        "obs": obs,
        "k_pre": rng.uniform(0, 1, size=(batch, 1)),
        "server_idx": rng.integers(1, 3, size=(batch, 1)),
        "pre_idx": rng.integers(1, 3, size=(batch, 1)),
    }
    targets = rng.normal(size=batch)
    n1 = critic1.num_params()

    def critic_loss_at(flat):
        critic1.set_flat(flat[:n1])
        critic2.set_flat(flat[n1:])
        return float(critic_loss(fake_batch, targets, critic1, critic2, policy).data)

    cflat0 = np.concatenate([critic1.get_flat(), critic2.get_flat()])
    critic1.zero_grad()
    critic2.zero_grad()
    critic_loss(fake_batch, targets, critic1, critic2, policy).backward()
    canalytic = np.concatenate([critic1.grad_flat(), critic2.grad_flat()]) + mutate
    cnumeric = finite_difference(critic_loss_at, cflat0)
    critic_err = max_relative_error(canalytic, cnumeric)

    passed = actor_err < tolerance and critic_err < tolerance
    return CheckResult(
        "loss_gradients",
        passed,
        f"actor max rel err {actor_err:.3e}, critic max rel err {critic_err:.3e} (tolerance {tolerance})",
    )


# ---------------------------------------------------------------------------
# zero-network reverse-chain statistics
# ---------------------------------------------------------------------------

def zero_net_chain_variance(alphas: np.ndarray, alpha_bars: np.ndarray, scales: np.ndarray) -> float:
    """Closed-form variance of the raw chain output when the noise net is zero.

    With a zero prediction every reverse step reduces to
    x_{t-1} = x_t / sqrt(alpha_t) + s_t * eps_t, so unrolling from the
    standard-normal start gives independent Gaussian terms:

        Var[x_0] = 1/alpha_bar_T + sum_t s_t^2 / alpha_bar_{t-1}.

    Arrays are 1-indexed by step with index 0 the empty product.
    """
    steps = len(alphas) - 1
    var = 1.0 / alpha_bars[steps]
    for t in range(1, steps + 1):
        var += scales[t] ** 2 / alpha_bars[t - 1]
    return float(var)


def check_diffusion_stats(
    samples: int = 100_000, seed: int = 15, mutate: float = 0.0, noise_scale: str = "paper"
) -> CheckResult:
    """Empirical zero-net chain moments vs the closed form, 2% per dimension."""
    from twinmig.config import PolicyParams
    from twinmig.diffusion import DiffusionPolicy

    params = PolicyParams(hidden_width=16, noise_scale=noise_scale)
    policy = DiffusionPolicy(num_vehicles=1, num_servers=2, obs_dim=4, params=params, dtype=np.float64)
    policy.net.set_flat(np.zeros(policy.net.num_params()))
    sched = policy.schedule
    scales = np.array([0.0] + [sched.noise_scale(t, noise_scale) for t in range(1, sched.steps + 1)])
    want_var = zero_net_chain_variance(sched.alphas, sched.alpha_bars, scales) + mutate
    rng = np.random.default_rng(seed)
    obs = np.zeros((samples, policy.obs_dim))
    from twinmig.autodiff import no_grad

    with no_grad():
        x0 = policy.reverse_chain(obs, policy.draw_chain_noise(samples, rng)).data
    mean_err = float(np.max(np.abs(x0.mean(axis=0)))) / np.sqrt(want_var)
    var_err = float(np.max(np.abs(x0.var(axis=0) - want_var))) / want_var
    passed = mean_err < 0.02 and var_err < 0.02
    return CheckResult(
        "diffusion_zero_net_stats",
        passed,
        f"mean err {mean_err:.4f}, var err {var_err:.4f} (tolerance 0.02, {samples} samples)",
    )


def check_trust(samples: int = 1000, seed: int = 77, mutate: float = 0.0) -> CheckResult:
    """Compare the trust implementation against the oracle on random inputs."""
    from twinmig import trust

    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        d_tot = float(rng.uniform(1, 1e7))
        d_abr = float(rng.uniform(0, d_tot))
        r_tot = int(rng.integers(1, 1000))
        r_suc = int(rng.integers(0, r_tot + 1))
        n_tot = int(rng.integers(0, 50))
        n_suc = int(rng.integers(0, n_tot + 1)) if n_tot else 0
        evaluations = int(rng.integers(0, 500))
        positives = int(rng.integers(0, evaluations + 1)) if evaluations else 0
        rep_past = float(rng.uniform(0, 1))
        theta1 = float(rng.uniform(0.05, 0.45))
        theta2 = float(rng.uniform(theta1 + 0.05, 0.95))
        alpha = float(rng.uniform(0.05, 0.95)) + mutate
        omega = float(rng.uniform(0, 1))
        xi = float(rng.uniform(0, 1))
        phi = float(rng.uniform(0.05, 1.0))
        # boundary cases hit exactly sometimes
        hist = trust.DefenseHistory(n_suc, n_tot)
        if i % 97 == 0:
            hist = trust.DefenseHistory(int(round(theta1 * 100)), 100)
            theta1 = hist.ratio
        params = trust.TrustParams(
            theta1=theta1, theta2=theta2, alpha=alpha, omega=omega, xi=xi, update_rate=phi
        )
        report = trust.DetectionReport(d_tot, d_abr, r_tot, r_suc)
        log = trust.InteractionLog({1: (positives, evaluations)})
        rep_net = trust.network_layer_reputation(report, hist, params)
        rep_int = trust.interaction_layer_reputation(log)
        record = trust.combine_and_update(rep_net, rep_int, rep_past, params)
        want = trust_oracle(
            d_tot, d_abr, r_tot, r_suc, hist.successful_defenses, hist.total_attacks,
            positives, evaluations, rep_past, theta1, theta2, alpha - mutate, omega, xi, phi,
        )
        got = {
            "p_data": trust.data_security(report),
            "p_ser": trust.service_performance(report),
            "rep_net": rep_net,
            "rep_int": rep_int,
            "rep_combined": record.rep_combined,
            "rep_current": record.rep_current,
        }
        for key, expected in want.items():
            worst = max(worst, abs(got[key] - expected))
    passed = worst < 1e-12
    return CheckResult("trust_formulas", passed, f"max absolute error {worst:.3e} over {samples} inputs")
