"""Two-layer trust scoring for edge servers.

The network-communication layer scores a server from detection-task
statistics (clean-data ratio, response success ratio) gated by its
historical defense performance; the interaction layer is a beta posterior
over binary user evaluations. The two layers blend into one reputation
value that is smoothed over time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrustInputError(ValueError):
    """Raised for detection reports that cannot be scored."""


@dataclass(frozen=True)
class DetectionReport:
    """One slot's detection-task statistics for one server."""

    total_data: float  # bits inspected
    abnormal_data: float  # bits flagged abnormal
    total_requests: int
    successful_responses: int

    def __post_init__(self) -> None:
        if not 0 <= self.abnormal_data <= self.total_data:
            raise TrustInputError("abnormal data must lie in [0, total data]")
        if not 0 <= self.successful_responses <= self.total_requests:
            raise TrustInputError("successes must lie in [0, total requests]")


@dataclass
class DefenseHistory:
    """Running count of attacks weathered and attacks repelled."""

    successful_defenses: int = 0
    total_attacks: int = 0

    @property
    def ratio(self) -> float:
        # No observed attacks means no observed failures.
        if self.total_attacks == 0:
            return 1.0
        return self.successful_defenses / self.total_attacks


@dataclass
class InteractionLog:
    """Per-user evaluation tallies for one server.

    Stores (positives, total) per user id; the beta posterior only needs
    the sums, so raw binary lists are not kept.
    """

    counts: dict[int, tuple[int, int]] = field(default_factory=dict)

    def record(self, user_id: int, positive: bool) -> None:
        pos, tot = self.counts.get(user_id, (0, 0))
        self.counts[user_id] = (pos + int(positive), tot + 1)

    @property
    def positive_total(self) -> int:
        return sum(pos for pos, _ in self.counts.values())

    @property
    def total(self) -> int:
        return sum(tot for _, tot in self.counts.values())


@dataclass(frozen=True)
class TrustParams:
    """Thresholds and weights of the two-layer evaluation."""

    theta1: float = 0.3  # defense ratio below this: zero network-layer trust
    theta2: float = 0.7  # defense ratio at/above this: no penalty
    alpha: float = 0.5  # penalty factor between the thresholds
    omega: float = 0.5  # data-security vs service-performance weight
    xi: float = 0.5  # network-layer vs interaction-layer weight
    update_rate: float = 0.3  # blend of latest vs past reputation
    rep_threshold: float = 0.3  # server-selection feasibility floor

    def __post_init__(self) -> None:
        if not 0.0 < self.theta1 < self.theta2 < 1.0:
            raise TrustInputError("need 0 < theta1 < theta2 < 1")
        if not 0.0 < self.alpha < 1.0:
            raise TrustInputError("alpha must be in (0, 1)")
        for name in ("omega", "xi"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise TrustInputError(f"{name} must be in [0, 1]")
        if not 0.0 < self.update_rate <= 1.0:
            raise TrustInputError("update_rate must be in (0, 1]")


@dataclass
class ReputationRecord:
    """Layer scores and the smoothed current value, all in [0, 1]."""

    rep_net: float = 0.0
    rep_int: float = 0.5
    rep_combined: float = 0.5
    rep_current: float = 0.5


def data_security(report: DetectionReport) -> float:
    """Clean-data ratio of a detection report."""
    if report.total_data <= 0:
        raise TrustInputError("total data must be > 0")
    return (report.total_data - report.abnormal_data) / report.total_data


def service_performance(report: DetectionReport) -> float:
    """Successful-response ratio of a detection report."""
    if report.total_requests <= 0:
        raise TrustInputError("total requests must be > 0")
    return report.successful_responses / report.total_requests


def network_layer_reputation(
    report: DetectionReport, history: DefenseHistory, params: TrustParams
) -> float:
    """Network-communication-layer reputation.

    The defense ratio selects one of three cases: below ``theta1`` the
    server is written off, between the thresholds the weighted quality
    score is penalized by ``alpha``, at or above ``theta2`` it passes
    through. Boundaries resolve upward (ties favor the server).
    """
    quality = params.omega * data_security(report) + (1.0 - params.omega) * service_performance(report)
    ratio = history.ratio
    if ratio < params.theta1:
        return 0.0
    if ratio < params.theta2:
        return params.alpha * quality
    return quality


def interaction_layer_reputation(log: InteractionLog) -> float:
    """Beta-posterior mean of positive evaluations, uniform prior."""
    return (log.positive_total + 1.0) / (log.total + 2.0)


def combine_and_update(
    rep_net: float, rep_int: float, rep_past: float, params: TrustParams
) -> ReputationRecord:
    """Blend the two layers and smooth against the previous value."""
    combined = params.xi * rep_net + (1.0 - params.xi) * rep_int
    current = params.update_rate * combined + (1.0 - params.update_rate) * rep_past
    return ReputationRecord(
        rep_net=rep_net, rep_int=rep_int, rep_combined=combined, rep_current=current
    )


def synthesize_detection_report(
    abnormal_rate: float,
    failure_rate: float,
    rng: np.random.Generator,
    data_units: int = 1000,
    unit_bits: float = 1e3,
    total_requests: int = 200,
) -> DetectionReport:
    """Draw one detection report at the given abnormal/failure rates.

    Rates are clipped to [0, 1]; abnormal units and failed responses are
    binomial draws so sampled ratios concentrate on the rates.
    """
    p_abr = float(np.clip(abnormal_rate, 0.0, 1.0))
    p_fail = float(np.clip(failure_rate, 0.0, 1.0))
    abnormal_units = int(rng.binomial(data_units, p_abr))
    successes = int(total_requests - rng.binomial(total_requests, p_fail))
    return DetectionReport(
        total_data=data_units * unit_bits,
        abnormal_data=abnormal_units * unit_bits,
        total_requests=total_requests,
        successful_responses=successes,
    )
