"""Trust-scoring unit tests plus the independent-oracle comparison."""

import numpy as np
import pytest

from twinmig.oracles import check_trust
from twinmig.trust import (
    DefenseHistory,
    DetectionReport,
    InteractionLog,
    TrustInputError,
    TrustParams,
    combine_and_update,
    data_security,
    interaction_layer_reputation,
    network_layer_reputation,
    service_performance,
    synthesize_detection_report,
)

PARAMS = TrustParams(theta1=0.3, theta2=0.8, alpha=0.5, omega=0.6)


class TestLayerScores:
    def test_clean_data(self):
        assert data_security(DetectionReport(500, 0, 10, 10)) == 1.0

    def test_fully_abnormal(self):
        assert data_security(DetectionReport(500, 500, 10, 10)) == 0.0

    def test_data_hand_value(self):
        assert data_security(DetectionReport(200, 30, 10, 10)) == pytest.approx(0.85)

    def test_zero_data_rejected(self):
        with pytest.raises(TrustInputError):
            data_security(DetectionReport(0, 0, 10, 10))

    def test_all_responses(self):
        assert service_performance(DetectionReport(10, 0, 50, 50)) == 1.0

    def test_no_responses(self):
        assert service_performance(DetectionReport(10, 0, 50, 0)) == 0.0

    def test_service_hand_value(self):
        assert service_performance(DetectionReport(10, 0, 50, 40)) == pytest.approx(0.8)


class TestNetworkLayer:
    report = DetectionReport(1000, 100, 100, 80)  # p_data 0.9, p_ser 0.8

    def test_low_defense_zeroed(self):
        assert network_layer_reputation(self.report, DefenseHistory(1, 10), PARAMS) == 0.0

    def test_middle_case(self):
        # 0.5 * (0.6*0.9 + 0.4*0.8) = 0.43
        out = network_layer_reputation(self.report, DefenseHistory(5, 10), PARAMS)
        assert out == pytest.approx(0.43)

    def test_high_case(self):
        out = network_layer_reputation(self.report, DefenseHistory(9, 10), PARAMS)
        assert out == pytest.approx(0.86)

    def test_boundaries_resolve_upward(self):
        mid = network_layer_reputation(self.report, DefenseHistory(3, 10), PARAMS)  # beta == theta1
        high = network_layer_reputation(self.report, DefenseHistory(8, 10), PARAMS)  # beta == theta2
        assert mid == pytest.approx(0.43)
        assert high == pytest.approx(0.86)

    def test_no_history_counts_as_clean(self):
        out = network_layer_reputation(self.report, DefenseHistory(0, 0), PARAMS)
        assert out == pytest.approx(0.86)

    def test_monotone_within_branch(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            hist = DefenseHistory(int(rng.integers(0, 11)), 10)
            base = DetectionReport(1000, 400, 100, 50)
            better_data = DetectionReport(1000, 200, 100, 50)
            better_ser = DetectionReport(1000, 400, 100, 70)
            b = network_layer_reputation(base, hist, PARAMS)
            assert network_layer_reputation(better_data, hist, PARAMS) >= b
            assert network_layer_reputation(better_ser, hist, PARAMS) >= b


class TestInteractionLayer:
    def test_empty_log_prior(self):
        assert interaction_layer_reputation(InteractionLog()) == 0.5

    def test_three_of_four(self):
        log = InteractionLog()
        for positive in (True, True, True, False):
            log.record(1, positive)
        assert interaction_layer_reputation(log) == pytest.approx(4.0 / 6.0)

    def test_counts_span_users(self):
        log = InteractionLog()
        log.record(1, True)
        log.record(2, True)
        log.record(2, False)
        assert log.total == 3
        assert log.positive_total == 2

    def test_all_positive_limit(self):
        prev = 0.0
        for n in (1, 5, 50, 500, 5000):
            val = interaction_layer_reputation(InteractionLog({1: (n, n)}))
            assert prev < val < 1.0
            prev = val

    def test_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            tot = int(rng.integers(0, 1000))
            pos = int(rng.integers(0, tot + 1)) if tot else 0
            val = interaction_layer_reputation(InteractionLog({1: (pos, tot)}))
            assert 0.0 < val < 1.0


class TestCombineAndUpdate:
    def test_even_blend(self):
        rec = combine_and_update(0.8, 0.6, 0.5, TrustParams(xi=0.5, update_rate=0.999))
        assert rec.rep_combined == pytest.approx(0.7)

    def test_full_replacement(self):
        rec = combine_and_update(0.9, 0.9, 0.1, TrustParams(update_rate=1.0))
        assert rec.rep_current == pytest.approx(rec.rep_combined)

    def test_half_update(self):
        rec = combine_and_update(0.9, 0.9, 0.7, TrustParams(xi=0.5, update_rate=0.5))
        assert rec.rep_current == pytest.approx(0.8)

    def test_update_stays_between(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            net, inter, past = rng.uniform(0, 1, 3)
            phi = float(rng.uniform(0.05, 1.0))
            rec = combine_and_update(net, inter, past, TrustParams(update_rate=phi))
            lo, hi = sorted((rec.rep_combined, past))
            assert lo - 1e-12 <= rec.rep_current <= hi + 1e-12
            assert 0.0 <= rec.rep_current <= 1.0


class TestSynthesizedReports:
    def test_clean_server_perfect_scores(self):
        rng = np.random.default_rng(0)
        rep = synthesize_detection_report(0.0, 0.0, rng)
        assert data_security(rep) == 1.0
        assert service_performance(rep) == 1.0

    def test_attack_shifts_means(self):
        rng = np.random.default_rng(42)
        abr, fail = [], []
        for _ in range(10_000):
            rep = synthesize_detection_report(0.62, 0.72, rng)
            abr.append(rep.abnormal_data / rep.total_data)
            fail.append(1.0 - rep.successful_responses / rep.total_requests)
        assert np.mean(abr) == pytest.approx(0.62, abs=0.01)
        assert np.mean(fail) == pytest.approx(0.72, abs=0.01)

    def test_seeded_determinism(self):
        a = synthesize_detection_report(0.3, 0.2, np.random.default_rng(9))
        b = synthesize_detection_report(0.3, 0.2, np.random.default_rng(9))
        assert a == b

    def test_rates_clipped(self):
        rng = np.random.default_rng(1)
        rep = synthesize_detection_report(1.7, 2.0, rng)
        assert rep.abnormal_data <= rep.total_data
        assert rep.successful_responses == 0


def test_oracle_equivalence():
    result = check_trust(samples=500, seed=3)
    assert result.passed, result.detail


def test_oracle_detects_mutation():
    assert not check_trust(samples=60, seed=3, mutate=0.01).passed
