"""Tests for the KL index and the ranked localization report."""

import math

import numpy as np
import pytest

from shmseq.detector import GaussianParams
from shmseq.errors import DimensionMismatch
from shmseq.localization import SensorOutcome, build_report, kl_gaussian

from helpers import naive_logpdf, random_spd

# Per-sensor KL values of a 16-sensor, four-story layout (4 per floor) with
# first-story damage; the floor-1 sensors 1-4 carry the largest divergence.
DP1_KL = [
    3.6014, 4.2847, 4.1470, 3.2395,
    1.2482, 1.5786, 1.3294, 1.3598,
    0.3759, 0.4055, 0.5778, 0.4215,
    0.5347, 0.6000, 0.5910, 0.5412,
]


def scalar_pair_with_kl(value):
    """Unit-variance scalar pair whose divergence is exactly `value`."""
    g = GaussianParams([0.0], [[1.0]])
    f = GaussianParams([math.sqrt(2.0 * value)], [[1.0]])
    return f, g


class TestKlGaussian:
    def test_identical_is_zero(self):
        g = GaussianParams([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
        assert kl_gaussian(g, g) == 0.0

    def test_identity_covariance_reduction(self):
        delta = np.array([0.7, -1.2, 0.4])
        f = GaussianParams(delta, np.eye(3))
        g = GaussianParams(np.zeros(3), np.eye(3))
        assert abs(kl_gaussian(f, g) - 0.5 * float(delta @ delta)) < 1e-12

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(3)
        g = GaussianParams(rng.normal(size=2), random_spd(rng, 2))
        f = GaussianParams(g.mean + 0.5, g.cov * 1.3)
        assert kl_gaussian(f, g) > 1e-3
        nearly = GaussianParams(g.mean + 1e-9, g.cov * (1 + 1e-9))
        assert kl_gaussian(nearly, g) < 1e-8

    @pytest.mark.parametrize("seed", range(2))
    def test_monte_carlo_log_ratio(self, seed):
        rng = np.random.default_rng(20_000 + seed)
        f = GaussianParams(rng.normal(size=3), random_spd(rng, 3))
        g = GaussianParams(rng.normal(size=3), random_spd(rng, 3))
        kl = kl_gaussian(f, g)
        r = np.random.default_rng(seed)
        xs = f.mean + r.standard_normal((300_000, 3)) @ np.linalg.cholesky(f.cov).T
        est = float(np.mean(naive_logpdf(xs, f.mean, f.cov) - naive_logpdf(xs, g.mean, g.cov)))
        assert abs(est - kl) / kl < 0.02

    def test_affine_invariance(self):
        rng = np.random.default_rng(7)
        f = GaussianParams(rng.normal(size=3), random_spd(rng, 3))
        g = GaussianParams(rng.normal(size=3), random_spd(rng, 3))
        a = random_spd(rng, 3) + np.eye(3)
        b = rng.normal(size=3)
        f2 = GaussianParams(a @ f.mean + b, a @ f.cov @ a.T)
        g2 = GaussianParams(a @ g.mean + b, a @ g.cov @ a.T)
        assert abs(kl_gaussian(f, g) - kl_gaussian(f2, g2)) < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kl_gaussian(GaussianParams([0.0], [[1.0]]), GaussianParams([0.0, 0.0], np.eye(2)))


def report_from_kl_values(values, taus=None):
    taus = taus or {}
    outcomes = []
    for i, v in enumerate(values, 1):
        f, g = scalar_pair_with_kl(v)
        outcomes.append(
            SensorOutcome(
                sensor_id=i, position=f"s{i}", pre=g, post=f, detection_time=taus.get(i)
            )
        )
    return build_report(outcomes, alpha=1e-5, rho=1e-5)


class TestBuildReport:
    def test_benchmark_first_pattern_ranking(self):
        report = report_from_kl_values(DP1_KL)
        ranked = report.ranked_by_di1()
        assert ranked[0] == 2
        assert set(ranked[:4]) == {1, 2, 3, 4}
        by_id = {e.sensor_id: e for e in report.sensors}
        assert abs(by_id[2].di1 - 4.2847) < 1e-9

    def test_identical_values_tie_break_by_id(self):
        report = report_from_kl_values([1.0, 1.0, 1.0])
        assert report.ranked_by_di1() == [1, 2, 3]

    def test_detection_time_ranking_with_missing_last(self):
        report = report_from_kl_values([1.0, 1.0, 1.0], taus={1: 20, 2: 23})
        assert report.ranked_by_di2() == [1, 2, 3]
        by_id = {e.sensor_id: e for e in report.sensors}
        assert by_id[3].di2 is None and by_id[3].rank_di2 == 3
        assert report.detected

    def test_ranking_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        values = list(rng.uniform(0.1, 4.0, size=6))
        plain = report_from_kl_values(values)
        warped = report_from_kl_values([math.expm1(v) for v in values])
        assert plain.ranked_by_di1() == warped.ranked_by_di1()

    def test_unready_sensor_gets_empty_fields_and_ranks_last(self):
        f, g = scalar_pair_with_kl(2.0)
        outcomes = [
            SensorOutcome(sensor_id=1, position="a", pre=g, post=f, detection_time=4),
            SensorOutcome(sensor_id=2, position="b", pre=g, post=None, detection_time=None),
        ]
        report = build_report(outcomes)
        by_id = {e.sensor_id: e for e in report.sensors}
        assert by_id[2].di1 is None
        assert by_id[2].rank_di1 == 2
        assert report.ranked_by_di1() == [1, 2]

    def test_rankings_are_permutations(self):
        rng = np.random.default_rng(5)
        report = report_from_kl_values(list(rng.uniform(0.1, 3.0, size=9)), taus={3: 5, 7: 2})
        assert sorted(e.rank_di1 for e in report.sensors) == list(range(1, 10))
        assert sorted(e.rank_di2 for e in report.sensors) == list(range(1, 10))

    def test_to_dict_schema(self):
        report = report_from_kl_values([1.0, 2.0], taus={2: 7})
        data = report.to_dict()
        assert set(data) == {"sensors", "detected", "alpha", "rho"}
        assert set(data["sensors"][0]) == {"id", "position", "di1", "di2", "rank_di1", "rank_di2"}

    def test_empty_outcomes_rejected(self):
        with pytest.raises(ValueError):
            build_report([])
