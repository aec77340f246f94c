from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import TRIANGLE_LOAD
from ucscreen.case_io import compute_ptdf
from ucscreen.cases import random_forecast, random_network, triangle
from ucscreen.mplp import ParameterSet, PolicySet, build_policies
from ucscreen.screening import ScreeningInfeasible, screen_cc, screen_deterministic, screen_robust
from ucscreen.uc_models import BoxUncertainty, GaussianUncertainty, build_cc_uc, solve_uc
from ucscreen.validation import (
    ClassificationMismatch,
    cc_violation_frequencies,
    flow_violations,
    sample_realizations,
    timing_compare,
    validate_reduced,
)


class TestSampling:
    def test_zero_variance(self, tri):
        net, _ = tri
        R = sample_realizations(GaussianUncertainty.from_sigma(net, 0.0, 0.1), net, TRIANGLE_LOAD, 5, 0)
        np.testing.assert_array_equal(R, np.tile(TRIANGLE_LOAD, (5, 1)))

    def test_box_bounds(self, tri):
        net, _ = tri
        fc = np.array([10.0, 20.0, 150.0])
        unc = BoxUncertainty((1, 3), 0.7, 1.3)
        R = sample_realizations(unc, net, fc, 500, 1)
        assert np.all(R[:, [0, 2]] >= 0.7 * fc[[0, 2]]) and np.all(R[:, [0, 2]] <= 1.3 * fc[[0, 2]])
        np.testing.assert_array_equal(R[:, 1], 20.0)

    def test_seed_determinism(self, tri):
        net, _ = tri
        unc = GaussianUncertainty.from_sigma(net, 3.0, 0.1)
        a = sample_realizations(unc, net, TRIANGLE_LOAD, 50, 7)
        b = sample_realizations(unc, net, TRIANGLE_LOAD, 50, 7)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, sample_realizations(unc, net, TRIANGLE_LOAD, 50, 8))

    def test_needs_samples(self, tri):
        with pytest.raises(ValueError):
            sample_realizations(None, tri[0], TRIANGLE_LOAD, 0, 0)


class TestValidate:
    def test_zero_uncertainty_t1(self, tri_tight):
        net, ptdf = tri_tight
        keep = screen_deterministic(net, ptdf, TRIANGLE_LOAD).keep()
        rep = validate_reduced("T1", net, ptdf, TRIANGLE_LOAD, None, keep, TRIANGLE_LOAD[None, :], seed=0)
        assert rep.infeasibility_rate == 0.0 and rep.mean_gap == pytest.approx(0.0, abs=1e-12)

    def test_t1_gap_zero_when_screened_at_same_load(self):
        for seed in range(10):
            net = random_network(5, seed, limit_range=(25, 80))
            ptdf = compute_ptdf(net)
            fc = random_forecast(net, seed)
            try:
                keep = screen_deterministic(net, ptdf, fc).keep()
            except ScreeningInfeasible:
                continue
            rep = validate_reduced("T1", net, ptdf, fc, None, keep, fc[None, :])
            assert rep.infeasible_count == 0
            assert abs(rep.max_gap) <= 1e-6

    def test_t3_robust_keep_never_infeasible(self):
        checked = 0
        for seed in range(8):
            net = random_network(5, seed, limit_range=(25, 80))
            ptdf = compute_ptdf(net)
            fc = random_forecast(net, seed)
            unc = BoxUncertainty(tuple(net.buses[:3]), 0.8, 1.2)
            try:
                keep = screen_robust(net, ptdf, fc, unc).keep()
            except ScreeningInfeasible:
                continue
            R = sample_realizations(unc, net, fc, 40, seed)
            rep = validate_reduced("T3", net, ptdf, fc, unc, keep, R, seed=seed)
            assert rep.infeasibility_rate == 0.0
            assert rep.mean_gap == pytest.approx(0.0, abs=1e-6) or math.isnan(rep.mean_gap)
            checked += 1
        assert checked >= 4

    def test_t5_recourse_family(self, tri_tight):
        net, ptdf = tri_tight
        unc = BoxUncertainty((3,), 0.9, 1.1)
        keep = screen_robust(net, ptdf, TRIANGLE_LOAD, unc, with_recourse=True).keep()
        R = sample_realizations(unc, net, TRIANGLE_LOAD, 50, 0)
        rep = validate_reduced("T5", net, ptdf, TRIANGLE_LOAD, unc, keep, R, seed=0)
        assert rep.infeasibility_rate == 0.0
        assert rep.mean_gap >= -1e-9

    def test_t4_large_sigma_is_reported(self):
        net = triangle(limits=(1000.0, 1000.0, 100.0))
        ptdf = compute_ptdf(net)
        unc = GaussianUncertainty.from_sigma(net, 10.0, 0.1)
        keep = screen_cc(net, ptdf, TRIANGLE_LOAD, unc).keep()
        R = sample_realizations(unc, net, TRIANGLE_LOAD, 200, 0)
        rep = validate_reduced("T4", net, ptdf, TRIANGLE_LOAD, unc, keep, R, seed=0)
        assert 0.0 <= rep.infeasibility_rate <= 1.0
        assert 0.0 <= rep.removed_violation_rate <= rep.infeasibility_rate
        assert set(rep.constraint_violation_rates) >= {"line2-upper", "gen0-lower"}

    def test_report_determinism(self, tri_tight):
        net, ptdf = tri_tight
        unc = GaussianUncertainty.from_sigma(net, 5.0, 0.1)
        keep = screen_cc(net, ptdf, TRIANGLE_LOAD, unc).keep()
        R = sample_realizations(unc, net, TRIANGLE_LOAD, 30, 3)
        a = validate_reduced("T2", net, ptdf, TRIANGLE_LOAD, unc, keep, R, seed=3, threads=1)
        b = validate_reduced("T2", net, ptdf, TRIANGLE_LOAD, unc, keep, R, seed=3, threads=3)
        assert a.to_json(timing=False) == b.to_json(timing=False)
        assert a.to_csv() == b.to_csv()
        json.loads(a.to_json())

    def test_family_checks(self, tri_tight):
        net, ptdf = tri_tight
        with pytest.raises(ValueError):
            validate_reduced("T9", net, ptdf, TRIANGLE_LOAD, None, set(), TRIANGLE_LOAD[None, :])
        with pytest.raises(ValueError):
            validate_reduced("T4", net, ptdf, TRIANGLE_LOAD, None, set(), TRIANGLE_LOAD[None, :])

    def test_flow_violations(self, tri_tight):
        net, ptdf = tri_tight
        v = flow_violations(net, ptdf, TRIANGLE_LOAD, np.array([150.0, 0.0, 0.0]))
        assert v[(2, "upper")] == pytest.approx(20.0)
        assert v[(2, "lower")] == 0.0


class TestChanceRates:
    @pytest.mark.parametrize("eps", [0.05, 0.1])
    def test_triangle_rates_within_error_bar(self, tri_tight, eps):
        net, ptdf = tri_tight
        unc = GaussianUncertainty.from_sigma(net, 2.0, eps)
        sol = solve_uc(build_cc_uc(net, ptdf, TRIANGLE_LOAD, unc))
        n = 20_000
        freq = cc_violation_frequencies(net, ptdf, unc, TRIANGLE_LOAD, sol.x, n=n, seed=0)
        bar = eps + 3 * math.sqrt(eps * (1 - eps) / n)
        assert max(freq.values()) <= bar
        # the 1-3 line is held at its tightened limit, so it sees some violations
        assert freq[(2, "upper")] > 0


class TestTiming:
    @pytest.fixture(scope="class")
    @staticmethod
    def tri_set():
        net = triangle(limits=(1000.0, 1000.0, 80.0))
        ptdf = compute_ptdf(net)
        ps = ParameterSet.box([120.0], [150.0])
        return net, ptdf, build_policies(net, ptdf, "det", None, [3], TRIANGLE_LOAD, ps)

    def test_covered_single_forecast(self, tri_set):
        net, ptdf, pset = tri_set
        t = timing_compare(pset, net, ptdf, [TRIANGLE_LOAD])
        assert t["sources"] == {"AffinePolicy": 6, "LP": 0}
        assert t["hybrid_total_seconds"] == pytest.approx(t["policy_total_seconds"] + t["fallback_total_seconds"])

    def test_fallback_accounted(self, tri_set):
        net, ptdf, pset = tri_set
        fc = TRIANGLE_LOAD.copy()
        fc[2] = 155.0
        t = timing_compare(pset, net, ptdf, [TRIANGLE_LOAD, fc])
        assert t["sources"] == {"AffinePolicy": 6, "LP": 6}

    def test_mismatch_aborts(self, tri_set):
        net, ptdf, pset = tri_set
        wrong = PolicySet(pset.method, pset.uncertainty, pset.with_recourse, pset.varying_buses, pset.base,
                          pset.ps, pset.policies, {k: 1e-3 for k in pset.limits})
        with pytest.raises(ClassificationMismatch):
            timing_compare(wrong, net, ptdf, [TRIANGLE_LOAD])
