from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import TRIANGLE_LOAD
from instances import small_instances
from oracles import cc_screening_oracle, robust_screening_oracle, screening_oracle
from ucscreen.case_io import compute_ptdf, participation_factors
from ucscreen.cases import triangle
from ucscreen.screening import (
    NON_REDUNDANT,
    REDUNDANT,
    REL_TOL,
    SRC_LP,
    SRC_NONE,
    ScreeningInfeasible,
    ScreeningResult,
    classify,
    keep_from_json,
    keep_to_json,
    reduce_model,
    screen,
    screen_cc,
    screen_deterministic,
    screen_robust,
)
from ucscreen.uc_models import (
    BoxUncertainty,
    GaussianUncertainty,
    apply_recourse,
    build_cc_uc,
    build_deterministic_uc,
    build_robust_uc_scenarios,
    m1_violation,
    solve_uc,
)

DIRS = ("upper", "lower")


class TestDeterministic:
    def test_loose_triangle_all_redundant(self, tri):
        net, ptdf = tri
        sr = screen_deterministic(net, ptdf, TRIANGLE_LOAD)
        assert len(sr.bounds) == 6
        assert all(b.classification == REDUNDANT for b in sr.bounds)
        assert max(abs(b.f_star) for b in sr.bounds) == pytest.approx(100)
        assert reduce_model(sr) == set()

    def test_tight_l3_upper(self, tri_tight):
        net, ptdf = tri_tight
        sr = screen_deterministic(net, ptdf, TRIANGLE_LOAD)
        b = sr.get(2, "upper")
        assert b.classification == NON_REDUNDANT and b.f_star == pytest.approx(100)
        assert b.margin == pytest.approx(-20)
        assert sr.keep() == {(2, "upper")}

    def test_limit_60_raises(self):
        net = triangle(limits=(1000.0, 1000.0, 60.0))
        with pytest.raises(ScreeningInfeasible):
            screen_deterministic(net, compute_ptdf(net), TRIANGLE_LOAD)

    def test_infinite_limit_short_circuit(self):
        net = triangle(limits=(math.inf, 1000.0, 80.0))
        sr = screen_deterministic(net, compute_ptdf(net), TRIANGLE_LOAD)
        for d in DIRS:
            b = sr.get(0, d)
            assert b.classification == REDUNDANT and b.source == SRC_NONE
        assert sr.get(1, "upper").source == SRC_LP

    def test_against_oracle(self):
        for s, net, ptdf, fc in small_instances(20):
            try:
                sr = screen_deterministic(net, ptdf, fc)
            except ScreeningInfeasible:
                assert any(screening_oracle(net, fc, j, d) is None for j in range(net.n_line) for d in DIRS)
                continue
            assert len(sr.bounds) == 2 * net.n_line
            for b in sr.bounds:
                ref = screening_oracle(net, fc, b.line, b.direction)
                assert b.f_star == pytest.approx(ref, abs=1e-6)

    def test_tolerance_ties_are_kept(self):
        assert classify(0.0, 100.0) == NON_REDUNDANT
        assert classify(REL_TOL * 100.0, 100.0) == NON_REDUNDANT
        assert classify(1e-3, 100.0) == REDUNDANT

    def test_threads_do_not_change_result(self, tri_tight):
        net, ptdf = tri_tight
        a = screen_deterministic(net, ptdf, TRIANGLE_LOAD, threads=1)
        b = screen_deterministic(net, ptdf, TRIANGLE_LOAD, threads=4)
        assert a.to_csv() == b.to_csv()


class TestRobust:
    def test_degenerate_box_matches_deterministic(self, tri_tight):
        net, ptdf = tri_tight
        det = screen_deterministic(net, ptdf, TRIANGLE_LOAD)
        for rec in (False, True):
            rob = screen_robust(net, ptdf, TRIANGLE_LOAD, BoxUncertainty((1, 2, 3), 1.0, 1.0), rec)
            assert rob.classifications() == det.classifications()
            np.testing.assert_allclose([b.f_star for b in rob.bounds], [b.f_star for b in det.bounds], atol=1e-7)

    def test_triangle_box_on_bus3(self, tri_tight):
        net, ptdf = tri_tight
        rob = screen_robust(net, ptdf, TRIANGLE_LOAD, BoxUncertainty((3,), 0.7, 1.3))
        det = screen_deterministic(net, ptdf, TRIANGLE_LOAD)
        assert rob.get(2, "upper").f_star == pytest.approx(130)
        assert rob.non_redundant_count >= det.non_redundant_count

    def test_against_oracle(self):
        for s, net, ptdf, fc in small_instances(15, seed0=100):
            unc = BoxUncertainty(tuple(net.buses[:2]), 0.8, 1.2)
            try:
                sr = screen_robust(net, ptdf, fc, unc)
            except ScreeningInfeasible:
                continue
            for b in sr.bounds:
                ref = robust_screening_oracle(net, fc, b.line, b.direction, net.buses[:2], 0.8, 1.2)
                assert b.f_star == pytest.approx(ref, abs=1e-6)

    def test_widening_never_drops_bounds(self):
        for s, net, ptdf, fc in small_instances(15, seed0=200):
            U = tuple(net.buses[:3])
            try:
                narrow = screen_robust(net, ptdf, fc, BoxUncertainty(U, 0.9, 1.1))
                wide = screen_robust(net, ptdf, fc, BoxUncertainty(U, 0.5, 1.5))
            except ScreeningInfeasible:
                continue
            assert narrow.keep() <= wide.keep()

    def test_robust_count_dominates_deterministic(self):
        compared = 0
        for s, net, ptdf, fc in small_instances(25, seed0=300):
            try:
                det = screen_deterministic(net, ptdf, fc)
                rob = screen_robust(net, ptdf, fc, BoxUncertainty(tuple(net.buses), 0.8, 1.2))
                recourse = screen_robust(net, ptdf, fc, BoxUncertainty(tuple(net.buses[:4]), 0.8, 1.2), True)
            except ScreeningInfeasible:
                continue
            compared += 1
            assert rob.non_redundant_count >= det.non_redundant_count
            assert recourse.non_redundant_count >= det.non_redundant_count
        assert compared >= 10

    def test_binding_limits_never_screened_out(self):
        """Limits that bind for a robust dispatch under any box realisation stay in the keep set."""
        rng = np.random.default_rng(0)
        checked = 0
        for s, net, ptdf, fc in small_instances(20, seed0=400, limit_range=(20, 60)):
            U = tuple(net.buses[:3])
            unc = BoxUncertainty(U, 0.8, 1.2)
            rob = solve_uc(build_robust_uc_scenarios(net, ptdf, fc, unc))
            if not rob.optimal:
                continue
            for rec in (False, True):
                keep = screen_robust(net, ptdf, fc, unc, rec).keep()
                alpha = participation_factors(net)
                lo, hi = unc.bounds(net, fc)
                for _ in range(200):
                    real = rng.uniform(lo, hi)
                    xr = apply_recourse(rob.x, alpha, fc, real)
                    flows = ptdf.matrix @ (net.gen_bus_matrix() @ xr - real)
                    for j, f in enumerate(flows):
                        lim = net.branches[j].limit
                        assert abs(f) <= lim + 1e-6
                        if f >= lim - 1e-6:
                            assert (j, "upper") in keep
                        if f <= -lim + 1e-6:
                            assert (j, "lower") in keep
            checked += 1
        assert checked >= 5


class TestChanceConstrained:
    def test_median_quantile_matches_deterministic(self, tri_tight):
        net, ptdf = tri_tight
        cc = screen_cc(net, ptdf, TRIANGLE_LOAD, GaussianUncertainty.from_sigma(net, 1.0, 0.5, 0.5))
        det = screen_deterministic(net, ptdf, TRIANGLE_LOAD)
        assert cc.classifications() == det.classifications()
        np.testing.assert_allclose([b.f_star for b in cc.bounds], [b.f_star for b in det.bounds], atol=1e-7)

    def test_triangle_against_tightened_oracle(self, tri_tight):
        net, ptdf = tri_tight
        unc = GaussianUncertainty.from_sigma(net, 1.0, 0.1)
        cc = screen_cc(net, ptdf, TRIANGLE_LOAD, unc)
        det = screen_deterministic(net, ptdf, TRIANGLE_LOAD)
        tightening = net.limits - unc.tightened_limits(net, ptdf)
        for b in cc.bounds:
            ref, lim = cc_screening_oracle(net, TRIANGLE_LOAD, b.line, b.direction, 1.0, 0.1, 0.1)
            assert b.f_star == pytest.approx(ref, abs=1e-6)
            expect = lim - ref if b.direction == "upper" else ref + lim
            assert b.margin == pytest.approx(expect, abs=1e-6)
            # region inclusion: the chance-constrained margin loses at most the tightening
            assert b.margin >= det.get(b.line, b.direction).margin - tightening[b.line] - 1e-7

    def test_growing_sigma_shrinks_extremes(self):
        # an 80 MW limit on L3 leaves no feasible point at sigma 10, so use 100
        net = triangle(limits=(1000.0, 1000.0, 100.0))
        ptdf = compute_ptdf(net)
        res = [screen_cc(net, ptdf, TRIANGLE_LOAD, GaussianUncertainty.from_sigma(net, s, 0.1))
               for s in (1.0, 5.0, 10.0)]
        for j in range(net.n_line):
            ups = [r.get(j, "upper").f_star for r in res]
            los = [r.get(j, "lower").f_star for r in res]
            assert all(b <= a + 1e-7 for a, b in zip(ups, ups[1:]))
            assert all(b >= a - 1e-7 for a, b in zip(los, los[1:]))

    def test_structural_line_kept(self):
        net = triangle(limits=(1000.0, 1000.0, 1.0))
        sr = screen_cc(net, compute_ptdf(net), TRIANGLE_LOAD, GaussianUncertainty.from_sigma(net, 5.0, 0.1))
        for d in DIRS:
            b = sr.get(2, d)
            assert b.classification == NON_REDUNDANT and b.source == SRC_NONE
        assert sr.notes

    def test_reduced_cc_model_is_exact(self):
        solved = 0
        for s, net, ptdf, fc in small_instances(100, n_bus=(4, 5), seed0=500, limit_range=(20, 70)):
            unc = GaussianUncertainty.from_sigma(net, 2.0, 0.1)
            try:
                keep = screen_cc(net, ptdf, fc, unc).keep()
                full = solve_uc(build_cc_uc(net, ptdf, fc, unc))
            except Exception:
                continue
            if not full.optimal:
                continue
            red = solve_uc(build_cc_uc(net, ptdf, fc, unc, keep=keep))
            assert red.objective == pytest.approx(full.objective, abs=1e-6)
            lim = unc.tightened_limits(net, ptdf)
            flows = ptdf.matrix @ (net.gen_bus_matrix() @ red.x - fc)
            assert np.all(np.abs(flows) <= lim + 1e-6)
            solved += 1
        assert solved >= 50


class TestReduction:
    def test_all_kept_equals_full(self, tri_tight):
        net, ptdf = tri_tight
        every = {(j, d) for j in range(3) for d in DIRS}
        a = solve_uc(build_deterministic_uc(net, ptdf, TRIANGLE_LOAD, keep=every))
        b = solve_uc(build_deterministic_uc(net, ptdf, TRIANGLE_LOAD))
        assert a.objective == b.objective

    def test_reduced_solution_feasible_for_full(self):
        mixed = 0
        for s, net, ptdf, fc in small_instances(30, seed0=600, limit_range=(20, 80)):
            try:
                sr = screen_deterministic(net, ptdf, fc)
            except ScreeningInfeasible:
                continue
            keep = reduce_model(sr)
            mixed += 0 < len(keep) < 2 * net.n_line
            full = solve_uc(build_deterministic_uc(net, ptdf, fc))
            red = solve_uc(build_deterministic_uc(net, ptdf, fc, keep=keep))
            assert red.objective == pytest.approx(full.objective, abs=1e-6)
            assert m1_violation(net, ptdf, fc, red.u, red.x) <= 1e-6
        assert mixed >= 3

    def test_keep_json_round_trip(self):
        keep = {(0, "upper"), (4, "lower")}
        assert keep_from_json(keep_to_json(keep)) == keep


class TestSerialisation:
    def test_json_round_trip(self):
        net = triangle(limits=(math.inf, 1000.0, 80.0))
        sr = screen(net, compute_ptdf(net), TRIANGLE_LOAD, "det")
        back = ScreeningResult.from_json(sr.to_json())
        assert back.classifications() == sr.classifications()
        assert back.to_csv() == sr.to_csv()

    def test_csv_layout(self, tri_tight):
        net, ptdf = tri_tight
        lines = screen(net, ptdf, TRIANGLE_LOAD, "det").to_csv().splitlines()
        assert lines[0] == "line,direction,method,classification,f_star,margin,source"
        assert len(lines) == 7
        assert lines[5] == "2,upper,S1,NonRedundant,100,-20,LP"

    def test_unknown_method(self, tri):
        with pytest.raises(ValueError):
            screen(tri[0], tri[1], TRIANGLE_LOAD, "xx")
