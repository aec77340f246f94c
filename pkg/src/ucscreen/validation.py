"""Monte-Carlo validation of reduced models and screening timing."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .case_io import Network, PtdfMatrix, participation_factors
from .mplp import PolicySet, evaluate_policy
from .parallel import pmap
from .screening import classify, fmt, margin_of, screening_template, solve_bound
from .uc_models import (
    BoxUncertainty,
    GaussianUncertainty,
    apply_recourse,
    build_cc_uc,
    build_deterministic_uc,
    build_robust_uc_scenarios,
    m1_violation,
    solve_uc,
    validate_forecast,
)

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
FAMILIES = ("T1", "T2", "T3", "T4", "T5")
MILP_GAP = 1e-9


class ClassificationMismatch(RuntimeError):
    def __init__(self, mismatches):
        self.mismatches = mismatches
        super().__init__(f"policy and LP screening disagree on {len(mismatches)} bounds: {mismatches[:5]}")


def sample_realizations(unc, net: Network, fc, n: int, seed: int) -> np.ndarray:
    """Realised demand vectors, one per row, reproducible from `seed`."""
    if n < 1:
        raise ValueError("need at least one realization")
    fc = validate_forecast(net, fc)
    rng = np.random.default_rng(seed)
    out = np.tile(fc, (n, 1))
    if isinstance(unc, GaussianUncertainty):
        omega = rng.standard_normal((n, net.n_bus)) * np.sqrt(unc.variance)
        out = fc - omega
    elif isinstance(unc, BoxUncertainty):
        lo, hi = unc.bounds(net, fc)
        idx = unc.indices(net)
        out[:, idx] = rng.uniform(lo[idx], hi[idx], size=(n, idx.size))
    elif unc is not None:
        raise TypeError(f"unsupported uncertainty model {type(unc).__name__}")
    return out


@dataclass
class ValidationReport:
    family: str
    n_samples: int
    n_evaluated: int
    full_infeasible: int
    infeasible_count: int
    infeasibility_rate: float
    removed_violation_rate: float
    mean_gap: float
    max_gap: float
    seed: int | None
    config: dict = field(default_factory=dict)
    constraint_violation_rates: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        d = {k: getattr(self, k) for k in ("family", "n_samples", "n_evaluated", "full_infeasible",
                                            "infeasible_count", "infeasibility_rate", "removed_violation_rate",
                                            "mean_gap", "max_gap", "seed", "config",
                                            "constraint_violation_rates")}
        d = {k: (_clean(v)) for k, v in d.items()}
        if timing:
            d["timing"] = _clean(self.timing)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "n_samples", "n_evaluated", "full_infeasible", "infeasible_count",
                    "infeasibility_rate", "removed_violation_rate", "mean_gap", "max_gap", "seed"])
        w.writerow([self.family, self.n_samples, self.n_evaluated, self.full_infeasible, self.infeasible_count,
                    fmt(self.infeasibility_rate), fmt(self.removed_violation_rate), fmt(self.mean_gap),
                    fmt(self.max_gap), "" if self.seed is None else self.seed])
        return buf.getvalue()


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def flow_violations(net: Network, ptdf: PtdfMatrix, realization, x) -> dict:
    """Violation (MW, >= 0) of every (line, direction) limit at dispatch x."""
    inj = net.gen_bus_matrix() @ x - np.asarray(realization, float)
    f = ptdf.matrix @ inj
    lim = net.limits
    out = {}
    for j in range(net.n_line):
        out[(j, "upper")] = max(0.0, f[j] - lim[j]) if math.isfinite(lim[j]) else 0.0
        out[(j, "lower")] = max(0.0, -lim[j] - f[j]) if math.isfinite(lim[j]) else 0.0
    return out


def _judge(net, ptdf, realization, u, x, keep):
    """(any violation, removed-limit violation, per-constraint violation flags)."""
    worst = m1_violation(net, ptdf, realization, u, x)
    fv = flow_violations(net, ptdf, realization, x)
    removed = any(v > FEAS_TOL for jd, v in fv.items() if jd not in keep)
    flags = {f"line{j}-{d}": v > FEAS_TOL for (j, d), v in fv.items()}
    for i, g in enumerate(net.generators):
        flags[f"gen{i}-upper"] = x[i] - u[i] * g.pmax > FEAS_TOL
        flags[f"gen{i}-lower"] = u[i] * g.pmin - x[i] > FEAS_TOL
    return worst > FEAS_TOL, removed, flags


def validate_reduced(family: str, net: Network, ptdf: PtdfMatrix, fc, unc, keep, realizations,
                     seed: int | None = None, threads: int | None = None) -> ValidationReport:
    """Solve the reduced model per family and judge it against the full deterministic UC.

    T1-T3 re-solve the reduced deterministic UC at each realization. T4 and T5
    solve the reduced chance-constrained or robust model once at the forecast
    and follow the realization by affine recourse.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    fc = validate_forecast(net, fc)
    keep = set(keep)
    R = np.atleast_2d(np.asarray(realizations, float))
    alpha = participation_factors(net)
    cost = np.array([g.cost for g in net.generators])

    fixed = None
    if family == "T4":
        if not isinstance(unc, GaussianUncertainty):
            raise ValueError("T4 needs a Gaussian uncertainty model")
        fixed = solve_uc(build_cc_uc(net, ptdf, fc, unc, keep), gap=MILP_GAP)
        alpha = unc.alpha
    elif family == "T5":
        if not isinstance(unc, BoxUncertainty):
            raise ValueError("T5 needs a box uncertainty model")
        fixed = solve_uc(build_robust_uc_scenarios(net, ptdf, fc, unc, keep), gap=MILP_GAP)

    def one(ell):
        full = solve_uc(build_deterministic_uc(net, ptdf, ell), gap=MILP_GAP)
        if fixed is None:
            red = solve_uc(build_deterministic_uc(net, ptdf, ell, keep), gap=MILP_GAP)
            if not red.optimal:
                return full.optimal, None, True, True, {}
            u, x = red.u, red.x
        else:
            if not fixed.optimal:
                return full.optimal, None, True, True, {}
            u, x = fixed.u, apply_recourse(fixed.x, alpha, fc, ell)
        bad, removed, flags = _judge(net, ptdf, ell, u, x, keep)
        gap = None
        if full.optimal and not bad:
            gap = (float(cost @ x) - full.objective) / max(abs(full.objective), 1.0)
        return full.optimal, gap, bad, removed, flags

    results = pmap(one, list(R), threads)
    evaluated = [r for r in results if r[0]]
    n_eval = len(evaluated)
    bad = sum(r[2] for r in evaluated)
    removed = sum(r[3] for r in evaluated)
    gaps = [r[1] for r in evaluated if r[1] is not None]
    rates = {}
    if evaluated and evaluated[0][4]:
        for key in evaluated[0][4]:
            rates[key] = sum(r[4].get(key, False) for r in evaluated) / n_eval
    config = {"family": family, "keep": sorted([j, d] for j, d in keep), "forecast": fc.tolist(),
              "uncertainty": unc.to_dict() if unc is not None else None}
    if fixed is not None:
        config["first_stage_status"] = fixed.status
    return ValidationReport(
        family=family,
        n_samples=int(R.shape[0]),
        n_evaluated=n_eval,
        full_infeasible=int(R.shape[0] - n_eval),
        infeasible_count=int(bad),
        infeasibility_rate=bad / n_eval if n_eval else math.nan,
        removed_violation_rate=removed / n_eval if n_eval else math.nan,
        mean_gap=float(np.mean(gaps)) if gaps else math.nan,
        max_gap=float(np.max(gaps)) if gaps else math.nan,
        seed=seed,
        config=config,
        constraint_violation_rates=rates,
    )


def cc_violation_frequencies(net: Network, ptdf: PtdfMatrix, unc: GaussianUncertainty, fc, x,
                             n: int = 20_000, seed: int = 0, lines=None) -> dict:
    """Empirical P(flow beyond its physical limit) per (line, direction) at dispatch x under recourse."""
    fc = validate_forecast(net, fc)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((n, net.n_bus)) * np.sqrt(unc.variance)
    big_omega = omega.sum(axis=1)
    Gm = net.gen_bus_matrix()
    P = ptdf.matrix
    base = P @ (Gm @ x - fc)
    # realised injection: G (x - alpha * Omega) - (fc - omega)
    shift = P @ (Gm @ unc.alpha)
    flows = base[None, :] - big_omega[:, None] * shift[None, :] + omega @ P.T
    lim = net.limits
    out = {}
    for j in (range(net.n_line) if lines is None else lines):
        if not math.isfinite(lim[j]):
            continue
        out[(j, "upper")] = float(np.mean(flows[:, j] > lim[j]))
        out[(j, "lower")] = float(np.mean(flows[:, j] < -lim[j]))
    return out


def timing_compare(policies: PolicySet, net: Network, ptdf: PtdfMatrix, fcs, method: str | None = None,
                   unc=None, repeats: int = 1) -> dict:
    """Per-bound wall time of direct LP screening against policy evaluation.

    Classifications of both routes are compared first; any disagreement raises
    ClassificationMismatch and no timing is reported.
    """
    method = policies.method if method is None else method
    if method != policies.method:
        raise ValueError("policies were built for a different method")
    unc = policies.uncertainty if unc is None else unc
    tpl = screening_template(net, ptdf, method, unc, policies.with_recourse)
    tag = {"det": "S1", "cc": "S2", "ro": "S3"}[method]
    lp_time = pol_time = fb_time = 0.0
    n_lp = n_pol = n_fb = 0
    mismatches = []
    sources = {"AffinePolicy": 0, "LP": 0}
    for fc in fcs:
        fc = validate_forecast(net, fc)
        for key, pol in sorted(policies.policies.items()):
            j, d = key
            t0 = time.perf_counter()
            for _ in range(repeats):
                direct = solve_bound(tpl, j, d, fc, tag)
            lp_time += (time.perf_counter() - t0) / repeats
            n_lp += 1
            t0 = time.perf_counter()
            for _ in range(repeats):
                val = evaluate_policy(pol, fc)
            dt = (time.perf_counter() - t0) / repeats
            if val is not None:
                pol_time += dt
                n_pol += 1
                sources["AffinePolicy"] += 1
                limit = policies.limits[key]
                cls = classify(margin_of(d, val, limit), limit)
            else:
                t0 = time.perf_counter()
                fb = solve_bound(tpl, j, d, fc, tag)
                fb_time += dt + time.perf_counter() - t0
                n_fb += 1
                sources["LP"] += 1
                cls = fb.classification
            if cls != direct.classification:
                mismatches.append((j, d, cls, direct.classification, direct.f_star, val))
    if mismatches:
        raise ClassificationMismatch(mismatches)
    mean_lp = lp_time / n_lp if n_lp else math.nan
    mean_pol = pol_time / n_pol if n_pol else math.nan
    return {
        "bounds_per_forecast": len(policies.policies),
        "forecasts": len(fcs),
        "mean_lp_seconds": mean_lp,
        "mean_policy_seconds": mean_pol,
        "speedup": mean_lp / mean_pol if n_pol and mean_pol > 0 else math.nan,
        "policy_total_seconds": pol_time,
        "fallback_total_seconds": fb_time,
        "hybrid_total_seconds": pol_time + fb_time,
        "lp_total_seconds": lp_time,
        "sources": sources,
    }
