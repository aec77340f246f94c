"""Single-step UC formulations: deterministic, chance-constrained and robust.

All formulations are assembled as a :class:`UcTemplate`, a constraint system
whose right-hand side is affine in the nodal net-demand forecast::

    A y  (<=|==|>=)  b0 + B @ forecast,      lb <= y <= ub

together with one flow expression per line, ``flow = flow_coef @ y +
flow_load @ forecast``. The same template feeds the MILP builders, the
screening LPs (commitment relaxed) and the parametric programs.

Sign convention: the realised demand is ``l = forecast - omega``. Recourse moves
every participating unit by its share of the realised-minus-forecast demand so
that the adjusted dispatch balances the realised demand exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .case_io import Network, PtdfMatrix, participation_factors
from .lp import EQ, GE, LE, LpProblem, row_residuals
from .milp import MilpProblem, MilpSolution, solve_milp

UPPER, LOWER = "upper", "lower"
DIRECTIONS = (UPPER, LOWER)
EXPLICIT, PROJECTED = "explicit", "projected"
ROBUST_SCENARIO_CAP = 12


class StructuralInfeasibility(ValueError):
    """A tightened flow limit is negative; no dispatch can satisfy it."""

    def __init__(self, lines, message=None):
        self.lines = tuple(lines)
        super().__init__(message or f"tightened flow limit negative on lines {list(self.lines)}")


# ---------------------------------------------------------------------------
# Gaussian helpers
# ---------------------------------------------------------------------------


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def normal_ppf(p: float, tol: float = 1e-12) -> float:
    """Inverse standard normal CDF by bisection on the erf-based CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Uncertainty models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxUncertainty:
    """Realised demand at each uncertain bus lies in [beta1 * forecast, beta2 * forecast]."""

    uncertain: tuple  # bus ids
    beta1: tuple
    beta2: tuple

    def __post_init__(self):
        k = len(self.uncertain)
        b1 = _per_node(self.beta1, k)
        b2 = _per_node(self.beta2, k)
        if any(v > 1 for v in b1) or any(v < 1 for v in b2):
            raise ValueError("box requires beta1 <= 1 <= beta2")
        object.__setattr__(self, "uncertain", tuple(int(b) for b in self.uncertain))
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)

    def indices(self, net: Network) -> np.ndarray:
        return np.array([net.bus_index(b) for b in self.uncertain], dtype=int)

    def bounds(self, net: Network, forecast) -> tuple[np.ndarray, np.ndarray]:
        """Element-wise realised-demand interval; certain buses collapse to the forecast."""
        fc = np.asarray(forecast, dtype=float)
        lo, hi = fc.copy(), fc.copy()
        idx = self.indices(net)
        a = np.asarray(self.beta1) * fc[idx]
        b = np.asarray(self.beta2) * fc[idx]
        lo[idx], hi[idx] = np.minimum(a, b), np.maximum(a, b)
        return lo, hi

    def check_forecast(self, net: Network, forecast) -> None:
        idx = self.indices(net)
        if np.any(np.asarray(forecast, float)[idx] < 0):
            raise ValueError("box uncertainty needs a non-negative forecast at uncertain buses")

    def to_dict(self) -> dict:
        return {"kind": "box", "uncertain": list(self.uncertain),
                "beta1": list(self.beta1), "beta2": list(self.beta2)}


def _per_node(value, k) -> tuple:
    if np.ndim(value) == 0:
        return (float(value),) * k
    vals = tuple(float(v) for v in value)
    if len(vals) != k:
        raise ValueError("per-node beta length must match the uncertain bus count")
    return vals


@dataclass(frozen=True, eq=False)
class GaussianUncertainty:
    """Zero-mean independent Gaussian forecast errors with fixed participation."""

    variance: np.ndarray  # per bus, MW^2
    eps_x: float
    eps_f: float
    alpha: np.ndarray  # per generator, sums to one

    def __post_init__(self):
        var = np.asarray(self.variance, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if np.any(var < 0):
            raise ValueError("variances must be non-negative")
        for name, e in (("eps_x", self.eps_x), ("eps_f", self.eps_f)):
            if not 0.0 < e <= 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5]")
        if alpha.size and not math.isclose(alpha.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("participation factors must sum to one")
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_sigma(cls, net: Network, sigma, eps_x: float, eps_f: float | None = None):
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), (net.n_bus,))
        return cls(sig ** 2, eps_x, eps_x if eps_f is None else eps_f, participation_factors(net))

    @property
    def sigma_total(self) -> float:
        return float(math.sqrt(self.variance.sum()))

    def bus_alpha(self, net: Network) -> np.ndarray:
        return net.gen_bus_matrix() @ self.alpha

    def flow_sigma(self, net: Network, ptdf: PtdfMatrix) -> np.ndarray:
        """Per-line flow standard deviation, sum_i a_i^2 (var_i + alpha_i^2 var_total)."""
        a2 = ptdf.matrix ** 2
        return np.sqrt(a2 @ (self.variance + self.bus_alpha(net) ** 2 * self.variance.sum()))

    def reserve_floor(self) -> np.ndarray:
        return self.alpha * normal_ppf(1.0 - self.eps_x) * self.sigma_total

    def tightened_limits(self, net: Network, ptdf: PtdfMatrix) -> np.ndarray:
        z = 0.0 if self.eps_f == 0.5 else normal_ppf(1.0 - self.eps_f)
        return net.limits - z * self.flow_sigma(net, ptdf)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "variance": self.variance.tolist(), "eps_x": self.eps_x,
                "eps_f": self.eps_f, "alpha": self.alpha.tolist()}


def uncertainty_from_dict(d: dict):
    if d is None:
        return None
    if d["kind"] == "box":
        return BoxUncertainty(tuple(d["uncertain"]), tuple(d["beta1"]), tuple(d["beta2"]))
    if d["kind"] == "gaussian":
        return GaussianUncertainty(np.array(d["variance"]), d["eps_x"], d["eps_f"], np.array(d["alpha"]))
    raise ValueError(f"unknown uncertainty kind {d['kind']!r}")


def validate_forecast(net: Network, forecast) -> np.ndarray:
    fc = np.asarray(forecast, dtype=float).ravel()
    if fc.size != net.n_bus:
        raise ValueError(f"forecast has {fc.size} entries, network has {net.n_bus} buses")
    if not np.isfinite(fc).all():
        raise ValueError("forecast entries must be finite")
    return fc


# ---------------------------------------------------------------------------
# Template
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UcTemplate:
    A: np.ndarray
    senses: tuple
    b0: np.ndarray
    B: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cost: np.ndarray
    binaries: tuple
    index: dict
    lines: tuple  # global line indices with a flow expression
    flow_coef: np.ndarray
    flow_load: np.ndarray
    limit: np.ndarray  # limit each bound is judged against (tightened for CC)
    limit_rows: np.ndarray  # (len(lines), 2): row of the upper / lower limit, -1 if absent
    notes: tuple = ()

    def rhs(self, forecast) -> np.ndarray:
        return self.b0 + self.B @ np.asarray(forecast, dtype=float)

    def position(self, line: int) -> int:
        return self.lines.index(line)

    def lp(self, forecast, objective=None, maximize=False, drop_rows=()) -> LpProblem:
        c = self.cost if objective is None else objective
        b = self.rhs(forecast)
        if drop_rows:
            keep = np.setdiff1d(np.arange(b.size), np.asarray(drop_rows, dtype=int))
            return LpProblem(c, self.A[keep], tuple(self.senses[k] for k in keep), b[keep],
                             self.lb, self.ub, maximize)
        return LpProblem(c, self.A, self.senses, b, self.lb, self.ub, maximize)

    def own_rows(self, line: int) -> tuple:
        rows = self.limit_rows[self.position(line)]
        return tuple(int(r) for r in rows if r >= 0)

    def flows(self, y, forecast) -> np.ndarray:
        return self.flow_coef @ y + self.flow_load @ np.asarray(forecast, dtype=float)


class _Builder:
    """Accumulates variables and affine-RHS rows."""

    def __init__(self, n_bus: int):
        self.n_bus = n_bus
        self.lb: list = []
        self.ub: list = []
        self.names: list = []
        self.index: dict = {}
        self.rows: list = []

    @property
    def n(self):
        return len(self.lb)

    def add_vars(self, name, count, lb, ub) -> slice:
        s = slice(self.n, self.n + count)
        self.lb.extend(np.broadcast_to(np.asarray(lb, float), (count,)).tolist())
        self.ub.extend(np.broadcast_to(np.asarray(ub, float), (count,)).tolist())
        self.index[name] = s
        return s

    def add_row(self, coef: dict, sense: str, b0: float = 0.0, bvec=None) -> int:
        self.rows.append((coef, sense, float(b0), bvec))
        return len(self.rows) - 1

    def matrices(self):
        m, n = len(self.rows), self.n
        A = np.zeros((m, n))
        b0 = np.zeros(m)
        B = np.zeros((m, self.n_bus))
        senses = []
        for r, (coef, sense, c0, bvec) in enumerate(self.rows):
            for k, v in coef.items():
                A[r, k] += v
            b0[r] = c0
            if bvec is not None:
                B[r] = bvec
            senses.append(sense)
        return A, tuple(senses), b0, B, np.array(self.lb), np.array(self.ub)


def _lines_kept(net: Network, keep) -> list[tuple[int, str]]:
    bounds = [(j, d) for j in range(net.n_line) for d in DIRECTIONS if math.isfinite(net.branches[j].limit)]
    if keep is None:
        return bounds
    keep = set(keep)
    return [jd for jd in bounds if jd in keep]


def _commitment_vars(bld: _Builder, net: Network, commitment: str):
    gens = net.generators
    if commitment == EXPLICIT:
        u_ub = [0.0 if (g.pmin == 0 and g.pmax == 0) else 1.0 for g in gens]
        u = bld.add_vars("u", len(gens), 0.0, u_ub)
        return u, tuple(range(u.start, u.stop))
    if commitment != PROJECTED:
        raise ValueError(f"commitment must be {EXPLICIT!r} or {PROJECTED!r}")
    return None, ()


def _add_generation_rows(bld, net, u, xexpr, rhs_shift=None, lo=None, hi=None):
    """Add ``u*pmin <= x_expr <= u*pmax`` (explicit) or ``lo <= x_expr <= hi`` rows.

    ``xexpr(i)`` returns the coefficient dict of unit i's (possibly recourse-adjusted)
    output; ``rhs_shift(i)`` returns a per-bus vector added to the RHS.
    """
    for i, g in enumerate(net.generators):
        coef = xexpr(i)
        shift = None if rhs_shift is None else rhs_shift(i)
        if u is not None:
            up = dict(coef)
            up[u.start + i] = up.get(u.start + i, 0.0) - g.pmax
            bld.add_row(up, LE, 0.0, shift)
            dn = dict(coef)
            dn[u.start + i] = dn.get(u.start + i, 0.0) - g.pmin
            bld.add_row(dn, GE, 0.0, shift)
        else:
            bld.add_row(coef, LE, hi[i], shift)
            bld.add_row(coef, GE, lo[i], shift)


def _relaxed_interval(g, rmin: float = 0.0) -> tuple[float, float]:
    """Projection of {u*pmin + r <= x <= u*pmax - r, r >= rmin, 0 <= u <= 1} onto x."""
    if rmin <= 0:
        return min(0.0, g.pmin), max(0.0, g.pmax)
    span = g.pmax - g.pmin
    if span <= 0 or 2 * rmin / span > 1:
        return math.inf, -math.inf  # empty
    u0 = 2 * rmin / span
    return min(g.pmin * u0, g.pmin) + rmin, max(g.pmax * u0, g.pmax) - rmin


def _finish(bld, cost, binaries, net, lines_fc, flow_coef, flow_load, limit, limit_rows, notes=()):
    A, senses, b0, B, lb, ub = bld.matrices()
    return UcTemplate(A, senses, b0, B, lb, ub, cost, tuple(binaries), dict(bld.index),
                      tuple(lines_fc), flow_coef, flow_load, np.asarray(limit, float),
                      np.asarray(limit_rows, dtype=int).reshape(-1, 2), tuple(notes))


def _flow_rows(bld, net, kept, flow_coef, flow_load, limits, skip=()):
    """Rows limit flow between -limit and +limit for each kept (line, direction)."""
    limit_rows = np.full((net.n_line, 2), -1, dtype=int)
    for j, d in kept:
        if j in skip:
            continue
        coef = {k: v for k, v in enumerate(flow_coef[j]) if v != 0.0}
        if d == UPPER:
            limit_rows[j, 0] = bld.add_row(coef, LE, limits[j], -flow_load[j])
        else:
            limit_rows[j, 1] = bld.add_row(coef, GE, -limits[j], -flow_load[j])
    return limit_rows


def deterministic_template(net: Network, ptdf: PtdfMatrix, keep=None, commitment: str = EXPLICIT) -> UcTemplate:
    """Deterministic UC constraint system (generation bounds, flow limits, balance)."""
    P = ptdf.matrix
    PG = P @ net.gen_bus_matrix()
    bld = _Builder(net.n_bus)
    u, binaries = _commitment_vars(bld, net, commitment)
    lo = [min(0.0, g.pmin) for g in net.generators]
    hi = [max(0.0, g.pmax) for g in net.generators]
    x = bld.add_vars("x", net.n_gen, lo, hi)
    if u is not None:
        _add_generation_rows(bld, net, u, lambda i: {x.start + i: 1.0})
    bld.add_row({k: 1.0 for k in range(x.start, x.stop)}, EQ, 0.0, np.ones(net.n_bus))
    flow_coef = np.zeros((net.n_line, bld.n))
    flow_coef[:, x] = PG
    flow_load = -P
    limits = net.limits
    limit_rows = _flow_rows(bld, net, _lines_kept(net, keep), flow_coef, flow_load, limits)
    cost = np.zeros(bld.n)
    cost[x] = [g.cost for g in net.generators]
    return _finish(bld, cost, binaries, net, range(net.n_line), flow_coef, flow_load, limits, limit_rows)


def cc_template(net: Network, ptdf: PtdfMatrix, unc: GaussianUncertainty, keep=None,
                commitment: str = EXPLICIT) -> UcTemplate:
    """Deterministic equivalent of the chance-constrained UC.

    Reserve ``r_i >= alpha_i * z(eps_x) * sigma_total`` and flow limits tightened by
    ``z(eps_f) * sigma_flow``. Lines whose tightened limit is negative carry no rows;
    they are listed in ``notes`` for the caller to report.
    """
    P = ptdf.matrix
    PG = P @ net.gen_bus_matrix()
    tight = unc.tightened_limits(net, ptdf)
    rmin = unc.reserve_floor()
    bld = _Builder(net.n_bus)
    u, binaries = _commitment_vars(bld, net, commitment)
    if u is not None:
        lo = [min(0.0, g.pmin) for g in net.generators]
        hi = [max(0.0, g.pmax) for g in net.generators]
        x = bld.add_vars("x", net.n_gen, lo, hi)
        r = bld.add_vars("r", net.n_gen, rmin, np.inf)
        for i, g in enumerate(net.generators):
            bld.add_row({x.start + i: 1.0, r.start + i: 1.0, u.start + i: -g.pmax}, LE)
            bld.add_row({x.start + i: 1.0, r.start + i: -1.0, u.start + i: -g.pmin}, GE)
    else:
        iv = [_relaxed_interval(g, rmin[i]) for i, g in enumerate(net.generators)]
        if any(a > b for a, b in iv):
            raise StructuralInfeasibility((), "reserve floor exceeds the range of a participating unit")
        x = bld.add_vars("x", net.n_gen, [a for a, _ in iv], [b for _, b in iv])
    bld.add_row({k: 1.0 for k in range(x.start, x.stop)}, EQ, 0.0, np.ones(net.n_bus))
    flow_coef = np.zeros((net.n_line, bld.n))
    flow_coef[:, x] = PG
    flow_load = -P
    broken = tuple(j for j in range(net.n_line) if tight[j] < 0)
    limit_rows = _flow_rows(bld, net, _lines_kept(net, keep), flow_coef, flow_load, tight, skip=broken)
    cost = np.zeros(bld.n)
    cost[x] = [g.cost for g in net.generators]
    notes = tuple(f"line {j} tightened limit {tight[j]:.6g} < 0" for j in broken)
    tpl = _finish(bld, cost, binaries, net, range(net.n_line), flow_coef, flow_load, tight, limit_rows, notes)
    object.__setattr__(tpl, "structural", broken)
    return tpl


def robust_template(net: Network, ptdf: PtdfMatrix, unc: BoxUncertainty, recourse: bool = False,
                    keep=None, commitment: str = EXPLICIT) -> UcTemplate:
    """Robust screening region: the realised demand at uncertain buses joins the decision vector.

    Variables ``l_U`` stand for ``forecast_U - omega_U`` and are confined to the box.
    Without recourse the dispatch ``x`` is the post-realisation output; with
    recourse the output is ``x + alpha * (sum l_U - sum forecast_U)``.
    """
    P = ptdf.matrix
    Gm = net.gen_bus_matrix()
    PG = P @ Gm
    U = unc.indices(net)
    C = np.setdiff1d(np.arange(net.n_bus), U)
    bld = _Builder(net.n_bus)
    u, binaries = _commitment_vars(bld, net, commitment)
    relaxed = [_relaxed_interval(g) for g in net.generators]
    if recourse:
        x = bld.add_vars("x", net.n_gen, -np.inf, np.inf)
    else:
        lo = [min(0.0, g.pmin) for g in net.generators]
        hi = [max(0.0, g.pmax) for g in net.generators]
        if u is None:
            lo, hi = [a for a, _ in relaxed], [b for _, b in relaxed]
        x = bld.add_vars("x", net.n_gen, lo, hi)
    lu = bld.add_vars("l_unc", U.size, -np.inf, np.inf)
    for k, bus in enumerate(U):
        e = np.zeros(net.n_bus)
        e[bus] = unc.beta1[k]
        bld.add_row({lu.start + k: 1.0}, GE, 0.0, e)
        e = np.zeros(net.n_bus)
        e[bus] = unc.beta2[k]
        bld.add_row({lu.start + k: 1.0}, LE, 0.0, e)

    sum_u = np.zeros(net.n_bus)
    sum_u[U] = 1.0
    if recourse:
        alpha = participation_factors(net)

        def xexpr(i):
            coef = {x.start + i: 1.0}
            for k in range(U.size):
                coef[lu.start + k] = alpha[i]
            return coef

        def shift(i):
            return alpha[i] * sum_u

        if u is not None:
            _add_generation_rows(bld, net, u, xexpr, shift)
        else:
            _add_generation_rows(bld, net, None, xexpr, shift,
                                 [a for a, _ in relaxed], [b for _, b in relaxed])
        bld.add_row({k: 1.0 for k in range(x.start, x.stop)}, EQ, 0.0, np.ones(net.n_bus))
        pga = PG @ alpha
        flow_coef = np.zeros((net.n_line, bld.n))
        flow_coef[:, x] = PG
        flow_coef[:, lu] = pga[:, None] - P[:, U]
        flow_load = np.zeros((net.n_line, net.n_bus))
        flow_load[:, U] = -pga[:, None]
        flow_load[:, C] = -P[:, C]
    else:
        if u is not None:
            _add_generation_rows(bld, net, u, lambda i: {x.start + i: 1.0})
        coef = {k: 1.0 for k in range(x.start, x.stop)}
        coef.update({k: -1.0 for k in range(lu.start, lu.stop)})
        ones_c = np.ones(net.n_bus)
        ones_c[U] = 0.0
        bld.add_row(coef, EQ, 0.0, ones_c)
        flow_coef = np.zeros((net.n_line, bld.n))
        flow_coef[:, x] = PG
        flow_coef[:, lu] = -P[:, U]
        flow_load = np.zeros((net.n_line, net.n_bus))
        flow_load[:, C] = -P[:, C]
    limits = net.limits
    limit_rows = _flow_rows(bld, net, _lines_kept(net, keep), flow_coef, flow_load, limits)
    cost = np.zeros(bld.n)
    cost[x] = [g.cost for g in net.generators]
    return _finish(bld, cost, binaries, net, range(net.n_line), flow_coef, flow_load, limits, limit_rows)


# ---------------------------------------------------------------------------
# MILP builders
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UcModel(MilpProblem):
    index: dict = field(default_factory=dict)
    scenarios: np.ndarray | None = None

    def solution(self, sol: MilpSolution) -> "UcSolution":
        if sol.x is None:
            return UcSolution(sol.status, None, None, None, float("nan"))
        y = sol.x
        u = y[self.index["u"]] if "u" in self.index else None
        r = y[self.index["r"]] if "r" in self.index else None
        return UcSolution(sol.status, u, y[self.index["x"]], r, sol.objective)


@dataclass(eq=False)
class UcSolution:
    status: str
    u: np.ndarray | None
    x: np.ndarray | None
    r: np.ndarray | None
    objective: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _model_from_template(tpl: UcTemplate, forecast) -> UcModel:
    lp = tpl.lp(forecast)
    return UcModel(lp, tpl.binaries, index=tpl.index)


def build_deterministic_uc(net: Network, ptdf: PtdfMatrix, forecast, keep=None) -> UcModel:
    """Deterministic UC (M1); `keep` restricts which (line, direction) limits are modelled."""
    fc = validate_forecast(net, forecast)
    return _model_from_template(deterministic_template(net, ptdf, keep), fc)


def build_cc_uc(net: Network, ptdf: PtdfMatrix, forecast, unc: GaussianUncertainty, keep=None) -> UcModel:
    """Chance-constrained UC (M2) through its Gaussian deterministic equivalent."""
    fc = validate_forecast(net, forecast)
    tpl = cc_template(net, ptdf, unc, keep)
    wanted = {j for j, _ in _lines_kept(net, keep)}
    broken = [j for j in tpl.structural if j in wanted]
    if broken:
        raise StructuralInfeasibility(broken)
    return _model_from_template(tpl, fc)


def box_vertices(net: Network, forecast, unc: BoxUncertainty) -> np.ndarray:
    """All 2^K realised-demand vectors at the corners of the box."""
    idx = unc.indices(net)
    if idx.size > ROBUST_SCENARIO_CAP:
        raise ValueError(f"{idx.size} uncertain buses exceed the vertex-enumeration cap "
                         f"of {ROBUST_SCENARIO_CAP}; reduce the uncertain bus set")
    fc = np.asarray(forecast, dtype=float)
    lo, hi = unc.bounds(net, fc)
    out = []
    for corner in itertools.product((0, 1), repeat=idx.size):
        v = fc.copy()
        for k, bit in enumerate(corner):
            v[idx[k]] = hi[idx[k]] if bit else lo[idx[k]]
        out.append(v)
    return np.array(out)


def build_robust_uc_scenarios(net: Network, ptdf: PtdfMatrix, forecast, unc: BoxUncertainty,
                              keep=None, alpha=None) -> UcModel:
    """Robust UC (M3) as one MILP over the box vertices with shared (u, x).

    Each vertex s imposes the recourse-adjusted generation and flow limits; the
    objective is the epigraph of the worst-case cost ``c x + (c alpha) m_s``.
    """
    fc = validate_forecast(net, forecast)
    unc.check_forecast(net, fc)
    scen = box_vertices(net, fc, unc)
    alpha = participation_factors(net) if alpha is None else np.asarray(alpha, float)
    P = ptdf.matrix
    PG = P @ net.gen_bus_matrix()
    pga = PG @ alpha
    cost_g = np.array([g.cost for g in net.generators])
    bld = _Builder(net.n_bus)
    u, binaries = _commitment_vars(bld, net, EXPLICIT)
    x = bld.add_vars("x", net.n_gen, -np.inf, np.inf)
    t = bld.add_vars("t", 1, -np.inf, np.inf)
    kept = _lines_kept(net, keep)
    bld.add_row({k: 1.0 for k in range(x.start, x.stop)}, EQ, float(fc.sum()))
    seen = set()
    for ell in scen:
        mis = float(ell.sum() - fc.sum())
        key = (mis, tuple(ell))
        if key in seen:
            continue
        seen.add(key)
        for i, g in enumerate(net.generators):
            bld.add_row({x.start + i: 1.0, u.start + i: -g.pmax}, LE, -alpha[i] * mis)
            bld.add_row({x.start + i: 1.0, u.start + i: -g.pmin}, GE, -alpha[i] * mis)
        const = pga * mis - P @ ell
        for j, d in kept:
            coef = {x.start + i: v for i, v in enumerate(PG[j]) if v != 0.0}
            lim = net.branches[j].limit
            if d == UPPER:
                bld.add_row(coef, LE, lim - const[j])
            else:
                bld.add_row(coef, GE, -lim - const[j])
        epi = {t.start: 1.0}
        epi.update({x.start + i: -cost_g[i] for i in range(net.n_gen)})
        bld.add_row(epi, GE, float(cost_g @ alpha) * mis)
    A, senses, b0, _, lb, ub = bld.matrices()
    c = np.zeros(bld.n)
    c[t] = 1.0
    return UcModel(LpProblem(c, A, senses, b0, lb, ub), binaries, index=dict(bld.index), scenarios=scen)


def apply_recourse(x, alpha, forecast, realization) -> np.ndarray:
    """Shift dispatch by alpha times the realised-minus-forecast total demand."""
    mismatch = float(np.sum(realization) - np.sum(forecast))
    return np.asarray(x, dtype=float) + np.asarray(alpha, dtype=float) * mismatch


def solve_uc(model: UcModel, gap: float = 1e-9, node_limit: int = 100_000) -> UcSolution:
    return model.solution(solve_milp(model, gap=gap, node_limit=node_limit))


def m1_violation(net: Network, ptdf: PtdfMatrix, realization, u, x) -> float:
    """Largest violation (MW) of the full deterministic UC at `realization` by (u, x)."""
    tpl = deterministic_template(net, ptdf)
    y = np.concatenate([u, x])
    lp = tpl.lp(realization)
    rows = row_residuals(lp, y)
    bnd = np.maximum(np.maximum(lp.lb - y, y - lp.ub), 0.0)
    return float(max(rows.max(initial=0.0), bnd.max(initial=0.0)))
