"""Multi-parametric screening LPs: critical-region enumeration and affine policies.

A screening LP whose right-hand side depends affinely on the forecast is
solved once per critical region. Inside a region the optimal basis stays
fixed, so the basic variables and the extreme flow are affine in the varying
part of the forecast. Regions are discovered by stepping across facets from a
seed point; every region's inequality description is reduced to its facets
and certified full-dimensional with a Chebyshev ball.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .case_io import Network, PtdfMatrix
from .lp import EQ, GE, LE, LpProblem, Status, solve_lp, standard_form
from .parallel import pmap
from .screening import (
    NOT_COVERED,
    SRC_NONE,
    SRC_POLICY,
    BoundResult,
    ScreeningResult,
    bound_lp,
    classify,
    margin_of,
    screening_template,
    solve_bound,
)
from .uc_models import DIRECTIONS, PROJECTED, UPPER, UcTemplate, uncertainty_from_dict, validate_forecast

log = logging.getLogger(__name__)

SCHEMA = "mplp-policy/1"
REGION_CAP = 10_000
STEP_REL = 1e-6
MEMBER_TOL = 1e-8
JITTER_REL = 1e-7
RETRIES = 5
COMPLETE, OVERFLOW = "complete", "overflow"


class PolicyOverflow(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Polyhedra
# ---------------------------------------------------------------------------


def chebyshev(G, g, eq=None, rmax: float = 1.0):
    """Largest ball inside {G x <= g} (optionally within the hyperplane eq = (a, b)).

    Returns (center, radius) or None when the set is empty.
    """
    G = np.atleast_2d(np.asarray(G, float))
    g = np.asarray(g, float)
    d = G.shape[1]
    norms = np.linalg.norm(G, axis=1)
    A_eq = np.zeros((0, d + 1))
    b_eq = np.zeros(0)
    if eq is not None:
        a, b = eq
        a = np.asarray(a, float)
        an = a / np.linalg.norm(a)
        proj = G - np.outer(G @ an, an)
        norms = np.linalg.norm(proj, axis=1)
        A_eq = np.append(a, 0.0)[None, :]
        b_eq = np.array([float(b)])
    A = np.vstack([np.hstack([G, norms[:, None]]), A_eq])
    senses = (LE,) * G.shape[0] + (EQ,) * A_eq.shape[0]
    c = np.zeros(d + 1)
    c[-1] = 1.0
    lb = np.append(np.full(d, -np.inf), 0.0)
    ub = np.append(np.full(d, np.inf), rmax)
    sol = solve_lp(LpProblem(c, A, senses, np.concatenate([g, b_eq]), lb, ub, maximize=True))
    if not sol.optimal:
        return None
    return sol.x[:d], float(sol.x[-1])


def _normalize(G, g, tol=1e-12):
    """Scale rows to unit normal; returns (G, g, ok) where ok flags consistent zero rows."""
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= tol
    ok = bool(np.all(g[zero] >= -1e-9 * max(1.0, float(np.abs(g).max(initial=0.0)))))
    keep = ~zero
    return G[keep] / norms[keep, None], g[keep] / norms[keep], ok


def remove_redundant(G, g, box=None, tol: float = 1e-9):
    """Irredundant subset of normalised rows {G x <= g}; `box` = (lo, hi) bounds the set if known."""
    G = np.asarray(G, float)
    g = np.asarray(g, float)
    if G.shape[0] == 0:
        return G, g
    keep = np.ones(G.shape[0], dtype=bool)
    if box is not None:
        lo, hi = box
        reach = np.where(G > 0, G * hi, G * lo).sum(axis=1)
        keep &= ~(reach <= g - tol)
    # identical normals: tightest survives
    idx = np.flatnonzero(keep)
    order = sorted(idx, key=lambda i: (tuple(np.round(G[i], 9)), g[i]))
    seen = set()
    for i in order:
        key = tuple(np.round(G[i], 9))
        if key in seen:
            keep[i] = False
        else:
            seen.add(key)
    for i in np.flatnonzero(keep):
        others = keep.copy()
        others[i] = False
        rows = np.flatnonzero(others)
        d = G.shape[1]
        lb = np.full(d, -np.inf) if box is None else box[0] - 1.0
        ub = np.full(d, np.inf) if box is None else box[1] + 1.0
        # the relaxed cap g_i + 1 keeps the LP bounded while still detecting violation
        A = np.vstack([G[rows], G[i][None, :]])
        b = np.concatenate([g[rows], [g[i] + 1.0]])
        sol = solve_lp(LpProblem(G[i], A, (LE,) * A.shape[0], b, lb, ub, maximize=True))
        if sol.optimal and sol.objective <= g[i] + tol:
            keep[i] = False
    return G[keep], g[keep]


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Polyhedron {theta : H theta <= h} of forecasts at the varying buses."""

    H: np.ndarray
    h: np.ndarray
    _bbox: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        H = np.asarray(self.H, float)
        h = np.asarray(self.h, float).ravel()
        if H.ndim != 2 or H.shape[0] != h.size:
            raise ValueError("H must be (k, d) with k entries in h")
        if not (np.isfinite(H).all() and np.isfinite(h).all()):
            raise ValueError("parameter set must be finite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @classmethod
    def box(cls, lo, hi) -> "ParameterSet":
        lo, hi = np.asarray(lo, float).ravel(), np.asarray(hi, float).ravel()
        if lo.size != hi.size or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lo <= hi")
        d = lo.size
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box via 2d LPs; raises if the set is empty or unbounded."""
        if self._bbox is not None:
            return self._bbox
        d = self.dim
        lo, hi = np.zeros(d), np.zeros(d)
        for k in range(d):
            for sign, out in ((1.0, hi), (-1.0, lo)):
                c = np.zeros(d)
                c[k] = 1.0
                sol = solve_lp(LpProblem(c, self.H, (LE,) * self.H.shape[0], self.h,
                                         np.full(d, -np.inf), np.full(d, np.inf), maximize=sign > 0))
                if sol.status is Status.INFEASIBLE:
                    raise ValueError("parameter set is empty")
                if sol.status is not Status.OPTIMAL:
                    raise ValueError("parameter set is unbounded")
                out[k] = sol.objective
        object.__setattr__(self, "_bbox", (lo, hi))
        return lo, hi

    def scale(self) -> float:
        if self.dim == 0:
            return 1.0
        lo, hi = self.bbox()
        span = float(np.max(hi - lo))
        return span if span > 0 else max(1.0, float(np.abs(hi).max()))

    def contains(self, theta, tol: float = 0.0) -> bool:
        return bool(np.all(self.H @ theta <= self.h + tol))

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSet":
        H = np.asarray(d["H"], float)
        if H.size == 0:
            H = H.reshape(len(d["h"]), -1)
        return cls(H, np.asarray(d["h"], float))


# ---------------------------------------------------------------------------
# Parametric LP
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParametricLp:
    """Screening LP of one (line, direction) with the forecast at `varying` buses as parameter."""

    template: UcTemplate
    line: int
    direction: str
    varying: np.ndarray  # bus indices
    base: np.ndarray  # forecast supplying the fixed buses
    ps: ParameterSet

    @property
    def dim(self) -> int:
        return int(self.varying.size)

    def forecast(self, theta) -> np.ndarray:
        fc = self.base.copy()
        fc[self.varying] = theta
        return fc

    def lp_at(self, theta) -> LpProblem:
        return bound_lp(self.template, self.line, self.direction, self.forecast(theta))

    def value_offset(self) -> tuple[np.ndarray, float]:
        """Flow = LP objective + e @ theta + e0."""
        load = self.template.flow_load[self.template.position(self.line)]
        fixed = self.base.copy()
        fixed[self.varying] = 0.0
        return load[self.varying].copy(), float(load @ fixed)

    def canonical(self):
        """Rows as ``A y <= b + F theta`` (equalities split, >= negated) with objective vector."""
        lp0 = self.lp_at(np.zeros(self.dim))
        tpl = self.template
        pos = tpl.position(self.line)
        row = tpl.limit_rows[pos, 0 if self.direction == UPPER else 1]
        rows = [k for k in range(tpl.A.shape[0]) if k != row]
        Fall = tpl.B[rows][:, self.varying]
        A, b, F = [], [], []
        for r, k in enumerate(rows):
            s = tpl.senses[k]
            if s in (LE, EQ):
                A.append(lp0.A[r]); b.append(lp0.b[r]); F.append(Fall[r])
            if s in (GE, EQ):
                A.append(-lp0.A[r]); b.append(-lp0.b[r]); F.append(-Fall[r])
        return np.array(A), np.array(b), np.array(F).reshape(len(A), self.dim)

    def direct_value(self, theta) -> float | None:
        sol = solve_lp(self.lp_at(theta))
        if not sol.optimal:
            return None
        e, e0 = self.value_offset()
        return float(sol.objective + e @ np.asarray(theta, float) + e0)


def build_parametric(tpl: UcTemplate, line: int, direction: str, varying_buses, base_fc,
                     ps: ParameterSet, net: Network) -> ParametricLp:
    varying = np.array([net.bus_index(b) for b in varying_buses], dtype=int)
    if len(set(varying.tolist())) != varying.size:
        raise ValueError("varying buses must be distinct")
    if ps.dim != varying.size:
        raise ValueError("parameter set dimension must match the number of varying buses")
    base = validate_forecast(net, base_fc).copy()
    return ParametricLp(tpl, line, direction, varying, base, ps)


def generic_parametric(c, A, senses, b, F, lb, ub, ps: ParameterSet, maximize: bool = False) -> ParametricLp:
    """Parametric LP ``opt c'y  s.t.  A y (sense) b + F theta`` outside the UC setting."""
    A = np.asarray(A, float)
    F = np.asarray(F, float).reshape(A.shape[0], ps.dim)
    c = np.asarray(c, float)
    tpl = UcTemplate(A, tuple(senses), np.asarray(b, float), F, np.asarray(lb, float), np.asarray(ub, float),
                     c, (), {}, (0,), c[None, :], np.zeros((1, ps.dim)), np.array([math.inf]),
                     np.array([[-1, -1]]))
    direction = UPPER if maximize else DIRECTIONS[1]
    return ParametricLp(tpl, 0, direction, np.arange(ps.dim), np.zeros(ps.dim), ps)


# ---------------------------------------------------------------------------
# Regions and policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CriticalRegion:
    G: np.ndarray
    g: np.ndarray
    a_hat: np.ndarray
    b_hat: float
    active_set: tuple
    center: np.ndarray | None = None
    radius: float = math.nan

    def contains(self, theta, tol: float = MEMBER_TOL) -> bool:
        return bool(np.all(self.G @ theta <= self.g + tol))

    def value(self, theta) -> float:
        return float(self.a_hat @ theta + self.b_hat)

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "g": self.g.tolist(), "a_hat": self.a_hat.tolist(),
                "b_hat": self.b_hat, "active_set": list(self.active_set)}

    @classmethod
    def from_dict(cls, d: dict, dim: int) -> "CriticalRegion":
        G = np.asarray(d["G"], float).reshape(-1, dim)
        return cls(G, np.asarray(d["g"], float), np.asarray(d["a_hat"], float).reshape(dim),
                   float(d["b_hat"]), tuple(d["active_set"]))


@dataclass(eq=False)
class AffinePolicy:
    line: int
    direction: str
    varying: np.ndarray
    base: np.ndarray
    regions: list
    status: str = COMPLETE
    uncovered: list = field(default_factory=list)  # points where degeneracy persisted
    infeasible: list = field(default_factory=list)  # points where the LP had no solution
    tol: float = MEMBER_TOL
    _stack: tuple | None = field(default=None, repr=False)

    def _stacked(self):
        if self._stack is None:
            d = self.varying.size
            if self.regions:
                G = np.vstack([r.G for r in self.regions]) if d else np.zeros((0, 0))
                g = np.concatenate([r.g for r in self.regions])
                owner = np.concatenate([np.full(r.g.size, k) for k, r in enumerate(self.regions)])
                A = np.array([r.a_hat for r in self.regions]).reshape(len(self.regions), d)
                b = np.array([r.b_hat for r in self.regions])
            else:
                G, g, owner, A, b = np.zeros((0, d)), np.zeros(0), np.zeros(0, int), np.zeros((0, d)), np.zeros(0)
            self._stack = (G, g, owner.astype(int), A, b)
        return self._stack

    def locate(self, theta) -> int | None:
        """Index of the first region containing theta, or None."""
        G, g, owner, _, _ = self._stacked()
        n = len(self.regions)
        if n == 0:
            return None
        if G.shape[0] == 0:
            return 0
        bad = np.zeros(n, dtype=bool)
        viol = G @ theta > g + self.tol
        bad[owner[viol]] = True
        hits = np.flatnonzero(~bad)
        return int(hits[0]) if hits.size else None

    def memberships(self, theta) -> int:
        return sum(r.contains(theta, self.tol) for r in self.regions)

    def value_at(self, theta) -> float | None:
        k = self.locate(np.asarray(theta, float))
        if k is None:
            return None
        _, _, _, A, b = self._stacked()
        return float(A[k] @ theta + b[k])

    def to_dict(self) -> dict:
        return {"line": self.line, "direction": self.direction, "status": self.status,
                "regions": [r.to_dict() for r in self.regions],
                "uncovered": [np.asarray(p).tolist() for p in self.uncovered],
                "infeasible": [np.asarray(p).tolist() for p in self.infeasible]}


def evaluate_policy(pol: AffinePolicy, fc) -> float | None:
    """Extreme flow predicted by the policy at forecast `fc`; None means not covered.

    Buses outside the parameter set must sit at the base forecast the policy
    was built for.
    """
    fc = np.asarray(fc, float)
    fixed = np.ones(fc.size, dtype=bool)
    fixed[pol.varying] = False
    if not np.allclose(fc[fixed], pol.base[fixed], rtol=0.0, atol=1e-9 * max(1.0, np.abs(pol.base).max(initial=0))):
        return None
    return pol.value_at(fc[pol.varying])


class _Explorer:
    def __init__(self, plp: ParametricLp, region_cap: int, seed: int):
        self.plp = plp
        self.ps = plp.ps
        self.cap = region_cap
        self.scale = self.ps.scale()
        self.box = self.ps.bbox()
        self.eps = STEP_REL * self.scale
        self.tol = MEMBER_TOL * self.scale
        self.rng = np.random.default_rng(seed)
        self.e, self.e0 = plp.value_offset()
        Hn, hn, _ = _normalize(self.ps.H, self.ps.h)
        self.H, self.h = Hn, hn
        self.regions: list[CriticalRegion] = []
        self.uncovered: list = []
        self.infeasible: list = []
        self.queue: deque = deque()
        self.overflow = False
        tpl = plp.template
        self.Fb = tpl.B[:, plp.varying]

    def find(self, theta) -> int | None:
        for k, r in enumerate(self.regions):
            if r.contains(theta, self.tol):
                return k
        return None

    def region_at(self, theta):
        """Critical region of the optimal basis at theta; None if lower-dimensional."""
        plp = self.plp
        lp = plp.lp_at(theta)
        sol = solve_lp(lp)
        if sol.status is Status.INFEASIBLE:
            return "infeasible"
        if not sol.optimal:
            return None
        sf = standard_form(lp)
        ncol = sf.M.shape[1]
        basis = np.asarray(sol.basis, dtype=int)
        if np.any(basis >= ncol):
            return None
        pos = plp.template.position(plp.line)
        row = plp.template.limit_rows[pos, 0 if plp.direction == UPPER else 1]
        rows = np.array([k for k in range(plp.template.A.shape[0]) if k != row], dtype=int)
        F = self.Fb[rows]
        nonbasic = np.setdiff1d(np.arange(ncol), basis)
        zN = sol.values[nonbasic]
        Bm = sf.M[:, basis]
        try:
            binv_F = np.linalg.solve(Bm, F)
            p = np.linalg.solve(Bm, sf.b - F @ theta - sf.M[:, nonbasic] @ zN)
        except np.linalg.LinAlgError:
            return None
        # z_B(t) = p + Q t  with  Q = B^-1 F
        Q = binv_F
        lbB, ubB = sf.lb[basis], sf.ub[basis]
        Gs, gs = [], []
        up = np.isfinite(ubB)
        Gs.append(Q[up]); gs.append(ubB[up] - p[up])
        dn = np.isfinite(lbB)
        Gs.append(-Q[dn]); gs.append(p[dn] - lbB[dn])
        Gs.append(self.ps.H); gs.append(self.ps.h)
        G = np.vstack(Gs)
        g = np.concatenate(gs)
        G, g, ok = _normalize(G, g)
        if not ok:
            return None
        G, g = remove_redundant(G, g, self.box, tol=1e-9 * self.scale)
        cheb = chebyshev(G, g, rmax=self.scale)
        if cheb is None or cheb[1] <= 1e-9 * self.scale:
            return None
        # value law
        n = lp.n
        cz = np.zeros(ncol)
        cz[:n] = lp.c
        a_hat = cz[basis] @ Q + self.e
        b_hat = float(cz[basis] @ p + cz[nonbasic] @ zN + self.e0)
        active = _active_from_basis(lp, sf, basis, nonbasic, zN)
        return CriticalRegion(G, g, a_hat, b_hat, active, cheb[0], cheb[1])

    def discover(self, theta):
        """Region index covering theta (new or existing), 'infeasible', or None if uncovered."""
        k = self.find(theta)
        if k is not None:
            return k
        point = np.asarray(theta, float)
        for attempt in range(RETRIES + 1):
            res = self.region_at(point)
            if res == "infeasible":
                self.infeasible.append(point)
                return "infeasible"
            if isinstance(res, CriticalRegion):
                idx = self._add(res)
                if idx is None:
                    return None
                excess = self.regions[idx].G @ theta - self.regions[idx].g
                if np.all(excess <= self.tol):
                    return idx
                # the solver's basis is optimal only within its feasibility tolerance;
                # push across the violated facets and solve again
                out = excess > self.tol
                push = self.regions[idx].G[out].sum(axis=0)
                push /= max(np.linalg.norm(push), 1e-300)
                cand = np.asarray(theta, float) + (2 * excess[out].max() + self.eps * (attempt + 1)) * push
                if self.ps.contains(cand, self.tol):
                    point = cand
                    continue
            jit = self.rng.standard_normal(point.size)
            jit *= JITTER_REL * self.scale * (attempt + 1) / max(np.linalg.norm(jit), 1e-300)
            cand = np.asarray(theta, float) + jit
            if self.ps.contains(cand, self.tol):
                point = cand
        self.uncovered.append(np.asarray(theta, float))
        return None

    def _add(self, reg: CriticalRegion) -> int | None:
        """Index of `reg`, appending it unless the same region is already known."""
        for k, r in enumerate(self.regions):
            if (r.active_set == reg.active_set and r.G.shape == reg.G.shape
                    and np.allclose(r.G, reg.G) and np.allclose(r.g, reg.g)):
                return k
        if len(self.regions) >= self.cap:
            self.overflow = True
            return None
        self.regions.append(reg)
        idx = len(self.regions) - 1
        for row in range(reg.G.shape[0]):
            self.queue.append((idx, row))
        return idx

    def cross_facet(self, idx: int, row: int):
        r = self.regions[idx]
        a, b = r.G[row], r.g[row]
        others = np.delete(np.arange(r.G.shape[0]), row)
        pieces = [(np.zeros((0, r.G.shape[1])), np.zeros(0))]
        budget = 200
        margin = 1e-7 * self.scale
        while pieces and budget > 0 and not self.overflow:
            budget -= 1
            PG, Pg = pieces.pop()
            G = np.vstack([r.G[others], PG])
            g = np.concatenate([r.g[others], Pg])
            cheb = chebyshev(G, g, eq=(a, b), rmax=self.scale)
            if cheb is None or cheb[1] <= 1e-7 * self.scale:
                continue
            step = cheb[0] + self.eps * a
            if not self.ps.contains(step, self.tol):
                continue  # facet on the parameter-set boundary
            hit = self.discover(step)
            if not isinstance(hit, int):
                continue
            nb = self.regions[hit]
            # split what is left of the piece into disjoint parts beyond each neighbour facet
            accG, accg = PG, Pg
            for j in range(nb.G.shape[0]):
                if nb.G[j] @ a < -1.0 + 1e-9:
                    continue  # the shared hyperplane itself
                pieces.append((np.vstack([accG, -nb.G[j][None, :]]), np.concatenate([accg, [-nb.g[j] - margin]])))
                accG = np.vstack([accG, nb.G[j][None, :]])
                accg = np.concatenate([accg, [nb.g[j]]])

    def run(self) -> AffinePolicy:
        plp = self.plp
        cheb = chebyshev(self.H, self.h, rmax=self.scale)
        if cheb is None:
            raise ValueError("parameter set is empty")
        self.discover(cheb[0])
        while self.queue and not self.overflow:
            idx, row = self.queue.popleft()
            self.cross_facet(idx, row)
        status = OVERFLOW if self.overflow else COMPLETE
        return AffinePolicy(plp.line, plp.direction, plp.varying, plp.base, self.regions, status,
                            self.uncovered, self.infeasible)


def _active_from_basis(lp, sf, basis, nonbasic, zN) -> tuple:
    """Constraint indices (lp.active_set numbering) held tight by the nonbasic columns."""
    m, n = lp.m, lp.n
    active = [k for k in range(m) if sf.slack_of_row[k] < 0]
    row_of_slack = {int(s): k for k, s in enumerate(sf.slack_of_row) if s >= 0}
    for col, val in zip(nonbasic, zN):
        col = int(col)
        if col < n:
            if np.isfinite(sf.lb[col]) and val == sf.lb[col]:
                active.append(m + col)
            elif np.isfinite(sf.ub[col]) and val == sf.ub[col]:
                active.append(m + n + col)
        else:
            active.append(row_of_slack[col])
    return tuple(sorted(active))


def enumerate_regions(plp: ParametricLp, region_cap: int = REGION_CAP, seed: int = 0) -> AffinePolicy:
    """Explore the parameter set region by region from its Chebyshev center."""
    if plp.dim == 0:
        sol = solve_lp(plp.lp_at(np.zeros(0)))
        if not sol.optimal:
            return AffinePolicy(plp.line, plp.direction, plp.varying, plp.base, [], COMPLETE,
                                infeasible=[np.zeros(0)] if sol.status is Status.INFEASIBLE else [],
                                uncovered=[] if sol.status is Status.INFEASIBLE else [np.zeros(0)])
        e, e0 = plp.value_offset()
        reg = CriticalRegion(np.zeros((0, 0)), np.zeros(0), np.zeros(0), float(sol.objective + e0),
                             sol.active_set, np.zeros(0), math.inf)
        return AffinePolicy(plp.line, plp.direction, plp.varying, plp.base, [reg])
    return _Explorer(plp, region_cap, seed).run()


# ---------------------------------------------------------------------------
# Policy sets, hybrid screening, storage
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PolicySet:
    method: str
    uncertainty: object
    with_recourse: bool
    varying_buses: tuple
    base: np.ndarray
    ps: ParameterSet
    policies: dict  # (line, direction) -> AffinePolicy
    limits: dict = field(default_factory=dict)  # (line, direction) -> limit judged against

    @property
    def partial(self) -> bool:
        return any(p.status == OVERFLOW for p in self.policies.values())

    @property
    def n_regions(self) -> int:
        return sum(len(p.regions) for p in self.policies.values())

    def to_json(self) -> str:
        unc = self.uncertainty.to_dict() if self.uncertainty is not None else None
        doc = {
            "schema": SCHEMA,
            "method": self.method,
            "uncertainty": unc,
            "with_recourse": self.with_recourse,
            "varying_buses": list(self.varying_buses),
            "base_forecast": self.base.tolist(),
            "parameter_set": self.ps.to_dict(),
            "partial": self.partial,
            "policies": [{**pol.to_dict(), "limit": _enc(self.limits.get(key, math.inf)),
                          "method": self.method, "varying_buses": list(self.varying_buses),
                          "parameter_set": self.ps.to_dict()}
                         for key, pol in sorted(self.policies.items(), key=lambda kv: (kv[0][0], DIRECTIONS.index(kv[0][1])))],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, net: Network) -> "PolicySet":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported policy store schema {doc.get('schema')!r}")
        varying_buses = tuple(doc["varying_buses"])
        varying = np.array([net.bus_index(b) for b in varying_buses], dtype=int)
        base = np.asarray(doc["base_forecast"], float)
        ps = ParameterSet.from_dict(doc["parameter_set"])
        d = varying.size
        policies, limits = {}, {}
        for p in doc["policies"]:
            key = (int(p["line"]), p["direction"])
            regions = [CriticalRegion.from_dict(r, d) for r in p["regions"]]
            policies[key] = AffinePolicy(key[0], key[1], varying, base, regions, p["status"],
                                         [np.asarray(u, float) for u in p["uncovered"]],
                                         [np.asarray(u, float) for u in p["infeasible"]])
            limits[key] = float(p["limit"])
        return cls(doc["method"], uncertainty_from_dict(doc["uncertainty"]), bool(doc["with_recourse"]),
                   varying_buses, base, ps, policies, limits)


def _enc(v):
    return v if math.isfinite(v) else str(v)


def build_policies(net: Network, ptdf: PtdfMatrix, method: str, unc, varying_buses, base_fc,
                   ps: ParameterSet, with_recourse: bool = False, targets=None, region_cap: int = REGION_CAP,
                   threads: int | None = None, template: UcTemplate | None = None) -> PolicySet:
    """One affine policy per screened (line, direction) bound with a finite limit."""
    tpl = template or screening_template(net, ptdf, method, unc, with_recourse, commitment=PROJECTED)
    base = validate_forecast(net, base_fc)
    ps.bbox()
    if targets is None:
        targets = [(j, d) for j in tpl.lines for d in DIRECTIONS]
    structural = set(getattr(tpl, "structural", ()))
    targets = [(j, d) for j, d in targets
               if math.isfinite(tpl.limit[tpl.position(j)]) and j not in structural]

    def one(jd):
        plp = build_parametric(tpl, jd[0], jd[1], varying_buses, base, ps, net)
        return enumerate_regions(plp, region_cap)

    pols = pmap(one, targets, threads)
    policies = dict(zip(targets, pols))
    limits = {jd: float(tpl.limit[tpl.position(jd[0])]) for jd in targets}
    return PolicySet(method, unc, with_recourse, tuple(int(b) for b in varying_buses), base.copy(), ps,
                     policies, limits)


def hybrid_screen(policies: PolicySet, net: Network, ptdf: PtdfMatrix, fc, method: str | None = None,
                  unc=None, fallback: bool = True, threads: int | None = None) -> ScreeningResult:
    """Screen with the stored policies, solving the direct LP wherever a query is not covered.

    With ``fallback=False`` uncovered bounds are reported as NotCovered.
    """
    if method is not None and method != policies.method:
        raise ValueError(f"policies were built for method {policies.method!r}, not {method!r}")
    unc = policies.uncertainty if unc is None else unc
    fc = validate_forecast(net, fc)
    tag = {"det": "S1", "cc": "S2", "ro": "S3"}[policies.method]
    lazy: dict = {}

    def direct_template():
        if "tpl" not in lazy:
            lazy["tpl"] = screening_template(net, ptdf, policies.method, unc, policies.with_recourse)
        return lazy["tpl"]

    def one(jd):
        j, d = jd
        pol = policies.policies.get(jd)
        if pol is not None:
            val = evaluate_policy(pol, fc)
            if val is not None:
                limit = policies.limits[jd]
                m = margin_of(d, val, limit)
                return BoundResult(j, d, classify(m, limit), val, m, tag, SRC_POLICY)
        else:
            tpl = direct_template()
            limit = float(tpl.limit[tpl.position(j)])
            if math.isinf(limit) or j in getattr(tpl, "structural", ()):
                return solve_bound(tpl, j, d, fc, tag)
        if not fallback:
            return BoundResult(j, d, NOT_COVERED, math.nan, math.nan, tag, SRC_NONE)
        return solve_bound(direct_template(), j, d, fc, tag)

    targets = [(j, d) for j in range(net.n_line) for d in DIRECTIONS]
    bounds = pmap(one, targets, threads)
    return ScreeningResult(tag, bounds)
