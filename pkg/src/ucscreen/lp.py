"""Dense bounded-variable primal simplex.

Problems are ``min/max c'x  s.t.  A_k x (<=|==|>=) b_k,  lb <= x <= ub``.
The solver works on a full tableau with one slack column per inequality row
and phase-1 artificials, Dantzig pricing with a switch to Bland's rule once
progress stalls, and periodic refactorization from the original data.

Besides the primal point the solution carries row duals, reduced costs, the
tolerance-based active set and the final basis (indices into the standard-form
columns returned by :func:`standard_form`); the parametric layer rebuilds
critical regions from that basis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

LE, EQ, GE = "<=", "==", ">="
_SENSES = (LE, EQ, GE)

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
ACTIVE_TOL = 1e-6
PIVOT_TOL = 1e-9
STALL_LIMIT = 50
REFACTOR_EVERY = 100


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    STALLED = "stalled"


class LpError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        if n == 0:
            raise ValueError("LP needs at least one variable")
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).ravel()
        senses = tuple(self.senses)
        if A.shape[0] != b.size or len(senses) != b.size:
            raise ValueError("constraint matrix, senses and rhs disagree in length")
        if any(s not in _SENSES for s in senses):
            raise ValueError(f"senses must be one of {_SENSES}")
        lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if not (np.isfinite(c).all() and np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("LP coefficients must be finite")
        if np.any(lb > ub):
            raise ValueError("variable lower bound exceeds upper bound")
        for name, val in (("c", c), ("A", A), ("senses", senses), ("b", b), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def with_bounds(self, lb=None, ub=None) -> "LpProblem":
        return LpProblem(self.c, self.A, self.senses, self.b,
                         self.lb if lb is None else lb, self.ub if ub is None else ub, self.maximize)


@dataclass(eq=False)
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None  # d objective / d b_k, in the problem's own sense
    reduced_costs: np.ndarray | None = None
    active_set: tuple = ()
    basis: tuple = ()
    values: np.ndarray | None = None  # standard-form column values
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True, eq=False)
class StandardForm:
    """``M z = b`` with bounds on z; columns are the n structurals then slacks."""

    M: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray  # minimisation costs
    slack_of_row: np.ndarray  # column index of each row's slack, -1 for equalities


def standard_form(p: LpProblem) -> StandardForm:
    m, n = p.m, p.n
    senses = np.asarray(p.senses)
    ineq = np.flatnonzero(senses != EQ)
    M = np.zeros((m, n + ineq.size))
    M[:, :n] = p.A
    slack_of_row = np.full(m, -1, dtype=int)
    slack_of_row[ineq] = n + np.arange(ineq.size)
    M[ineq, n + np.arange(ineq.size)] = 1.0
    lb = np.concatenate([p.lb, np.where(senses[ineq] == LE, 0.0, -np.inf)])
    ub = np.concatenate([p.ub, np.where(senses[ineq] == LE, np.inf, 0.0)])
    c = np.concatenate([-p.c if p.maximize else p.c, np.zeros(ineq.size)])
    return StandardForm(M, p.b.copy(), lb, ub, c, slack_of_row)


# nonbasic states
_BASIC, _AT_LB, _AT_UB, _FREE = 0, 1, 2, 3


class _Simplex:
    def __init__(self, sf: StandardForm, max_iter: int | None = None):
        self.sf = sf
        m, ncol = sf.M.shape
        self.m, self.ncol = m, ncol
        self.max_iter = max_iter or 50 * (m + ncol) + 1000
        self.iterations = 0

        lb, ub = sf.lb, sf.ub
        z = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        state = np.where(np.isfinite(lb), _AT_LB, np.where(np.isfinite(ub), _AT_UB, _FREE))
        res = sf.b - sf.M @ z

        basis = np.empty(m, dtype=int)
        art_cols = []
        art_sign = []
        for r in range(m):
            s = sf.slack_of_row[r]
            if s >= 0:
                val = z[s] + res[r]
                if lb[s] - FEAS_TOL <= val <= ub[s] + FEAS_TOL:
                    basis[r] = s
                    continue
            art_cols.append(r)
            art_sign.append(1.0 if res[r] >= 0 else -1.0)
        n_art = len(art_cols)
        self.n_art = n_art
        Mfull = np.zeros((m, ncol + n_art))
        Mfull[:, :ncol] = sf.M
        for k, (r, sg) in enumerate(zip(art_cols, art_sign)):
            Mfull[r, ncol + k] = sg
            basis[r] = ncol + k
        self.M = Mfull
        self.lb = np.concatenate([lb, np.zeros(n_art)])
        self.ub = np.concatenate([ub, np.full(n_art, np.inf)])
        self.z = np.concatenate([z, np.zeros(n_art)])
        self.state = np.concatenate([state, np.full(n_art, _AT_LB)])
        self.basis = basis
        self.state[basis] = _BASIC
        self.refactor()

    # -- linear algebra -------------------------------------------------
    def refactor(self):
        B = self.M[:, self.basis]
        nb = self.state != _BASIC
        rhs = self.sf.b - self.M[:, nb] @ self.z[nb]
        try:
            self.T = np.linalg.solve(B, self.M)
            self.z[self.basis] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            raise LpError("singular basis during refactorization") from None
        self._since_refactor = 0

    def _reduced(self, cost):
        return cost - cost[self.basis] @ self.T

    def pivot(self, r: int, q: int):
        T = self.T
        row = T[r] / T[r, q]
        col = T[:, q].copy()
        T -= np.outer(col, row)
        T[r] = row
        self.basis[r] = q
        self._since_refactor += 1

    # -- main loop ------------------------------------------------------
    def run(self, cost: np.ndarray) -> str:
        lb, ub = self.lb, self.ub
        movable = lb < ub
        d = self._reduced(cost)
        bland = False
        stall = 0
        best = cost @ self.z
        while True:
            if self.iterations >= self.max_iter:
                return "stalled"
            st = self.state
            can_inc = ((st == _AT_LB) | (st == _FREE)) & movable
            can_dec = ((st == _AT_UB) | (st == _FREE)) & movable
            score = np.where(can_inc & (d < -OPT_TOL), -d, 0.0)
            score = np.where(can_dec & (d > OPT_TOL), np.maximum(score, d), score)
            cand = np.flatnonzero(score > 0)
            if cand.size == 0:
                return "optimal"
            q = int(cand[0]) if bland else int(cand[np.argmax(score[cand])])
            direction = 1.0 if (d[q] < 0 and can_inc[q]) else -1.0

            col = self.T[:, q]
            delta = -direction * col  # change of basic values per unit step
            zb = self.z[self.basis]
            lbb, ubb = lb[self.basis], ub[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios[dec] = (zb[dec] - lbb[dec]) / -delta[dec]
                ratios[inc] = (ubb[inc] - zb[inc]) / delta[inc]
            ratios = np.maximum(ratios, 0.0)
            t_flip = ub[q] - lb[q]
            t_row = ratios.min() if self.m else np.inf
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return "unbounded"
            self.iterations += 1
            if t_flip <= t_row:
                self.z[self.basis] = zb + delta * t_flip
                self.z[q] = ub[q] if direction > 0 else lb[q]
                self.state[q] = _AT_UB if direction > 0 else _AT_LB
            else:
                ties = np.flatnonzero(ratios <= t_row + 1e-12 * max(1.0, t_row))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                t = ratios[r]
                leaving = self.basis[r]
                self.z[self.basis] = zb + delta * t
                self.z[leaving] = lb[leaving] if delta[r] < 0 else ub[leaving]
                self.state[leaving] = _AT_LB if delta[r] < 0 else _AT_UB
                self.z[q] = self.z[q] + direction * t
                self.state[q] = _BASIC
                self.pivot(r, q)
                if self._since_refactor >= REFACTOR_EVERY:
                    self.refactor()
                d = self._reduced(cost)
            obj = cost @ self.z
            if obj < best - 1e-12 * max(1.0, abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall >= STALL_LIMIT:
                    bland = True

    def drive_out_artificials(self):
        ncol = self.ncol
        for r in range(self.m):
            if self.basis[r] < ncol:
                continue
            row = self.T[r, :ncol]
            nb = np.flatnonzero((self.state[:ncol] != _BASIC) & (np.abs(row) > 1e-7))
            if nb.size == 0:
                continue  # redundant row; artificial stays basic at zero
            q = int(nb[np.argmax(np.abs(row[nb]))])
            leaving = self.basis[r]
            self.z[leaving] = 0.0
            self.state[leaving] = _AT_LB
            self.state[q] = _BASIC
            self.pivot(r, q)
        self.refactor()


def solve_lp(p: LpProblem, *, active_tol: float = ACTIVE_TOL, max_iter: int | None = None) -> LpSolution:
    """Solve an LP; status is optimal, infeasible, unbounded or stalled."""
    sf = standard_form(p)
    sx = _Simplex(sf, max_iter=max_iter)
    ncol = sx.ncol
    if sx.n_art:
        phase1 = np.concatenate([np.zeros(ncol), np.ones(sx.n_art)])
        outcome = sx.run(phase1)
        if outcome == "stalled":
            return LpSolution(Status.STALLED, iterations=sx.iterations)
        scale = max(1.0, float(np.abs(sf.b).max(initial=0.0)))
        if sx.z[ncol:].sum() > FEAS_TOL * scale:
            return LpSolution(Status.INFEASIBLE, iterations=sx.iterations)
        sx.ub[ncol:] = 0.0
        sx.z[ncol:] = np.where(sx.state[ncol:] == _BASIC, sx.z[ncol:], 0.0)
        sx.drive_out_artificials()
    cost = np.concatenate([sf.c, np.zeros(sx.n_art)])
    outcome = sx.run(cost)
    if outcome == "stalled":
        return LpSolution(Status.STALLED, iterations=sx.iterations)
    if outcome == "unbounded":
        return LpSolution(Status.UNBOUNDED, iterations=sx.iterations)
    sx.refactor()

    n = p.n
    x = sx.z[:n].copy()
    B = sx.M[:, sx.basis]
    y = np.linalg.solve(B.T, cost[sx.basis])
    red = sf.c[:n] - p.A.T @ y
    sign = -1.0 if p.maximize else 1.0
    sol = LpSolution(
        status=Status.OPTIMAL,
        x=x,
        objective=float(p.c @ x),
        duals=sign * y,
        reduced_costs=sign * red,
        basis=tuple(int(k) for k in sx.basis),
        values=sx.z[:ncol].copy(),
        iterations=sx.iterations,
    )
    sol.active_set = active_set(p, sol, active_tol)
    return sol


def active_set(p: LpProblem, sol: LpSolution, tol: float = ACTIVE_TOL) -> tuple:
    """Indices of tight constraints.

    Rows are numbered ``0..m-1``; variable bounds follow as ``m + j`` for the
    lower bound of variable j and ``m + n + j`` for its upper bound.
    """
    if sol.x is None:
        raise ValueError("active set needs an optimal solution")
    x = sol.x
    m, n = p.m, p.n
    rows = np.flatnonzero(np.abs(p.A @ x - p.b) <= tol)
    lo = np.flatnonzero(np.isfinite(p.lb) & (np.abs(x - p.lb) <= tol))
    hi = np.flatnonzero(np.isfinite(p.ub) & (np.abs(x - p.ub) <= tol))
    return tuple(int(k) for k in np.concatenate([rows, m + lo, m + n + hi]))


def row_residuals(p: LpProblem, x: np.ndarray) -> np.ndarray:
    """Per-row violation (>= 0) of x against the LP's rows."""
    ax = p.A @ x
    s = np.asarray(p.senses)
    v = np.zeros(p.m)
    v = np.where(s == LE, np.maximum(ax - p.b, 0.0), v)
    v = np.where(s == GE, np.maximum(p.b - ax, 0.0), v)
    v = np.where(s == EQ, np.abs(ax - p.b), v)
    return v
