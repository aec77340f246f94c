"""Best-bound branch and bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LpError, LpProblem, Status, solve_lp

INT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MilpProblem:
    lp: LpProblem
    binaries: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.binaries)
        for i in idx:
            if not 0 <= i < self.lp.n:
                raise ValueError(f"binary index {i} out of range")
            if self.lp.lb[i] < 0 or self.lp.ub[i] > 1:
                raise ValueError(f"binary variable {i} has bounds outside [0, 1]")
        object.__setattr__(self, "binaries", idx)


@dataclass(eq=False)
class MilpSolution:
    status: str  # "optimal" | "infeasible" | "limit"
    x: np.ndarray | None = None
    objective: float = float("nan")
    nodes: int = 0
    wall_time: float = 0.0
    relaxation: float = float("nan")
    incumbent_trace: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _most_fractional(x: np.ndarray, binaries: np.ndarray) -> int | None:
    if binaries.size == 0:
        return None
    frac = np.abs(x[binaries] - np.round(x[binaries]))
    k = int(np.argmax(frac))  # first maximum, i.e. lowest index on ties
    if frac[k] <= INT_TOL:
        return None
    return int(binaries[k])


def solve_milp(p: MilpProblem, gap: float = 1e-6, node_limit: int = 100_000) -> MilpSolution:
    """Solve with best-bound node selection and most-fractional branching.

    Nodes are ordered by (bound, creation order) so the search is deterministic.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    start = time.perf_counter()
    lp = p.lp
    sense = -1.0 if lp.maximize else 1.0  # internal minimisation
    binaries = np.asarray(p.binaries, dtype=int)
    counter = itertools.count()
    nodes = 0

    def solve(lb, ub):
        nonlocal nodes
        nodes += 1
        sol = solve_lp(lp.with_bounds(lb, ub))
        if sol.status is Status.STALLED:
            raise LpError("LP relaxation stalled inside branch and bound")
        if sol.status is Status.UNBOUNDED:
            raise LpError("LP relaxation is unbounded")
        return sol

    root = solve(lp.lb, lp.ub)
    if not root.optimal:
        return MilpSolution("infeasible", nodes=nodes, wall_time=time.perf_counter() - start)
    relaxation = root.objective

    inc_x = None
    inc_val = np.inf  # internal (minimisation) value
    trace: list = []
    heap: list = []

    def consider(sol, lb, ub):
        nonlocal inc_x, inc_val
        val = sense * sol.objective
        if val >= inc_val - _abs_gap(inc_val, gap):
            return
        j = _most_fractional(sol.x, binaries)
        if j is None:
            inc_x, inc_val = sol.x.copy(), val
            trace.append(sense * val)
            return
        heapq.heappush(heap, (val, next(counter), lb, ub, j, sol))

    consider(root, lp.lb.copy(), lp.ub.copy())
    status = "optimal"
    while heap:
        val, _, lb, ub, j, sol = heap[0]
        if val >= inc_val - _abs_gap(inc_val, gap):
            break
        if nodes >= node_limit:
            status = "limit"
            break
        heapq.heappop(heap)
        for fix in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = fix
            child = solve(clb, cub)
            if child.optimal:
                consider(child, clb, cub)
    elapsed = time.perf_counter() - start
    if inc_x is None:
        return MilpSolution("infeasible" if status == "optimal" else "limit", nodes=nodes,
                            wall_time=elapsed, relaxation=relaxation)
    x = inc_x.copy()
    x[binaries] = np.round(x[binaries])
    return MilpSolution(status, x, sense * inc_val, nodes, elapsed, relaxation, trace)


def _abs_gap(incumbent: float, gap: float) -> float:
    if not np.isfinite(incumbent):
        return 0.0
    return gap * max(1.0, abs(incumbent))
