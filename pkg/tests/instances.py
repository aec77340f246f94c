"""Random instance generators shared by the unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from ucscreen.case_io import compute_ptdf
from ucscreen.cases import random_forecast, random_network
from ucscreen.lp import EQ, GE, LE, LpProblem
from ucscreen.milp import MilpProblem
from ucscreen.multi_area import angle_flows_of

TOY_LOAD = np.array([10.0, 30.0, 60.0, 20.0, 40.0, 50.0])


def random_bounded_lp(rng):
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 11))
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    x0 = rng.uniform(-3, 3, size=n)
    senses = tuple(rng.choice([LE, GE, EQ], p=[0.45, 0.45, 0.1]) for _ in range(m))
    slack = rng.uniform(0, 4, size=m)
    b = A @ x0 + np.where(np.array(senses) == LE, slack, np.where(np.array(senses) == GE, -slack, 0.0))
    if rng.random() < 0.2 and m:
        b[0] += 50 if senses[0] == GE else -50  # likely infeasible
    lb = x0 - rng.uniform(0.5, 5, size=n)
    ub = x0 + rng.uniform(0.5, 5, size=n)
    c = rng.integers(-4, 5, size=n).astype(float)
    return LpProblem(c, A, senses, b, lb, ub, maximize=bool(rng.random() < 0.5))


def random_uc_milp(rng):
    """Small UC-like MILP: commitment u, output x, demand balance, optional side rows."""
    k = int(rng.integers(1, 11))
    pmax = rng.uniform(10, 60, size=k)
    pmin = pmax * rng.uniform(0, 0.6, size=k)
    cost = rng.uniform(1, 30, size=k)
    fixed = rng.uniform(0, 50, size=k)
    demand = rng.uniform(0.2, 0.9) * pmax.sum()
    n = 2 * k
    rows, senses, b = [], [], []
    for i in range(k):
        r = np.zeros(n); r[k + i] = 1; r[i] = -pmax[i]
        rows.append(r); senses.append(LE); b.append(0.0)
        r = np.zeros(n); r[k + i] = 1; r[i] = -pmin[i]
        rows.append(r); senses.append(GE); b.append(0.0)
    r = np.zeros(n); r[k:] = 1
    rows.append(r); senses.append(EQ); b.append(demand)
    if rng.random() < 0.5:
        r = np.zeros(n); r[k:] = rng.uniform(-1, 1, size=k)
        rows.append(r); senses.append(LE); b.append(rng.uniform(0, 20))
    c = np.concatenate([fixed, cost])
    lp = LpProblem(c, np.array(rows), tuple(senses), np.array(b), np.zeros(n),
                   np.concatenate([np.ones(k), pmax]))
    return MilpProblem(lp, tuple(range(k)))


def small_instances(n, n_bus=(4, 6), seed0=0, limit_range=(25, 90)):
    for s in range(seed0, seed0 + n):
        net = random_network(int(np.random.default_rng(s).integers(n_bus[0], n_bus[1] + 1)), s,
                             limit_range=limit_range)
        yield s, net, compute_ptdf(net), random_forecast(net, s)


def toy_loads(n, seed=0):
    rng = np.random.default_rng(seed)
    return TOY_LOAD * rng.uniform(0.6, 1.4, size=(n, TOY_LOAD.size))


def binding_set(net, model, sol, tol=1e-6):
    flows = angle_flows_of(net, model, sol.x)
    out = set()
    for j, f in enumerate(flows):
        lim = net.branches[j].limit
        if f >= lim - tol:
            out.add((j, "upper"))
        if f <= -lim + tol:
            out.add((j, "lower"))
    return out
