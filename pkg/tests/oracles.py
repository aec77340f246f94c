"""Independent reference solvers used only by the tests.

Nothing here imports the package's LP, MILP or model-building code: problems
are rebuilt from raw network data and solved by brute force or by scipy.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_vertex_oracle(c, A, senses, b, lb, ub, maximize=False):
    """Optimum of a bounded LP by enumerating all basic solutions.

    Returns (status, value) with status in {"optimal", "infeasible"}.
    """
    c = np.asarray(c, float)
    n = c.size
    rows, rhs = [], []
    for a, s, v in zip(np.atleast_2d(A), senses, b):
        if s in ("<=", "=="):
            rows.append(a); rhs.append(v)
        if s in (">=", "=="):
            rows.append(-np.asarray(a)); rhs.append(-v)
    for j in range(n):
        if np.isfinite(lb[j]):
            e = np.zeros(n); e[j] = -1.0
            rows.append(e); rhs.append(-lb[j])
        if np.isfinite(ub[j]):
            e = np.zeros(n); e[j] = 1.0
            rows.append(e); rhs.append(ub[j])
    G = np.array(rows, float).reshape(-1, n)
    h = np.array(rhs, float)
    best = None
    combos = itertools.combinations(range(G.shape[0]), n)
    while True:
        chunk = np.array(list(itertools.islice(combos, 20000)), dtype=int).reshape(-1, n)
        if not chunk.size:
            break
        M = G[chunk]
        ok = np.abs(np.linalg.det(M)) >= 1e-10
        if not ok.any():
            continue
        X = np.linalg.solve(M[ok], h[chunk[ok]][..., None])[..., 0]
        feas = np.all(X @ G.T <= h + 1e-7 * np.maximum(1, np.abs(h)), axis=1)
        if feas.any():
            vals = X[feas] @ c
            v = vals.max() if maximize else vals.min()
            if best is None or (v > best if maximize else v < best):
                best = v
    return ("infeasible", None) if best is None else ("optimal", float(best))


def scipy_lp(c, A, senses, b, lb, ub, maximize=False):
    A = np.atleast_2d(np.asarray(A, float))
    senses = list(senses)
    ub_rows = [i for i, s in enumerate(senses) if s != "=="]
    eq_rows = [i for i, s in enumerate(senses) if s == "=="]
    A_ub = np.array([A[i] if senses[i] == "<=" else -A[i] for i in ub_rows]).reshape(-1, A.shape[1])
    b_ub = np.array([b[i] if senses[i] == "<=" else -b[i] for i in ub_rows])
    res = linprog(-np.asarray(c) if maximize else c,
                  A_ub=A_ub if len(ub_rows) else None, b_ub=b_ub if len(ub_rows) else None,
                  A_eq=A[eq_rows] if eq_rows else None, b_eq=np.asarray(b)[eq_rows] if eq_rows else None,
                  bounds=list(zip([None if not np.isfinite(v) else v for v in lb],
                                  [None if not np.isfinite(v) else v for v in ub])),
                  method="highs")
    if res.status == 2:
        return "infeasible", None
    if res.status == 3:
        return "unbounded", None
    assert res.status == 0, res.message
    return "optimal", float(-res.fun if maximize else res.fun)


def milp_enumeration(c, A, senses, b, lb, ub, binaries):
    """Minimum over all 0/1 assignments of the binaries, each an LP solved by scipy."""
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        l2, u2 = np.array(lb, float), np.array(ub, float)
        l2[list(binaries)] = bits
        u2[list(binaries)] = bits
        st, val = scipy_lp(c, A, senses, b, l2, u2)
        if st == "optimal" and (best is None or val < best):
            best = val
    return best


def ptdf_by_hand(net):
    """Sensitivities from the angle equations, column by column."""
    nb, nl = net.n_bus, net.n_line
    idx = {b: i for i, b in enumerate(net.buses)}
    Bbus = np.zeros((nb, nb))
    for br in net.branches:
        i, k = idx[br.from_bus], idx[br.to_bus]
        y = 1.0 / br.x
        Bbus[i, i] += y; Bbus[k, k] += y; Bbus[i, k] -= y; Bbus[k, i] -= y
    r = idx[net.reference_bus]
    out = np.zeros((nl, nb))
    for col in range(nb):
        if col == r:
            continue
        p = np.zeros(nb)
        p[col] = 1.0
        p[r] = -1.0
        keep = [i for i in range(nb) if i != r]
        th = np.zeros(nb)
        th[keep] = np.linalg.solve(Bbus[np.ix_(keep, keep)], p[keep])
        for j, br in enumerate(net.branches):
            out[j, col] = (th[idx[br.from_bus]] - th[idx[br.to_bus]]) / br.x
    return out


def uc_oracle(net, load, limits=None, keep=None):
    """Deterministic UC by commitment enumeration; flows from the hand PTDF.

    Returns (objective, x) or (None, None) when infeasible.
    """
    P = ptdf_by_hand(net)
    lim = np.array([br.limit for br in net.branches]) if limits is None else np.asarray(limits, float)
    gens = net.generators
    G = np.zeros((net.n_bus, len(gens)))
    for k, g in enumerate(gens):
        G[net.buses.index(g.bus), k] = 1.0
    load = np.asarray(load, float)
    best, best_x = None, None
    for u in itertools.product((0, 1), repeat=len(gens)):
        A, senses, b = [np.ones(len(gens))], ["=="], [load.sum()]
        PG = P @ G
        for j in range(net.n_line):
            if not np.isfinite(lim[j]):
                continue
            if keep is None or (j, "upper") in keep:
                A.append(PG[j]); senses.append("<="); b.append(lim[j] + P[j] @ load)
            if keep is None or (j, "lower") in keep:
                A.append(PG[j]); senses.append(">="); b.append(-lim[j] + P[j] @ load)
        lo = [ui * g.pmin for ui, g in zip(u, gens)]
        hi = [ui * g.pmax for ui, g in zip(u, gens)]
        c = [g.cost for g in gens]
        res = linprog(c, bounds=list(zip(lo, hi)), method="highs",
                      **_split(np.array(A), senses, np.array(b)))
        if res.status == 0 and (best is None or res.fun < best - 1e-9):
            best, best_x = float(res.fun), res.x
    return best, best_x


def _split(A, senses, b):
    ub = [i for i, s in enumerate(senses) if s != "=="]
    eq = [i for i, s in enumerate(senses) if s == "=="]
    out = {"A_eq": A[eq], "b_eq": b[eq]}
    if ub:
        out["A_ub"] = np.array([A[i] if senses[i] == "<=" else -A[i] for i in ub])
        out["b_ub"] = np.array([b[i] if senses[i] == "<=" else -b[i] for i in ub])
    return out


def screening_oracle(net, load, line, direction):
    """Extreme flow of one line over the relaxed deterministic UC region (scipy)."""
    P = ptdf_by_hand(net)
    lim = np.array([br.limit for br in net.branches])
    gens = net.generators
    ng = len(gens)
    G = np.zeros((net.n_bus, ng))
    for k, g in enumerate(gens):
        G[net.buses.index(g.bus), k] = 1.0
    PG = P @ G
    load = np.asarray(load, float)
    # variables [u, x]
    A, senses, b = [], [], []
    for i, g in enumerate(gens):
        row = np.zeros(2 * ng); row[ng + i] = 1; row[i] = -g.pmax
        A.append(row); senses.append("<="); b.append(0.0)
        row = np.zeros(2 * ng); row[ng + i] = 1; row[i] = -g.pmin
        A.append(row); senses.append(">="); b.append(0.0)
    row = np.zeros(2 * ng); row[ng:] = 1
    A.append(row); senses.append("=="); b.append(load.sum())
    for j in range(net.n_line):
        if not np.isfinite(lim[j]):
            continue
        row = np.zeros(2 * ng); row[ng:] = PG[j]
        if not (j == line and direction == "upper"):
            A.append(row); senses.append("<="); b.append(lim[j] + P[j] @ load)
        if not (j == line and direction == "lower"):
            A.append(row); senses.append(">="); b.append(-lim[j] + P[j] @ load)
    c = np.zeros(2 * ng)
    c[ng:] = PG[line]
    lb = [0.0] * ng + [min(0.0, g.pmin) for g in gens]
    ub = [1.0] * ng + [max(0.0, g.pmax) for g in gens]
    st, val = scipy_lp(c, np.array(A), senses, np.array(b), lb, ub, maximize=direction == "upper")
    if st != "optimal":
        return None
    return val - P[line] @ load


def _gen_matrix(net):
    G = np.zeros((net.n_bus, len(net.generators)))
    for k, g in enumerate(net.generators):
        G[net.buses.index(g.bus), k] = 1.0
    return G


def robust_screening_oracle(net, load, line, direction, uncertain, beta1, beta2):
    """Extreme flow over the relaxed no-recourse robust region.

    Variables [u, x, l_U]: dispatch x balances the realised demand, which varies in
    [beta1, beta2] times the forecast at the uncertain buses.
    """
    P = ptdf_by_hand(net)
    lim = np.array([br.limit for br in net.branches])
    gens = net.generators
    ng, K = len(gens), len(uncertain)
    U = [net.buses.index(b) for b in uncertain]
    load = np.asarray(load, float)
    fixed = load.copy()
    fixed[U] = 0.0
    PG = P @ _gen_matrix(net)
    n = 2 * ng + K
    A, senses, b = [], [], []
    for i, g in enumerate(gens):
        row = np.zeros(n); row[ng + i] = 1; row[i] = -g.pmax
        A.append(row); senses.append("<="); b.append(0.0)
        row = np.zeros(n); row[ng + i] = 1; row[i] = -g.pmin
        A.append(row); senses.append(">="); b.append(0.0)
    row = np.zeros(n); row[ng:2 * ng] = 1; row[2 * ng:] = -1
    A.append(row); senses.append("=="); b.append(fixed.sum())
    flow = np.zeros((net.n_line, n))
    flow[:, ng:2 * ng] = PG
    flow[:, 2 * ng:] = -P[:, U]
    const = -P @ fixed
    for j in range(net.n_line):
        if not np.isfinite(lim[j]):
            continue
        if not (j == line and direction == "upper"):
            A.append(flow[j]); senses.append("<="); b.append(lim[j] - const[j])
        if not (j == line and direction == "lower"):
            A.append(flow[j]); senses.append(">="); b.append(-lim[j] - const[j])
    lb = [0.0] * ng + [min(0.0, g.pmin) for g in gens] + [beta1 * load[k] for k in U]
    ub = [1.0] * ng + [max(0.0, g.pmax) for g in gens] + [beta2 * load[k] for k in U]
    st, val = scipy_lp(flow[line], np.array(A), senses, np.array(b), lb, ub, maximize=direction == "upper")
    return None if st != "optimal" else val + const[line]


def cc_screening_oracle(net, load, line, direction, sigma, eps_x, eps_f):
    """Extreme nominal flow over the relaxed chance-constrained region.

    Participation is equal over units with positive capacity; flow standard
    deviations use sum_i a_i^2 (s_i^2 + alpha_i^2 S^2). Variables [u, x, r].
    """
    from statistics import NormalDist

    P = ptdf_by_hand(net)
    gens = net.generators
    ng = len(gens)
    part = np.array([1.0 if g.pmax > 0 else 0.0 for g in gens])
    alpha = part / part.sum()
    var = np.full(net.n_bus, float(sigma) ** 2)
    S = np.sqrt(var.sum())
    bus_alpha = _gen_matrix(net) @ alpha
    sf = np.sqrt((P ** 2) @ (var + bus_alpha ** 2 * var.sum()))
    lim = np.array([br.limit for br in net.branches]) - NormalDist().inv_cdf(1 - eps_f) * sf
    rmin = alpha * NormalDist().inv_cdf(1 - eps_x) * S
    load = np.asarray(load, float)
    PG = P @ _gen_matrix(net)
    n = 3 * ng
    A, senses, b = [], [], []
    for i, g in enumerate(gens):
        row = np.zeros(n); row[ng + i] = 1; row[2 * ng + i] = 1; row[i] = -g.pmax
        A.append(row); senses.append("<="); b.append(0.0)
        row = np.zeros(n); row[ng + i] = 1; row[2 * ng + i] = -1; row[i] = -g.pmin
        A.append(row); senses.append(">="); b.append(0.0)
    row = np.zeros(n); row[ng:2 * ng] = 1
    A.append(row); senses.append("=="); b.append(load.sum())
    flow = np.zeros((net.n_line, n))
    flow[:, ng:2 * ng] = PG
    const = -P @ load
    for j in range(net.n_line):
        if not np.isfinite(lim[j]) or lim[j] < 0:
            continue
        if not (j == line and direction == "upper"):
            A.append(flow[j]); senses.append("<="); b.append(lim[j] - const[j])
        if not (j == line and direction == "lower"):
            A.append(flow[j]); senses.append(">="); b.append(-lim[j] - const[j])
    lb = [0.0] * ng + [min(0.0, g.pmin) for g in gens] + list(rmin)
    ub = [1.0] * ng + [max(0.0, g.pmax) for g in gens] + [np.inf] * ng
    st, val = scipy_lp(flow[line], np.array(A), senses, np.array(b), lb, ub, maximize=direction == "upper")
    return None if st != "optimal" else val + const[line], lim[line]
