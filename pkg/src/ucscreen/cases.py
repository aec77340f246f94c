"""Small built-in and randomly generated test systems."""

from __future__ import annotations

import numpy as np

from .case_io import Branch, Generator, Network, make_network


def triangle(limit: float = 1000.0, limits=None) -> Network:
    """Three buses, three equal-reactance lines, cheap unit at bus 1, dearer unit at bus 2."""
    lims = [limit] * 3 if limits is None else list(limits)
    branches = [Branch(1, 2, 0.1, lims[0]), Branch(2, 3, 0.1, lims[1]), Branch(1, 3, 0.1, lims[2])]
    gens = [Generator(1, 0.0, 200.0, 10.0), Generator(2, 0.0, 100.0, 20.0)]
    return make_network([1, 2, 3], branches, gens, reference_bus=3)


def two_bus(limit: float = 100.0) -> Network:
    return make_network([1, 2], [Branch(1, 2, 0.1, limit)], [Generator(1, 0.0, 200.0, 10.0)], reference_bus=2)


def two_area_toy(tie_limit: float = 40.0, limit: float = 60.0) -> tuple[Network, dict]:
    """Two triangles joined by one tie-line; returns the network and its bus-to-area map."""
    branches = [
        Branch(1, 2, 0.1, limit), Branch(2, 3, 0.1, limit), Branch(1, 3, 0.12, limit),
        Branch(4, 5, 0.1, limit), Branch(5, 6, 0.1, limit), Branch(4, 6, 0.12, limit),
        Branch(3, 4, 0.2, tie_limit),
    ]
    gens = [
        Generator(1, 10.0, 150.0, 10.0), Generator(2, 0.0, 80.0, 25.0),
        Generator(5, 10.0, 120.0, 15.0), Generator(6, 0.0, 60.0, 30.0),
    ]
    net = make_network([1, 2, 3, 4, 5, 6], branches, gens, reference_bus=1)
    return net, {1: 0, 2: 0, 3: 0, 4: 1, 5: 1, 6: 1}


def random_network(n_bus: int, seed: int, n_gen: int | None = None, extra_lines: int | None = None,
                   limit_range=(30.0, 120.0), pmin_fraction: float = 0.2) -> Network:
    """Connected random network: a random spanning tree plus extra chords.

    Generators sit on distinct buses with capacities that comfortably exceed a
    typical load of ~30 MW per bus; some carry a positive minimum output.
    """
    rng = np.random.default_rng(seed)
    buses = list(range(1, n_bus + 1))
    order = rng.permutation(buses)
    edges = set()
    for k in range(1, n_bus):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    extra = max(1, n_bus // 2) if extra_lines is None else extra_lines
    tries = 0
    while extra > 0 and tries < 50 * n_bus and n_bus > 2:
        tries += 1
        a, b = (int(v) for v in rng.choice(buses, size=2, replace=False))
        e = (min(a, b), max(a, b))
        if e not in edges:
            edges.add(e)
            extra -= 1
    branches = [Branch(a, b, float(rng.uniform(0.05, 0.3)), float(rng.uniform(*limit_range)))
                for a, b in sorted(edges)]
    n_gen = max(2, n_bus // 3) if n_gen is None else n_gen
    gen_buses = sorted(int(b) for b in rng.choice(buses, size=min(n_gen, n_bus), replace=False))
    total = 40.0 * n_bus
    gens = []
    for b in gen_buses:
        pmax = float(rng.uniform(0.6, 1.4) * total / len(gen_buses))
        pmin = float(pmax * pmin_fraction * rng.uniform(0.0, 1.0)) if pmin_fraction > 0 else 0.0
        gens.append(Generator(b, round(pmin, 3), round(pmax, 3), round(float(rng.uniform(5.0, 40.0)), 3)))
    return make_network(buses, branches, gens, reference_bus=int(rng.choice(buses)))


def random_forecast(net: Network, seed: int, mean: float = 25.0, spread: float = 0.5) -> np.ndarray:
    """Non-negative nodal demand with buses hosting units carrying less load."""
    rng = np.random.default_rng(seed)
    fc = mean * rng.uniform(1.0 - spread, 1.0 + spread, size=net.n_bus)
    return np.round(fc, 3)
