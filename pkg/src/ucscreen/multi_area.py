"""Angle-based UC, whole-system and per-area screening, and per-area policies.

Flows are written through bus voltage angles, ``L = (delta_from - delta_to) / x``,
so the constraint system decomposes by area. An area model keeps only the
area's units, angles and internal lines. Tie-lines incident to the area enter
its bus balances as bounded free injections, which makes the area model a
relaxation of the whole-system model: any bound redundant for the area model
is redundant for the whole system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .case_io import CaseError, Network, is_connected
from .lp import EQ
from .mplp import ParameterSet, PolicySet, build_policies
from .parallel import pmap
from .screening import ScreeningResult, solve_bound
from .uc_models import (
    DIRECTIONS,
    EXPLICIT,
    PROJECTED,
    UcModel,
    UcTemplate,
    _Builder,
    _add_generation_rows,
    _commitment_vars,
    _finish,
    validate_forecast,
)


@dataclass(frozen=True)
class AreaPartition:
    """Every bus assigned to exactly one area; tie-lines are derived, never declared."""

    assignment: dict  # bus id -> area index

    def __post_init__(self):
        object.__setattr__(self, "assignment", {int(b): int(a) for b, a in self.assignment.items()})

    @property
    def areas(self) -> list:
        return sorted(set(self.assignment.values()))

    def area_of(self, bus: int) -> int:
        return self.assignment[bus]

    def buses(self, area: int) -> list:
        return [b for b, a in self.assignment.items() if a == area]

    def internal_lines(self, net: Network, area: int) -> list:
        return [j for j, br in enumerate(net.branches)
                if self.assignment[br.from_bus] == area and self.assignment[br.to_bus] == area]

    def tie_lines(self, net: Network) -> list:
        return [j for j, br in enumerate(net.branches)
                if self.assignment[br.from_bus] != self.assignment[br.to_bus]]

    def validate(self, net: Network) -> None:
        missing = [b for b in net.buses if b not in self.assignment]
        extra = [b for b in self.assignment if b not in set(net.buses)]
        if missing:
            raise CaseError(f"partition does not cover buses {missing}")
        if extra:
            raise CaseError(f"partition names unknown buses {extra}")
        for a in self.areas:
            buses = self.buses(a)
            edges = [(net.branches[j].from_bus, net.branches[j].to_bus) for j in self.internal_lines(net, a)]
            if not is_connected(buses, edges):
                raise CaseError(f"area {a} is not internally connected")

    def to_json(self) -> str:
        return json.dumps({"areas": {str(b): a for b, a in sorted(self.assignment.items())}}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AreaPartition":
        doc = json.loads(text)
        if "areas" not in doc or not isinstance(doc["areas"], dict):
            raise CaseError("partition file needs an 'areas' object mapping bus id to area index")
        return cls({int(b): int(a) for b, a in doc["areas"].items()})

    @classmethod
    def single(cls, net: Network) -> "AreaPartition":
        return cls({b: 0 for b in net.buses})


def angle_template(net: Network, part: AreaPartition | None = None, area: int | None = None,
                   commitment: str = EXPLICIT) -> UcTemplate:
    """Angle-form UC constraints for the whole system (area=None) or one area."""
    if area is None:
        buses = list(net.buses)
        lines = list(range(net.n_line))
        ties = []
    else:
        buses = part.buses(area)
        lines = part.internal_lines(net, area)
        ties = [j for j in part.tie_lines(net)
                if part.area_of(net.branches[j].from_bus) == area or part.area_of(net.branches[j].to_bus) == area]
    in_area = set(buses)
    gens = [i for i, g in enumerate(net.generators) if g.bus in in_area]
    sub = _SubNet(net, gens)

    bld = _Builder(net.n_bus)
    u, binaries = _commitment_vars(bld, sub, commitment)
    lo = [min(0.0, g.pmin) for g in sub.generators]
    hi = [max(0.0, g.pmax) for g in sub.generators]
    x = bld.add_vars("x", len(gens), lo, hi)
    if u is not None:
        _add_generation_rows(bld, sub, u, lambda i: {x.start + i: 1.0})
    ref_in = net.reference_bus in in_area
    d_lb = [0.0 if (b == net.reference_bus) else -np.inf for b in buses]
    d_ub = [0.0 if (b == net.reference_bus) else np.inf for b in buses]
    delta = bld.add_vars("delta", len(buses), d_lb, d_ub)
    dpos = {b: delta.start + k for k, b in enumerate(buses)}
    tie_lb = [-net.branches[j].limit for j in ties]
    tie_ub = [net.branches[j].limit for j in ties]
    tie = bld.add_vars("tie", len(ties), tie_lb, tie_ub)

    flow_coef = np.zeros((len(lines), 0))
    flows = []
    for j in lines:
        br = net.branches[j]
        flows.append({dpos[br.from_bus]: 1.0 / br.x, dpos[br.to_bus]: -1.0 / br.x})

    for b in buses:
        coef: dict = {}
        for k, gi in enumerate(gens):
            if net.generators[gi].bus == b:
                coef[x.start + k] = coef.get(x.start + k, 0.0) + 1.0
        for f, j in zip(flows, lines):
            br = net.branches[j]
            sign = -1.0 if br.from_bus == b else (1.0 if br.to_bus == b else 0.0)
            if sign:
                for k, v in f.items():
                    coef[k] = coef.get(k, 0.0) + sign * v
        for t, j in enumerate(ties):
            br = net.branches[j]
            if br.from_bus == b:
                coef[tie.start + t] = coef.get(tie.start + t, 0.0) - 1.0
            elif br.to_bus == b:
                coef[tie.start + t] = coef.get(tie.start + t, 0.0) + 1.0
        e = np.zeros(net.n_bus)
        e[net.bus_index(b)] = 1.0
        bld.add_row(coef, EQ, 0.0, e)

    limit_rows = np.full((net.n_line, 2), -1, dtype=int)
    limits = np.array([net.branches[j].limit for j in lines])
    for k, (j, f) in enumerate(zip(lines, flows)):
        if math.isfinite(limits[k]):
            limit_rows[j, 0] = bld.add_row(f, "<=", limits[k])
            limit_rows[j, 1] = bld.add_row(f, ">=", -limits[k])
    n = bld.n
    flow_coef = np.zeros((len(lines), n))
    for k, f in enumerate(flows):
        for col, v in f.items():
            flow_coef[k, col] = v
    cost = np.zeros(n)
    cost[x] = [g.cost for g in sub.generators]
    notes = () if (area is None or ref_in) else ("reference bus outside area; angles float",)
    tpl = _finish(bld, cost, binaries, net, lines, flow_coef, np.zeros((len(lines), net.n_bus)),
                  limits, limit_rows[lines] if lines else np.zeros((0, 2), int), notes)
    object.__setattr__(tpl, "generators", tuple(gens))
    return tpl


class _SubNet:
    """Just enough of a Network to reuse the generation-row helpers on a unit subset."""

    def __init__(self, net: Network, gens):
        self.generators = tuple(net.generators[i] for i in gens)


def build_angle_uc(net: Network, fc, part: AreaPartition | None = None, keep=None) -> UcModel:
    """Angle-form deterministic UC; `keep` restricts modelled (line, direction) limits."""
    fc = validate_forecast(net, fc)
    tpl = angle_template(net)
    drop = []
    if keep is not None:
        keep = set(keep)
        for k, j in enumerate(tpl.lines):
            for col, d in enumerate(DIRECTIONS):
                r = tpl.limit_rows[k, col]
                if r >= 0 and (j, d) not in keep:
                    drop.append(int(r))
    return UcModel(tpl.lp(fc, drop_rows=sorted(drop)), tpl.binaries, index=tpl.index)


def angle_flows_of(net: Network, model: UcModel, y) -> np.ndarray:
    d = np.asarray(y)[model.index["delta"]]
    out = np.zeros(net.n_line)
    for j, br in enumerate(net.branches):
        out[j] = (d[net.bus_index(br.from_bus)] - d[net.bus_index(br.to_bus)]) / br.x
    return out


def screen_whole_angle(net: Network, fc, part: AreaPartition | None = None, line: int | None = None,
                       template: UcTemplate | None = None, threads: int | None = None) -> ScreeningResult:
    """Whole-system angle screening of one line (both directions) or of every line."""
    fc = validate_forecast(net, fc)
    tpl = template or angle_template(net)
    lines = tpl.lines if line is None else [line]
    targets = [(j, d) for j in lines for d in DIRECTIONS]
    return ScreeningResult("S1-angle", pmap(lambda jd: solve_bound(tpl, jd[0], jd[1], fc, "S1-angle"),
                                            targets, threads))


def screen_area(net: Network, fc, part: AreaPartition, area: int, line: int | None = None,
                template: UcTemplate | None = None, threads: int | None = None) -> ScreeningResult:
    """Screen internal lines of `area` with only that area's model."""
    fc = validate_forecast(net, fc)
    tpl = template or angle_template(net, part, area)
    if line is not None and line not in tpl.lines:
        raise ValueError(f"line {line} is not internal to area {area}")
    lines = tpl.lines if line is None else [line]
    targets = [(j, d) for j in lines for d in DIRECTIONS]
    return ScreeningResult(f"S1-area{area}",
                           pmap(lambda jd: solve_bound(tpl, jd[0], jd[1], fc, f"S1-area{area}"), targets, threads))


def union_screen(net: Network, fc, part: AreaPartition, threads: int | None = None) -> tuple:
    """Per-area screening of internal lines plus whole-system screening of tie-lines.

    Returns the merged result and the per-area results keyed by area.
    """
    part.validate(net)
    fc = validate_forecast(net, fc)
    per_area = pmap(lambda a: screen_area(net, fc, part, a), part.areas, threads)
    ties = part.tie_lines(net)
    bounds = [b for r in per_area for b in r.bounds]
    if ties:
        whole = angle_template(net)
        tie_targets = [(j, d) for j in ties for d in DIRECTIONS]
        bounds += pmap(lambda jd: solve_bound(whole, jd[0], jd[1], fc, "S1-tie"), tie_targets, threads)
    return ScreeningResult("S1-union", bounds), dict(zip(part.areas, per_area))


def area_policy(net: Network, part: AreaPartition, area: int, ps: ParameterSet, base_fc,
                varying_buses=None, region_cap: int = 10_000, threads: int | None = None) -> PolicySet:
    """Affine policies for every internal-line bound of `area`, parameterised by area demand."""
    tpl = angle_template(net, part, area, commitment=PROJECTED)
    buses = part.buses(area) if varying_buses is None else list(varying_buses)
    if any(part.area_of(b) != area for b in buses):
        raise ValueError("varying buses must belong to the area")
    return build_policies(net, None, "det", None, buses, base_fc, ps, region_cap=region_cap,
                          threads=threads, template=tpl)
