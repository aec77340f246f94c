"""Case parsing (MATPOWER subset and native JSON) and PTDF computation."""

from __future__ import annotations

import json
import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

INF = math.inf


class CaseError(ValueError):
    """Raised for malformed case data."""


class CaseSyntaxError(CaseError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SchemaError(CaseError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float
    limit: float = INF  # MW; INF means no thermal limit


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    cost: float = 1.0
    participates: bool = True


@dataclass(frozen=True)
class Network:
    """DC network model.

    Every bus carries at least one generator; bare buses get a zero-capacity,
    non-participating unit so that each bus has a generation variable.
    Use :func:`make_network` to build one with that completion applied.
    """

    buses: tuple[int, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    reference_bus: int
    base_mva: float = 100.0
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {b: i for i, b in enumerate(self.buses)})
        _validate(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self, bus: int) -> int:
        try:
            return self._index[bus]
        except KeyError:
            raise CaseError(f"unknown bus id {bus}") from None

    @property
    def limits(self) -> np.ndarray:
        return np.array([br.limit for br in self.branches], dtype=float)

    def gen_bus_matrix(self) -> np.ndarray:
        """Incidence (n_bus x n_gen) mapping generator output to bus injection."""
        m = np.zeros((self.n_bus, self.n_gen))
        for k, g in enumerate(self.generators):
            m[self.bus_index(g.bus), k] = 1.0
        return m

    def line_label(self, j: int) -> str:
        br = self.branches[j]
        return f"{br.from_bus}-{br.to_bus}"


def _validate(net: Network) -> None:
    if len(set(net.buses)) != len(net.buses):
        raise CaseError("duplicate bus ids")
    if not net.buses:
        raise CaseError("network has no buses")
    if net.reference_bus not in net._index:
        raise CaseError(f"reference bus {net.reference_bus} is not a declared bus")
    for j, br in enumerate(net.branches):
        for b in (br.from_bus, br.to_bus):
            if b not in net._index:
                raise CaseError(f"branch {j} endpoint {b} is not a declared bus")
        if br.from_bus == br.to_bus:
            raise CaseError(f"branch {j} is a self-loop")
        if not br.x > 0:
            raise CaseError(f"branch {j} reactance must be positive, got {br.x}")
        if not br.limit > 0:
            raise CaseError(f"branch {j} flow limit must be positive, got {br.limit}")
    for k, g in enumerate(net.generators):
        if g.bus not in net._index:
            raise CaseError(f"generator {k} bus {g.bus} is not a declared bus")
        if g.pmin > g.pmax:
            raise CaseError(f"generator {k} has pmin > pmax")
    if not is_connected(net.buses, [(br.from_bus, br.to_bus) for br in net.branches]):
        raise CaseError("branch graph is not connected")


def is_connected(buses, edges) -> bool:
    buses = list(buses)
    if len(buses) <= 1:
        return True
    adj: dict[int, list[int]] = {b: [] for b in buses}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    seen = {buses[0]}
    stack = [buses[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(buses)


def make_network(buses, branches, generators, reference_bus, base_mva=100.0) -> Network:
    """Build a Network, adding zero-capacity generators on bare buses."""
    generators = list(generators)
    with_gen = {g.bus for g in generators}
    for b in buses:
        if b not in with_gen:
            generators.append(Generator(bus=b, pmin=0.0, pmax=0.0, cost=0.0, participates=False))
    return Network(
        buses=tuple(int(b) for b in buses),
        branches=tuple(branches),
        generators=tuple(generators),
        reference_bus=int(reference_bus),
        base_mva=float(base_mva),
    )


def participation_factors(net: Network) -> np.ndarray:
    """Equal participation 1/|G| over participating units with capacity."""
    mask = np.array([g.participates and g.pmax > 0 for g in net.generators])
    if not mask.any():
        raise CaseError("no participating generator with positive capacity")
    return mask / mask.sum()


# ---------------------------------------------------------------------------
# MATPOWER
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:Inf|inf|NaN|nan)")


def _strip_comment(line: str) -> str:
    # '%' starts a comment unless inside a quoted string
    out = []
    quoted = False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        if ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _parse_matrix(lines: list[str], start: int, col0: int) -> tuple[list[list[float]], int]:
    """Parse a `[ ... ];` matrix beginning on line `start` after column `col0`."""
    rows: list[list[float]] = []
    current: list[float] = []
    i = start
    col = col0
    while i < len(lines):
        text = _strip_comment(lines[i])
        while col < len(text):
            ch = text[col]
            if ch in " \t,\r":
                col += 1
                continue
            if ch == ";":
                if current:
                    rows.append(current)
                    current = []
                col += 1
                continue
            if ch == "]":
                if current:
                    rows.append(current)
                return rows, i
            m = _NUMBER.match(text, col)
            if not m:
                raise CaseSyntaxError(f"unexpected character {ch!r} in matrix", i + 1, col + 1)
            current.append(float(m.group(0)))
            col = m.end()
        if current:
            rows.append(current)
            current = []
        i += 1
        col = 0
    raise CaseSyntaxError("unterminated matrix (missing ']')", len(lines), 1)


def _matpower_blocks(text: str) -> dict[str, Any]:
    lines = text.splitlines()
    blocks: dict[str, Any] = {}
    assign = re.compile(r"^\s*mpc\.(\w+)\s*=\s*")
    i = 0
    while i < len(lines):
        line = _strip_comment(lines[i])
        m = assign.match(line)
        if not m:
            i += 1
            continue
        name = m.group(1)
        rest = line[m.end():]
        if rest.startswith("["):
            rows, end = _parse_matrix(lines, i, m.end() + 1)
            widths = {len(r) for r in rows}
            if len(widths) > 1 and name != "gencost":
                raise CaseSyntaxError(f"ragged rows in mpc.{name}", i + 1, 1)
            blocks[name] = rows
            i = end + 1
            continue
        value = rest.strip().rstrip(";").strip()
        if value.startswith("'"):
            blocks[name] = value.strip("'")
        else:
            num = _NUMBER.fullmatch(value)
            if not num:
                raise CaseSyntaxError(f"cannot parse value of mpc.{name}", i + 1, m.end() + 1)
            blocks[name] = float(value)
        i += 1
    return blocks


def parse_matpower(text: str) -> Network:
    """Parse MATPOWER case text (baseMVA, bus, branch, gen and optional gencost)."""
    blocks = _matpower_blocks(text)
    for name in ("baseMVA", "bus", "branch", "gen"):
        if name not in blocks:
            raise CaseError(f"missing block mpc.{name}")
    ignored = sorted(set(blocks) - {"baseMVA", "bus", "branch", "gen", "gencost", "version"})
    if ignored:
        warnings.warn(f"ignoring MATPOWER fields: {', '.join(ignored)}", stacklevel=2)

    bus_rows = blocks["bus"]
    buses = [int(r[0]) for r in bus_rows]
    refs = [int(r[0]) for r in bus_rows if len(r) > 1 and int(r[1]) == 3]
    if not refs:
        raise CaseError("no reference bus (type 3) in mpc.bus")
    if len(refs) > 1:
        warnings.warn(f"several type-3 buses {refs}; using {refs[0]}", stacklevel=2)

    branches = []
    for k, r in enumerate(blocks["branch"]):
        if len(r) < 6:
            raise CaseError(f"mpc.branch row {k + 1} has fewer than 6 columns")
        if len(r) >= 11 and r[10] == 0:
            continue  # out of service
        rate = r[5]
        branches.append(Branch(int(r[0]), int(r[1]), float(r[3]), INF if rate == 0 else float(rate)))

    gen_rows = blocks["gen"]
    costs = _linear_costs(blocks.get("gencost"), len(gen_rows))
    generators = []
    for k, r in enumerate(gen_rows):
        if len(r) < 10:
            raise CaseError(f"mpc.gen row {k + 1} has fewer than 10 columns")
        if len(r) >= 8 and r[7] <= 0:
            continue  # out of service
        generators.append(Generator(int(r[0]), float(r[9]), float(r[8]), costs[k], True))

    return make_network(buses, branches, generators, refs[0], blocks["baseMVA"])


def _linear_costs(gencost, n_gen: int) -> list[float]:
    if gencost is None:
        warnings.warn("mpc.gencost absent; using unit cost 1.0 for every generator", stacklevel=3)
        return [1.0] * n_gen
    costs = []
    for k in range(n_gen):
        if k >= len(gencost):
            warnings.warn(f"no gencost row for generator {k + 1}; using 1.0", stacklevel=3)
            costs.append(1.0)
            continue
        r = gencost[k]
        if int(r[0]) != 2:
            warnings.warn(f"gencost row {k + 1} is not polynomial; using 1.0", stacklevel=3)
            costs.append(1.0)
            continue
        ncost = int(r[3])
        coeffs = r[4:4 + ncost]
        costs.append(float(coeffs[-2]) if ncost >= 2 else 0.0)
    return costs


# ---------------------------------------------------------------------------
# Native JSON
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, pointer: str):
    if not isinstance(doc, dict):
        raise SchemaError(pointer, "expected an object")
    if key not in doc:
        raise SchemaError(f"{pointer}/{key}", "required field missing")
    return doc[key]


def _number(value, pointer: str, *, allow_null=False) -> float:
    if value is None and allow_null:
        return INF
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(pointer, "expected a number")
    return float(value)


def _integer(value, pointer: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(pointer, "expected an integer")
    return value


def parse_native(doc: dict | str) -> Network:
    """Parse the native JSON case document (dict or JSON text)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    base = _number(_require(doc, "base_mva", ""), "/base_mva")
    ref = _integer(_require(doc, "reference_bus", ""), "/reference_bus")
    raw_buses = _require(doc, "buses", "")
    if not isinstance(raw_buses, list):
        raise SchemaError("/buses", "expected an array")
    buses = [_integer(b, f"/buses/{i}") for i, b in enumerate(raw_buses)]

    branches = []
    raw = _require(doc, "branches", "")
    if not isinstance(raw, list):
        raise SchemaError("/branches", "expected an array")
    for i, br in enumerate(raw):
        p = f"/branches/{i}"
        f = _integer(_require(br, "from", p), f"{p}/from")
        t = _integer(_require(br, "to", p), f"{p}/to")
        x = _number(_require(br, "x", p), f"{p}/x")
        if not x > 0:
            raise SchemaError(f"{p}/x", "reactance must be positive")
        lim = _number(br.get("limit"), f"{p}/limit", allow_null=True)
        if not lim > 0:
            raise SchemaError(f"{p}/limit", "limit must be positive or null")
        for key, b in (("from", f), ("to", t)):
            if b not in buses:
                raise SchemaError(f"{p}/{key}", f"bus {b} not declared")
        branches.append(Branch(f, t, x, lim))

    gens = []
    raw = _require(doc, "generators", "")
    if not isinstance(raw, list):
        raise SchemaError("/generators", "expected an array")
    for i, g in enumerate(raw):
        p = f"/generators/{i}"
        bus = _integer(_require(g, "bus", p), f"{p}/bus")
        if bus not in buses:
            raise SchemaError(f"{p}/bus", f"bus {bus} not declared")
        pmin = _number(_require(g, "pmin", p), f"{p}/pmin")
        pmax = _number(_require(g, "pmax", p), f"{p}/pmax")
        if pmin > pmax:
            raise SchemaError(f"{p}/pmin", "pmin exceeds pmax")
        cost = _number(_require(g, "cost", p), f"{p}/cost")
        part = g.get("participates", True)
        if not isinstance(part, bool):
            raise SchemaError(f"{p}/participates", "expected a boolean")
        gens.append(Generator(bus, pmin, pmax, cost, part))

    if ref not in buses:
        raise SchemaError("/reference_bus", f"bus {ref} not declared")
    try:
        return make_network(buses, branches, gens, ref, base)
    except CaseError as exc:
        raise SchemaError("", str(exc)) from None


def emit_native(net: Network) -> dict:
    return {
        "base_mva": net.base_mva,
        "reference_bus": net.reference_bus,
        "buses": list(net.buses),
        "branches": [
            {"from": b.from_bus, "to": b.to_bus, "x": b.x, "limit": None if math.isinf(b.limit) else b.limit}
            for b in net.branches
        ],
        "generators": [
            {"bus": g.bus, "pmin": g.pmin, "pmax": g.pmax, "cost": g.cost, "participates": g.participates}
            for g in net.generators
        ],
    }


def load_case(path: str | Path, fmt: str | None = None) -> Network:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if fmt is None:
        fmt = "matpower" if path.suffix == ".m" else "native"
    if fmt == "matpower":
        return parse_matpower(text)
    if fmt == "native":
        return parse_native(json.loads(text))
    raise CaseError(f"unknown case format {fmt!r}")


# ---------------------------------------------------------------------------
# PTDF
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PtdfMatrix:
    """Injection shift factors, shape (n_line, n_bus), withdrawal at the reference bus."""

    matrix: np.ndarray
    reference_bus: int

    @property
    def shape(self):
        return self.matrix.shape


def incidence(net: Network) -> np.ndarray:
    """Branch-bus incidence (n_line x n_bus): +1 at from-bus, -1 at to-bus."""
    c = np.zeros((net.n_line, net.n_bus))
    for j, br in enumerate(net.branches):
        c[j, net.bus_index(br.from_bus)] = 1.0
        c[j, net.bus_index(br.to_bus)] = -1.0
    return c


def compute_ptdf(net: Network, reference_bus: int | None = None) -> PtdfMatrix:
    """PTDF by dense solve of the reduced susceptance matrix."""
    ref = net.reference_bus if reference_bus is None else reference_bus
    r = net.bus_index(ref)
    c = incidence(net)
    b_line = np.array([1.0 / br.x for br in net.branches])
    bbus = c.T @ (b_line[:, None] * c)
    keep = [i for i in range(net.n_bus) if i != r]
    ptdf = np.zeros((net.n_line, net.n_bus))
    if keep:
        bred = bbus[np.ix_(keep, keep)]
        try:
            xred = np.linalg.solve(bred, np.eye(len(keep)))
        except np.linalg.LinAlgError:
            raise CaseError("singular reduced susceptance matrix (disconnected network?)") from None
        ptdf[:, keep] = (b_line[:, None] * c[:, keep]) @ xred
    return PtdfMatrix(matrix=ptdf, reference_bus=ref)


def angle_flows(net: Network, injection: np.ndarray, reference_bus: int | None = None) -> np.ndarray:
    """Line flows from a balanced injection vector via B theta = p (no PTDF)."""
    ref = net.reference_bus if reference_bus is None else reference_bus
    r = net.bus_index(ref)
    c = incidence(net)
    b_line = np.array([1.0 / br.x for br in net.branches])
    bbus = c.T @ (b_line[:, None] * c)
    keep = [i for i in range(net.n_bus) if i != r]
    theta = np.zeros(net.n_bus)
    theta[keep] = np.linalg.solve(bbus[np.ix_(keep, keep)], np.asarray(injection, float)[keep])
    return b_line * (c @ theta)
