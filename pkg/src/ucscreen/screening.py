"""Line-limit screening: maximise and minimise each line flow over a relaxed UC region."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .case_io import Network, PtdfMatrix
from .lp import Status, solve_lp
from .parallel import pmap
from .uc_models import (
    DIRECTIONS,
    EXPLICIT,
    UPPER,
    BoxUncertainty,
    GaussianUncertainty,
    UcTemplate,
    cc_template,
    deterministic_template,
    robust_template,
    validate_forecast,
)

log = logging.getLogger(__name__)

REDUNDANT, NON_REDUNDANT = "Redundant", "NonRedundant"
SRC_LP, SRC_POLICY, SRC_NONE = "LP", "AffinePolicy", "none"
NOT_COVERED = "NotCovered"
REL_TOL = 1e-6
CSV_FIELDS = ("line", "direction", "method", "classification", "f_star", "margin", "source")


class ScreeningInfeasible(RuntimeError):
    """A screening LP has no feasible point, so the UC itself is infeasible at this forecast."""


@dataclass(frozen=True)
class BoundResult:
    line: int
    direction: str
    classification: str
    f_star: float
    margin: float
    method: str
    source: str
    note: str = ""

    @property
    def redundant(self) -> bool:
        return self.classification == REDUNDANT


@dataclass
class ScreeningResult:
    method: str
    bounds: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.bounds = sorted(self.bounds, key=lambda b: (b.line, DIRECTIONS.index(b.direction)))

    def keep(self) -> set:
        """(line, direction) pairs that must stay in the reduced model."""
        return {(b.line, b.direction) for b in self.bounds if not b.redundant}

    def get(self, line: int, direction: str) -> BoundResult:
        for b in self.bounds:
            if b.line == line and b.direction == direction:
                return b
        raise KeyError((line, direction))

    @property
    def non_redundant_count(self) -> int:
        return sum(not b.redundant for b in self.bounds)

    def classifications(self) -> list:
        return [(b.line, b.direction, b.classification) for b in self.bounds]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for b in self.bounds:
            w.writerow([b.line, b.direction, b.method, b.classification, fmt(b.f_star), fmt(b.margin), b.source])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"method": self.method, "notes": list(self.notes),
               "bounds": [{**asdict(b), "f_star": _json_num(b.f_star), "margin": _json_num(b.margin)}
                          for b in self.bounds]}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScreeningResult":
        doc = json.loads(text)
        bounds = [BoundResult(**{**b, "f_star": _num(b["f_star"]), "margin": _num(b["margin"])})
                  for b in doc["bounds"]]
        return cls(doc["method"], bounds, doc.get("notes", []))


def fmt(v: float) -> str:
    """Fixed 9-significant-digit rendering used in every CSV."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def _json_num(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _num(v):
    return float(v)


def margin_of(direction: str, f_star: float, limit: float) -> float:
    return limit - f_star if direction == UPPER else f_star + limit


def classify(margin: float, limit: float) -> str:
    return REDUNDANT if margin > REL_TOL * max(1.0, limit) else NON_REDUNDANT


def bound_lp(tpl: UcTemplate, line: int, direction: str, forecast):
    """The LP that extremises one line flow with every other modelled limit in place."""
    pos = tpl.position(line)
    row = tpl.limit_rows[pos, 0 if direction == UPPER else 1]
    drop = (int(row),) if row >= 0 else ()
    return tpl.lp(forecast, objective=tpl.flow_coef[pos], maximize=direction == UPPER, drop_rows=drop)


def solve_bound(tpl: UcTemplate, line: int, direction: str, forecast, method: str) -> BoundResult:
    pos = tpl.position(line)
    limit = float(tpl.limit[pos])
    if math.isinf(limit):
        return BoundResult(line, direction, REDUNDANT, math.nan, math.inf, method, SRC_NONE)
    if line in getattr(tpl, "structural", ()):
        return BoundResult(line, direction, NON_REDUNDANT, math.nan, limit, method, SRC_NONE,
                           "tightened limit negative")
    sol = solve_lp(bound_lp(tpl, line, direction, forecast))
    if sol.status is Status.INFEASIBLE:
        raise ScreeningInfeasible(f"screening LP for line {line} {direction} is infeasible; "
                                  "the unit commitment has no feasible point at this forecast")
    if sol.status is Status.UNBOUNDED:
        f_star = math.inf if direction == UPPER else -math.inf
        return BoundResult(line, direction, NON_REDUNDANT, f_star, -math.inf, method, SRC_LP, "unbounded")
    if sol.status is Status.STALLED:
        log.warning("screening LP stalled on line %d %s; kept conservatively", line, direction)
        return BoundResult(line, direction, NON_REDUNDANT, math.nan, math.nan, method, SRC_LP, "stalled")
    f_star = float(sol.objective + tpl.flow_load[pos] @ np.asarray(forecast, float))
    m = margin_of(direction, f_star, limit)
    return BoundResult(line, direction, classify(m, limit), f_star, m, method, SRC_LP)


def screen_template(tpl: UcTemplate, forecast, method: str, threads: int | None = None,
                    targets=None) -> ScreeningResult:
    """Solve every (line, direction) bound of `tpl`, or only `targets` if given."""
    if targets is None:
        targets = [(j, d) for j in tpl.lines for d in DIRECTIONS]
    bounds = pmap(lambda jd: solve_bound(tpl, jd[0], jd[1], forecast, method), targets, threads)
    return ScreeningResult(method, bounds, list(tpl.notes))


METHODS = {"det": "S1", "cc": "S2", "ro": "S3"}


def screening_template(net: Network, ptdf: PtdfMatrix, method: str, unc=None, with_recourse: bool = False,
                       commitment: str = EXPLICIT) -> UcTemplate:
    """Constraint template behind the `method` screening ("det", "cc" or "ro")."""
    if method == "det":
        return deterministic_template(net, ptdf, commitment=commitment)
    if method == "cc":
        if not isinstance(unc, GaussianUncertainty):
            raise ValueError("chance-constrained screening needs a Gaussian uncertainty model")
        return cc_template(net, ptdf, unc, commitment=commitment)
    if method == "ro":
        if not isinstance(unc, BoxUncertainty):
            raise ValueError("robust screening needs a box uncertainty model")
        return robust_template(net, ptdf, unc, with_recourse, commitment=commitment)
    raise ValueError(f"unknown screening method {method!r}")


def screen(net: Network, ptdf: PtdfMatrix, fc, method: str, unc=None, with_recourse: bool = False,
           threads: int | None = None) -> ScreeningResult:
    """Dispatch to the deterministic, chance-constrained or robust screening."""
    if method == "det":
        return screen_deterministic(net, ptdf, fc, threads)
    if method == "cc":
        return screen_cc(net, ptdf, fc, unc, threads)
    if method == "ro":
        return screen_robust(net, ptdf, fc, unc, with_recourse, threads)
    raise ValueError(f"unknown screening method {method!r}")


def screen_deterministic(net: Network, ptdf: PtdfMatrix, fc, threads: int | None = None) -> ScreeningResult:
    fc = validate_forecast(net, fc)
    return screen_template(deterministic_template(net, ptdf), fc, "S1", threads)


def screen_robust(net: Network, ptdf: PtdfMatrix, fc, unc: BoxUncertainty, with_recourse: bool = False,
                  threads: int | None = None) -> ScreeningResult:
    fc = validate_forecast(net, fc)
    unc.check_forecast(net, fc)
    return screen_template(robust_template(net, ptdf, unc, with_recourse), fc, "S3", threads)


def screen_cc(net: Network, ptdf: PtdfMatrix, fc, unc: GaussianUncertainty,
              threads: int | None = None) -> ScreeningResult:
    fc = validate_forecast(net, fc)
    tpl = cc_template(net, ptdf, unc)
    for note in tpl.notes:
        log.warning("chance-constrained screening: %s", note)
    return screen_template(tpl, fc, "S2", threads)


def reduce_model(sr: ScreeningResult) -> set:
    """Keep set for the reduced model: every bound not proven redundant."""
    return sr.keep()


def keep_to_json(keep) -> str:
    return json.dumps({"keep": [[int(j), d] for j, d in sorted(keep)]})


def keep_from_json(text: str) -> set:
    return {(int(j), d) for j, d in json.loads(text)["keep"]}
