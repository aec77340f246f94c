"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 infeasible model, 3 policy overflow.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .case_io import CaseError, compute_ptdf, load_case
from .lp import LpError
from .mplp import ParameterSet, PolicySet, build_policies, hybrid_screen
from .multi_area import AreaPartition, area_policy, screen_whole_angle, union_screen
from .parallel import THREADS_ENV, default_threads
from .screening import ScreeningInfeasible, ScreeningResult, fmt, keep_from_json, keep_to_json, screen
from .uc_models import BoxUncertainty, GaussianUncertainty, StructuralInfeasibility
from .validation import sample_realizations, validate_reduced

log = logging.getLogger("ucscreen")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_OVERFLOW = 0, 1, 2, 3
FAMILY_METHOD = {"T1": "det", "T2": "cc", "T3": "ro", "T4": "cc", "T5": "ro"}


class UsageError(Exception):
    pass


class ModelInfeasible(Exception):
    pass


@dataclass
class JobConfig:
    case: str | None = None
    format: str | None = None
    method: str = "det"
    load: list | None = None
    load_file: str | None = None
    beta1: float | None = None
    beta2: float | None = None
    uncertain: list | None = None
    sigma: list | None = None
    eps_x: float | None = None
    eps_f: float | None = None
    recourse: bool = False
    ps_file: str | None = None
    partition: str | None = None
    policy: str | None = None
    keep: str | None = None
    family: str | None = None
    n: int = 200
    seed: int = 0
    threads: int | None = None
    region_cap: int = 10_000
    hybrid: bool = False
    allow_partial: bool = False
    with_policies: bool = False
    out: str | None = None
    extra: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_floats(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _csv_ints(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _common(p: argparse.ArgumentParser, uncertainty: bool = True):
    p.add_argument("--job", help="JSON job file; explicit flags override its values")
    p.add_argument("--case", help="case file (.json native or .m MATPOWER)")
    p.add_argument("--format", choices=["native", "matpower"])
    p.add_argument("--load", help="comma-separated per-bus net demand (MW)")
    p.add_argument("--load-file", dest="load_file", help="JSON list or CSV line of per-bus net demand")
    p.add_argument("--threads", type=int, help=f"worker threads (also {THREADS_ENV})")
    p.add_argument("--out", help="output directory or file")
    if uncertainty:
        p.add_argument("--method", choices=["det", "ro", "cc"])
        p.add_argument("--beta1", type=float)
        p.add_argument("--beta2", type=float)
        p.add_argument("--uncertain", help="comma-separated uncertain bus ids")
        p.add_argument("--sigma", help="forecast-error std (MW): one value or one per bus")
        p.add_argument("--eps-x", dest="eps_x", type=float)
        p.add_argument("--eps-f", dest="eps_f", type=float)
        p.add_argument("--recourse", action="store_true", default=None,
                       help="robust screening with affine recourse")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ucscreen", description="Line-limit screening for single-step DC unit commitment")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ptdf", help="write the PTDF matrix as CSV")
    _common(p, uncertainty=False)

    p = sub.add_parser("screen", help="classify every line bound")
    _common(p)

    p = sub.add_parser("mplp", help="build or evaluate affine screening policies")
    msub = p.add_subparsers(dest="action", parser_class=_Parser)
    b = msub.add_parser("build")
    _common(b)
    b.add_argument("--ps-file", dest="ps_file", help="parameter set JSON (varying_buses with lo/hi or H/h)")
    b.add_argument("--region-cap", dest="region_cap", type=int)
    e = msub.add_parser("eval")
    _common(e)
    e.add_argument("--policy", help="policy store written by 'mplp build'")
    e.add_argument("--hybrid", action="store_true", default=None, help="fall back to LP where not covered")
    e.add_argument("--allow-partial", dest="allow_partial", action="store_true", default=None)

    p = sub.add_parser("validate", help="Monte-Carlo validation of a reduced model")
    _common(p)
    p.add_argument("--family", choices=["T1", "T2", "T3", "T4", "T5"])
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--keep", help="keep set JSON or screening JSON; screened on the fly if absent")

    p = sub.add_parser("area", help="multi-area screening")
    _common(p, uncertainty=False)
    p.add_argument("--partition", help='partition JSON {"areas": {"<bus>": area}}')
    p.add_argument("--with-policies", dest="with_policies", action="store_true", default=None)
    p.add_argument("--ps-file", dest="ps_file")
    p.add_argument("--region-cap", dest="region_cap", type=int)
    return parser


def make_config(args: argparse.Namespace) -> JobConfig:
    cfg = JobConfig()
    if getattr(args, "job", None):
        path = Path(args.job)
        if not path.exists():
            raise UsageError(f"job file {path} not found")
        doc = json.loads(path.read_text())
        names = {f.name for f in fields(JobConfig)}
        for k, v in doc.items():
            k = k.replace("-", "_")
            if k in names:
                setattr(cfg, k, v)
            else:
                cfg.extra[k] = v
    for f in fields(JobConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    cfg.load = _csv_floats(cfg.load)
    cfg.uncertain = _csv_ints(cfg.uncertain)
    cfg.sigma = _csv_floats(cfg.sigma)
    if cfg.threads is None:
        cfg.threads = default_threads()
    return cfg


def _network(cfg):
    if not cfg.case:
        raise UsageError("--case is required")
    if not Path(cfg.case).exists():
        raise UsageError(f"case file {cfg.case} not found")
    return load_case(cfg.case, cfg.format)


def _forecast(cfg, net):
    if cfg.load is not None:
        fc = np.asarray(cfg.load, float)
    elif cfg.load_file:
        path = Path(cfg.load_file)
        if not path.exists():
            raise UsageError(f"load file {path} not found")
        text = path.read_text().strip()
        fc = np.asarray(json.loads(text) if text.startswith("[") else _csv_floats(text.replace("\n", ",")), float)
    else:
        raise UsageError("a forecast is required (--load or --load-file)")
    if fc.size != net.n_bus:
        raise UsageError(f"forecast has {fc.size} entries, case has {net.n_bus} buses")
    return fc


def _uncertainty(cfg, net, method):
    if method == "det":
        return None
    if method == "ro":
        if cfg.beta1 is None or cfg.beta2 is None or not cfg.uncertain:
            raise UsageError("--method ro needs --beta1, --beta2 and --uncertain")
        try:
            return BoxUncertainty(tuple(cfg.uncertain), cfg.beta1, cfg.beta2)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if method == "cc":
        if cfg.sigma is None or cfg.eps_x is None:
            raise UsageError("--method cc needs --sigma and --eps-x (and optionally --eps-f)")
        sig = cfg.sigma[0] if len(cfg.sigma) == 1 else cfg.sigma
        if np.size(sig) not in (1, net.n_bus):
            raise UsageError("--sigma needs one value or one per bus")
        try:
            return GaussianUncertainty.from_sigma(net, sig, cfg.eps_x, cfg.eps_f)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unknown method {method!r}")


def _out_dir(cfg) -> Path | None:
    if cfg.out is None:
        return None
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_result(sr: ScreeningResult, cfg, stem: str, stdout):
    stdout.write(sr.to_csv())
    d = _out_dir(cfg)
    if d is not None:
        (d / f"{stem}.csv").write_text(sr.to_csv())
        (d / f"{stem}.json").write_text(sr.to_json() + "\n")


def _parameter_set(cfg, net):
    if not cfg.ps_file or not Path(cfg.ps_file).exists():
        raise UsageError("mplp build needs an existing --ps-file")
    doc = json.loads(Path(cfg.ps_file).read_text())
    buses = [int(b) for b in doc.get("varying_buses", [])]
    for b in buses:
        if b not in net.buses:
            raise UsageError(f"varying bus {b} is not in the network")
    if "lo" in doc:
        ps = ParameterSet.box(doc["lo"], doc["hi"])
    else:
        ps = ParameterSet.from_dict(doc)
    if ps.dim != len(buses):
        raise UsageError("parameter set dimension must match varying_buses")
    try:
        ps.bbox()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return buses, ps


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ptdf(cfg, stdout) -> int:
    net = _network(cfg)
    P = compute_ptdf(net)
    lines = ["line," + ",".join(str(b) for b in net.buses)]
    for j in range(net.n_line):
        lines.append(f"{net.line_label(j)}," + ",".join(fmt(v) for v in P.matrix[j]))
    text = "\n".join(lines) + "\n"
    stdout.write(text)
    d = _out_dir(cfg)
    if d is not None:
        (d / "ptdf.csv").write_text(text)
    return EXIT_OK


def cmd_screen(cfg, stdout) -> int:
    net = _network(cfg)
    fc = _forecast(cfg, net)
    unc = _uncertainty(cfg, net, cfg.method)
    sr = screen(net, compute_ptdf(net), fc, cfg.method, unc, bool(cfg.recourse), cfg.threads)
    for note in sr.notes:
        print(f"note: {note}", file=sys.stderr)
    _write_result(sr, cfg, "screening", stdout)
    return EXIT_OK


def cmd_mplp(cfg, action, stdout) -> int:
    net = _network(cfg)
    ptdf = compute_ptdf(net)
    if action == "build":
        fc = _forecast(cfg, net)
        unc = _uncertainty(cfg, net, cfg.method)
        buses, ps = _parameter_set(cfg, net)
        pset = build_policies(net, ptdf, cfg.method, unc, buses, fc, ps, bool(cfg.recourse),
                              region_cap=cfg.region_cap, threads=cfg.threads)
        text = pset.to_json() + "\n"
        target = Path(cfg.out) if cfg.out else None
        if target is not None:
            if target.suffix != ".json":
                target.mkdir(parents=True, exist_ok=True)
                target = target / "policy.json"
            else:
                target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text)
        else:
            stdout.write(text)
        print(f"policies: {len(pset.policies)}, regions: {pset.n_regions}", file=sys.stderr)
        if pset.partial:
            print("region cap reached: policy store is partial", file=sys.stderr)
            return EXIT_OVERFLOW
        return EXIT_OK
    if action == "eval":
        if not cfg.policy or not Path(cfg.policy).exists():
            raise UsageError("mplp eval needs an existing --policy file")
        pset = PolicySet.from_json(Path(cfg.policy).read_text(), net)
        if pset.partial and not cfg.allow_partial:
            print("policy store is partial; pass --allow-partial to evaluate it", file=sys.stderr)
            return EXIT_OVERFLOW
        fc = _forecast(cfg, net)
        sr = hybrid_screen(pset, net, ptdf, fc, fallback=bool(cfg.hybrid), threads=cfg.threads)
        _write_result(sr, cfg, "screening", stdout)
        return EXIT_OK
    raise UsageError("mplp needs an action: build or eval")


def _keep(cfg, net, ptdf, fc, method, unc):
    if cfg.keep:
        path = Path(cfg.keep)
        if not path.exists():
            raise UsageError(f"keep file {path} not found")
        text = path.read_text()
        doc = json.loads(text)
        if "keep" in doc:
            return keep_from_json(text)
        return ScreeningResult.from_json(text).keep()
    return screen(net, ptdf, fc, method, unc, bool(cfg.recourse), cfg.threads).keep()


def cmd_validate(cfg, stdout) -> int:
    if not cfg.family:
        raise UsageError("validate needs --family")
    net = _network(cfg)
    ptdf = compute_ptdf(net)
    fc = _forecast(cfg, net)
    method = FAMILY_METHOD[cfg.family]
    if cfg.method not in (None, "det") and cfg.method != method:
        raise UsageError(f"family {cfg.family} pairs with method {method}")
    if cfg.family == "T1":
        unc = _sampling_uncertainty(cfg, net)
        keep = _keep(cfg, net, ptdf, fc, "det", None)
    else:
        unc = _uncertainty(cfg, net, method)
        keep = _keep(cfg, net, ptdf, fc, method, unc)
    if cfg.n < 1:
        raise UsageError("--n must be at least 1")
    R = sample_realizations(unc, net, fc, cfg.n, cfg.seed)
    rep = validate_reduced(cfg.family, net, ptdf, fc, unc, keep, R, seed=cfg.seed, threads=cfg.threads)
    if rep.config.get("first_stage_status") not in (None, "optimal"):
        raise ModelInfeasible(f"reduced {cfg.family} first-stage model is {rep.config['first_stage_status']}")
    stdout.write(rep.to_csv())
    d = _out_dir(cfg)
    if d is not None:
        (d / "validation.json").write_text(rep.to_json(timing=False) + "\n")
        (d / "validation.csv").write_text(rep.to_csv())
        (d / "keep.json").write_text(keep_to_json(keep) + "\n")
    return EXIT_OK


def _sampling_uncertainty(cfg, net):
    """T1 samples from whichever uncertainty description was given (none: the forecast itself)."""
    if cfg.sigma is not None:
        return _uncertainty(cfg, net, "cc") if cfg.eps_x is not None else GaussianUncertainty.from_sigma(
            net, cfg.sigma[0] if len(cfg.sigma) == 1 else cfg.sigma, 0.5)
    if cfg.beta1 is not None:
        return _uncertainty(cfg, net, "ro")
    return None


def cmd_area(cfg, stdout) -> int:
    if not cfg.partition or not Path(cfg.partition).exists():
        raise UsageError("area needs an existing --partition file")
    net = _network(cfg)
    try:
        part = AreaPartition.from_json(Path(cfg.partition).read_text())
        part.validate(net)
    except CaseError as exc:
        raise UsageError(str(exc)) from None
    fc = _forecast(cfg, net)
    union, per_area = union_screen(net, fc, part, cfg.threads)
    whole = screen_whole_angle(net, fc, threads=cfg.threads)
    _write_result(union, cfg, "union", stdout)
    d = _out_dir(cfg)
    if d is not None:
        (d / "whole.csv").write_text(whole.to_csv())
        for a, r in per_area.items():
            (d / f"area{a}.csv").write_text(r.to_csv())
    print(f"non-redundant: whole {whole.non_redundant_count}, union {union.non_redundant_count}",
          file=sys.stderr)
    if cfg.with_policies:
        doc = json.loads(Path(cfg.ps_file).read_text()) if cfg.ps_file else {}
        status = EXIT_OK
        for a in part.areas:
            buses = part.buses(a)
            spec = doc.get(str(a))
            if spec is None:
                lo = [0.8 * fc[net.bus_index(b)] for b in buses]
                hi = [1.2 * fc[net.bus_index(b)] for b in buses]
                ps = ParameterSet.box(np.minimum(lo, hi), np.maximum(lo, hi))
            else:
                ps = ParameterSet.box(spec["lo"], spec["hi"]) if "lo" in spec else ParameterSet.from_dict(spec)
            pset = area_policy(net, part, a, ps, fc, buses, region_cap=cfg.region_cap, threads=cfg.threads)
            if d is not None:
                (d / f"area{a}_policy.json").write_text(pset.to_json() + "\n")
            if pset.partial:
                status = EXIT_OVERFLOW
        return status
    return EXIT_OK


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = make_config(args)
        if args.command == "ptdf":
            return cmd_ptdf(cfg, stdout)
        if args.command == "screen":
            return cmd_screen(cfg, stdout)
        if args.command == "mplp":
            return cmd_mplp(cfg, args.action, stdout)
        if args.command == "validate":
            return cmd_validate(cfg, stdout)
        if args.command == "area":
            return cmd_area(cfg, stdout)
        raise UsageError(f"unknown command {args.command}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CaseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScreeningInfeasible, StructuralInfeasibility, ModelInfeasible) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except LpError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
