"""Command-line interface: ``nndeflate {solve,deflate,campaign,verify,list,export}``.

Exit codes: 0 solution admitted / command succeeded, 1 trained but not
admitted, 2 usage or configuration error, 3 divergence or collapse onto a
deflation source.

Seeds: ``--seed s`` initialises the network(s) with seed ``s`` and drives
the per-iteration batches with run seed ``s``; campaigns derive one seed
per run with ``registry.sub_seed(s, stage, J, k)``.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .deflation import DeflationSource, ShiftSchedule
from .errors import ConfigurationError, NNDeflateError, NumericDomainError, TrainingError
from .optim import TrainConfig, train
from .problems import get_problem, problem_names
from .registry import (CANONICAL_SEED, DEFAULT_ATOL, DEFAULT_DELTA, DEFAULT_THRESHOLD,
                       VERIFY_SAMPLES, CampaignConfig, Registry, boundary_error, distance,
                       export_csv, residual_stats, run_campaign)

EXIT_OK, EXIT_REJECTED, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Everything a solve/deflate run needs; mirrors the JSON config file."""

    problem: str = None
    seed: int = 0
    iters: int = None
    points: int = None
    lr: list = None                 # [q0, q1] powers of ten
    alpha: float = None
    alpha_range: list = None        # [lo, hi] shift values
    sources: list = field(default_factory=list)
    powers: list = field(default_factory=list)
    probing: str = None             # family name; None = problem default
    J: int = None
    c_range: list = None
    penalty: float = None           # None = exact wrapper
    threshold: float = DEFAULT_THRESHOLD
    delta: float = DEFAULT_DELTA
    registry: str = None

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.problem is None:
            raise ConfigurationError("no problem given")
        if self.lr is not None:
            if len(self.lr) != 2 or self.lr[0] < self.lr[1]:
                raise ConfigurationError("learning-rate powers must decay (q0 >= q1)")
        if self.alpha is not None and self.alpha_range is not None:
            raise ConfigurationError("give --alpha or --alpha-range, not both")
        if self.alpha_range is not None:
            lo, hi = self.alpha_range
            if not 0 < lo <= hi:
                raise ConfigurationError("shift range must be positive and nondecreasing")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigurationError("alpha must be non-negative")
        if self.powers and len(self.powers) not in (1, len(self.sources)):
            raise ConfigurationError("give one power, or one per source")
        if any(p <= 0 for p in self.powers):
            raise ConfigurationError("deflation powers must be positive")
        if self.penalty is not None and self.penalty < 0:
            raise ConfigurationError("penalty weight must be non-negative")
        if self.J is not None and self.J < 1:
            raise ConfigurationError("J must be >= 1")
        if self.iters is not None and self.iters < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.points is not None and self.points < 1:
            raise ConfigurationError("points must be >= 1")
        return self


def _floats(value):
    if isinstance(value, str):
        return [float(v) for v in value.split(",") if v.strip()]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(v) for v in value]


def parse_lr(text):
    """``-2,-3`` (powers) or ``1e-3,1e-2`` (table range) -> [q0, q1]."""
    vals = _floats(text)
    if len(vals) != 2:
        raise ConfigurationError("--lr takes two values")
    if all(v > 0 for v in vals):
        lo, hi = sorted(vals)
        return [float(np.log10(hi)), float(np.log10(lo))]
    if vals[0] < vals[1]:
        raise ConfigurationError("learning-rate powers must decay (q0 >= q1)")
    return vals


def _ids(value):
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value]


def parse_range(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise ConfigurationError("range takes two comma-separated values")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser():
    p = _Parser(prog="nndeflate", description="Neural-network deflation solver.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, with_problem=True):
        if with_problem:
            sp.add_argument("problem", nargs="?")
        sp.add_argument("--config", help="flat JSON file of run settings")
        sp.add_argument("--registry", help="registry root (default $NNDEFLATE_REGISTRY)")
        sp.add_argument("--seed", type=int)

    for name in ("solve", "deflate"):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--points", type=int)
        sp.add_argument("--lr", help="q0,q1 powers or lo,hi table range")
        sp.add_argument("--penalty", type=float, help="penalty weight; bare network")
        sp.add_argument("--probing", help="probing family")
        sp.add_argument("--J", type=int, help="number of probing functions")
        sp.add_argument("--c-range", dest="c_range", help="lo,hi for the initial c_J")
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--delta", type=float)
        if name == "deflate":
            sp.add_argument("--sources", help="comma-separated record ids")
            sp.add_argument("--powers", help="comma-separated deflation powers")
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--alpha-range", dest="alpha_range", help="lo,hi varying shift")

    sp = sub.add_parser("campaign")
    common(sp)
    sp.add_argument("--max-solutions", dest="max_solutions", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--points", type=int)

    sp = sub.add_parser("verify")
    common(sp, with_problem=False)
    sp.add_argument("record")
    sp.add_argument("--problem")
    sp.add_argument("--samples", type=int, default=VERIFY_SAMPLES)

    sp = sub.add_parser("list")
    common(sp, with_problem=False)
    sp.add_argument("problem", nargs="?")

    sp = sub.add_parser("export")
    common(sp, with_problem=False)
    sp.add_argument("record")
    sp.add_argument("--problem")
    sp.add_argument("--grid", required=True, help="a:b:n per axis, comma-separated")
    sp.add_argument("--out", help="output file (default stdout)")
    return p


def run_config(args):
    """Merge config file and flags (flags win) into a validated RunConfig."""
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
    conv = {"lr": parse_lr, "alpha_range": parse_range, "c_range": parse_range,
            "sources": _ids, "powers": _floats}
    data = {k: conv[k](v) if k in conv and v is not None else v for k, v in data.items()}
    cfg = RunConfig.from_dict(data)
    flags = vars(args)
    for f in fields(RunConfig):
        val = flags.get(f.name)
        if val is not None:
            setattr(cfg, f.name, conv[f.name](val) if f.name in conv else val)
    return cfg.validate()


def _print(out, *parts):
    print(*parts, file=out)


def _registry(cfg_or_args):
    return Registry(getattr(cfg_or_args, "registry", None))


def _shift(cfg, n_iter):
    if cfg.alpha_range is not None:
        return ShiftSchedule.from_range(cfg.alpha_range[0], cfg.alpha_range[1], n_iter)
    return ShiftSchedule.constant(1.0 if cfg.alpha is None else cfg.alpha)


def cmd_solve(cfg, out, deflate=False):
    problem = get_problem(cfg.problem)
    reg = _registry(cfg)
    d = problem.defaults
    n_iter = d.get("n_iter", 2000) if cfg.iters is None else cfg.iters
    n_points = d.get("n_points", 256) if cfg.points is None else cfg.points
    lr = tuple(cfg.lr) if cfg.lr is not None else tuple(d.get("lr", (-2.0, -3.0)))
    exact = cfg.penalty is None
    if cfg.probing is not None and problem.probing and cfg.probing != problem.probing["family"]:
        raise ConfigurationError(f"{problem.name} supports {problem.probing['family']} probing")
    J = cfg.J if cfg.J is not None else (1 if cfg.probing else None)
    model = problem.make_model(cfg.seed, probing_J=J, c_range=cfg.c_range, exact=exact)

    sources, src_info = [], []
    if deflate:
        if not cfg.sources:
            raise ConfigurationError("deflate needs --sources")
        powers = cfg.powers or [2.0]
        if len(powers) == 1:
            powers = powers * len(cfg.sources)
        for sid, pw in zip(cfg.sources, powers):
            rec = reg.get(sid, problem.name)
            sources.append(DeflationSource(rec.load_model(), pw, label=rec.id))
            src_info.append({"id": rec.id, "power": pw})
    if exact:
        mode = "system_nd" if problem.n_fields == 2 else ("nd" if deflate else "ls")
    else:
        mode = "nd_penalty" if deflate else "penalty"
    shift = _shift(cfg, n_iter)
    tcfg = TrainConfig(mode=mode, n_iter=n_iter, n_points=n_points, lr=lr, shift=shift,
                       sources=sources, penalty=cfg.penalty or 0.0)
    report = train(problem, model, tcfg, run_seed=cfg.seed)
    fitted = report.model

    res, se = residual_stats(problem, fitted)
    bc = boundary_error(problem, fitted)
    _print(out, f"residual {res:.6g}")
    if not exact:
        _print(out, f"boundary-mismatch {bc:.6g}")
    known = [(r, r.load_model()) for r in reg.records(problem.name)
             if r.constants == problem.constants]
    dists = {r.id: distance(m, fitted, problem=problem) for r, m in known}
    for sid in [s["id"] for s in src_info]:
        _print(out, f"distance-to-{sid} {dists[sid][0]:.6g}")

    reasons = []
    if not res < cfg.threshold:
        reasons.append(f"residual {res:.3g} >= {cfg.threshold:g}")
    if not bc < cfg.threshold:
        reasons.append(f"boundary mismatch {bc:.3g} >= {cfg.threshold:g}")
    for rid, (rel, ab) in dists.items():
        if not (rel > cfg.delta and ab > DEFAULT_ATOL):
            reasons.append(f"within {rel:.3g} of {rid}")
    if reasons:
        _print(out, "not admitted: " + "; ".join(reasons))
        return EXIT_REJECTED
    info = {"mode": mode, "n_iter": n_iter, "n_points": n_points, "lr": list(lr),
            "shift": shift.to_dict(), "sources": src_info, "seed": cfg.seed,
            "penalty": cfg.penalty, "probing_J": J}
    if model.meta.get("initial_probing_coeffs"):
        info["initial_probing_coeffs"] = model.meta["initial_probing_coeffs"]
    rec = reg.add(problem, fitted, info, res, se, stage="deflate" if deflate else "solve")
    _print(out, f"admitted {rec.id}")
    return EXIT_OK


def cmd_campaign(args, out):
    cfg = run_config(args)
    problem = get_problem(cfg.problem)
    overrides = {"jobs": args.jobs}
    if args.max_solutions is not None:
        overrides["max_solutions"] = args.max_solutions
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if args.delta is not None:
        overrides["delta"] = args.delta
    camp = CampaignConfig.for_problem(problem, **overrides)
    if cfg.iters is not None or cfg.points is not None:
        for name in ("ls", "nd", "probe", "probe_vs"):
            st = getattr(camp, name)
            st = replace(st, n_iter=cfg.iters if cfg.iters is not None else st.n_iter,
                         n_points=cfg.points if cfg.points is not None else st.n_points)
            camp = replace(camp, **{name: st})
    recs = run_campaign(problem, camp, run_seed=cfg.seed, registry=_registry(cfg))
    for r in recs:
        _print(out, f"{r.id} stage={r.stage} residual={r.residual:.6g}")
    _print(out, f"{len(recs)} solutions admitted")
    return EXIT_OK


def cmd_verify(args, out):
    rec = _registry(args).get(args.record, args.problem)
    seed = CANONICAL_SEED if args.seed is None else args.seed
    res, se = residual_stats(rec.get_problem(), rec.load_model(), args.samples, seed)
    _print(out, f"{rec.problem}/{rec.id} residual {res:.10g} (stored {rec.residual:.10g})")
    return EXIT_OK


def cmd_list(args, out):
    reg = _registry(args)
    probs = [args.problem] if args.problem else reg.problems()
    for name in probs:
        for r in reg.records(name):
            srcs = ",".join(f"{s['id']}^{s['power']:g}" for s in r.sources) or "-"
            _print(out, f"{r.problem}/{r.id}\t{r.stage}\tresidual={r.residual:.4g}\tsources={srcs}")
    return EXIT_OK


def cmd_export(args, out):
    rec = _registry(args).get(args.record, args.problem)
    if args.out:
        n = export_csv(rec, args.out, args.grid)
        _print(out, f"wrote {n} rows to {args.out}")
    else:
        export_csv(rec, out, args.grid)
    return EXIT_OK


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s")
        if args.command is None:
            raise ConfigurationError("choose a command: solve, deflate, campaign, "
                                     "verify, list, export")
        if args.command in ("solve", "deflate"):
            cfg = run_config(args)
            return cmd_solve(cfg, out, deflate=args.command == "deflate")
        return {"campaign": cmd_campaign, "verify": cmd_verify, "list": cmd_list,
                "export": cmd_export}[args.command](args, out)
    except (TrainingError, NumericDomainError) as exc:
        it = getattr(exc, "iteration", None)
        print(f"error: {exc}" + (f" (iteration {it})" if it is not None else ""), file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigurationError, NNDeflateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigurationError) and "unknown problem" in str(exc):
            print("problems: " + ", ".join(problem_names()), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
