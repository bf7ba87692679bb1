"""Command-line front end.

Exit codes: 0 on success, 2 when a check fails, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .algebraic import exact_product_entropy, pingpong_certify, splitting_rate_bound
from .certificate import Budgets, full_report, large_element_certificate
from .checks import property_suite, run_suite, suite_failed
from .circle import CircleMeasure, arc_mass_max, order_k_detail
from .config import RunConfig, env_default, parse_config
from .constants import SCHEMA_VERSION
from .errors import ArcsOverlap, FurstenbergError, ParameterOutOfScope, ParseError
from .sl2 import PI, batch_cartan
from .walks import estimate_lyapunov, estimate_stationary, renewal_experiment

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


def build_id() -> str:
    """git-describe style identifier of the source tree, or the package version outside a checkout."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
        return f"{__version__}+{out}" if out else __version__
    except (OSError, subprocess.SubprocessError):
        return __version__


def _num(x):
    """JSON-safe number: non-finite floats become strings."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_num(v) for v in x]
    return x


def envelope(command: str, cfg: RunConfig, result) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "build_id": build_id(),
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "result": _num(result),
    }


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _provenance(cfg: RunConfig, command: str) -> str:
    meta = json.dumps({"schema_version": SCHEMA_VERSION, "build_id": build_id(), "command": command,
                       "seed": cfg.seed, "config": cfg.to_json()}, sort_keys=True)
    return f"# {meta}\n"


def _csv_text(cfg: RunConfig, command: str, header: str, rows) -> str:
    lines = [_provenance(cfg, command).rstrip("\n"), header]
    lines += [",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


class Output:
    """Collects files for --out and prints the main document to stdout."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg, self.command = cfg, command
        self.dir = Path(cfg.out) if cfg.out else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def report(self, result) -> dict:
        doc = envelope(self.command, self.cfg, result)
        text = dumps(doc)
        sys.stdout.write(text)
        if self.dir:
            (self.dir / f"{self.command}.json").write_text(text, encoding="utf-8")
        return doc

    def csv(self, name: str, header: str, rows):
        if self.dir:
            (self.dir / name).write_text(_csv_text(self.cfg, self.command, header, rows), encoding="utf-8")


# ---------------------------------------------------------------- subcommands

def cmd_example(args, cfg):
    spec = cfg.build_measure()
    sys.stdout.write(dumps(spec.to_json()))
    return EXIT_OK


def cmd_lyapunov(args, cfg):
    spec = cfg.build_measure()
    est = estimate_lyapunov(spec, args.steps, args.lyapunov_samples, cfg.seed, cfg.workers)
    Output(cfg, "lyapunov").report(asdict(est))
    return EXIT_OK


def cmd_stationary(args, cfg):
    spec = cfg.build_measure()
    est = estimate_stationary(spec, cfg.burn_in, cfg.samples, cfg.seed, cfg.workers)
    alpha, start = arc_mass_max(est.measure, args.t)
    out = Output(cfg, "stationary")
    out.report({"samples": est.samples, "burn_in": est.burn_in, "aborted": est.aborted,
                "t": args.t, "arc_mass_max": alpha, "arc_start": start})
    if out.dir:
        (out.dir / "stationary.csv").write_text(_provenance(cfg, "stationary") + est.measure.to_csv(),
                                                encoding="utf-8")
    return EXIT_OK


def cmd_detail(args, cfg):
    if args.input and args.input.endswith(".csv"):
        try:
            lam = CircleMeasure.from_csv(Path(args.input).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ParseError(f"{args.input}: {exc}") from None
    else:
        lam = estimate_stationary(cfg.build_measure(), cfg.burn_in, cfg.samples, cfg.seed, cfg.workers).measure
    value = order_k_detail(lam, args.r, args.k)
    Output(cfg, "detail").report({"r": args.r, "k": args.k, "detail": value})
    return EXIT_OK


def cmd_certificate(args, cfg):
    spec = cfg.build_measure()
    budgets = Budgets(lyapunov_steps=args.steps, lyapunov_samples=args.lyapunov_samples,
                      stationary_samples=cfg.samples, burn_in=cfg.burn_in, n_max=cfg.n_max)
    rep = full_report(spec, args.t, args.C, budgets, cfg.seed, cfg.workers)
    out = Output(cfg, "certificate")
    out.report(rep.to_json())
    out.csv("detail_decay.csv", "r,detail,beta1,beta2",
            [(d["r"], d["detail"], d["beta1"], d["beta2"]) for d in rep.detail_decay])
    if rep.holder:
        out.csv("holder.csv", "radius,max_arc_mass", list(zip(rep.holder["radii"], rep.holder["masses"])))
    return EXIT_OK


def cmd_renewal(args, cfg):
    spec = cfg.build_measure()
    v_grid = [i * PI / args.v_points for i in range(args.v_points)]
    res = renewal_experiment(spec, v_grid, args.P, cfg.runs, cfg.seed)
    out = Output(cfg, "renewal")
    out.report({"v_grid": list(res.v_grid), "P_levels": list(res.P_levels), "max_pairwise_w1": list(res.statistics),
                "std_errors": list(res.std_errors), "decreased": res.decreased})
    out.csv("renewal.csv", "P,max_pairwise_w1,std_error", list(zip(res.P_levels, res.statistics, res.std_errors)))
    return EXIT_OK if res.decreased else EXIT_CHECK_FAILED


def cmd_pingpong(args, cfg):
    spec = cfg.build_measure()
    try:
        if spec.params.get("family") == "large_element":
            cert = large_element_certificate(spec)
        else:
            t1, lam, t2 = batch_cartan(spec.matrices)
            if np.any(np.abs(np.sin(t1 - t2)) > 1e-9):
                raise ParameterOutOfScope("ping-pong certificate needs symmetric atoms R_t diag(l, 1/l) R_-t")
            cert = pingpong_certify(list(zip(t1.tolist(), lam.tolist())), args.epsilon)
    except ArcsOverlap as exc:
        Output(cfg, "pingpong").report({"certified": False, "message": str(exc), "pair": list(exc.pair or [])})
        return EXIT_CHECK_FAILED
    Output(cfg, "pingpong").report({"certified": cert.verify(), "epsilon": cert.epsilon, "min_gap": cert.min_gap,
                                    "h_rw": cert.h_rw, "arcs": [asdict(a) for a in cert.arcs]})
    return EXIT_OK


def cmd_entropy(args, cfg):
    spec = cfg.build_measure()
    env = exact_product_entropy(spec, cfg.n_max)
    height = splitting_rate_bound(spec)
    Output(cfg, "entropy").report({"entropy_envelope": list(env.values), "all_distinct": list(env.all_distinct),
                                   "support_sizes": list(env.support_sizes), "heights": asdict(height)})
    return EXIT_OK


def cmd_checks(args, cfg):
    reports = run_suite(cfg.seed) + property_suite(cfg.seed)
    out = Output(cfg, "checks")
    out.report({"failed": suite_failed(reports), "reports": [asdict(r) for r in reports]})
    if out.dir:
        lines = [json.dumps(envelope("checks", cfg, asdict(r)), sort_keys=True) for r in reports]
        (out.dir / "checks.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_CHECK_FAILED if suite_failed(reports) else EXIT_OK


COMMANDS = {
    "example": cmd_example,
    "lyapunov": cmd_lyapunov,
    "stationary": cmd_stationary,
    "detail": cmd_detail,
    "certificate": cmd_certificate,
    "renewal": cmd_renewal,
    "pingpong": cmd_pingpong,
    "entropy": cmd_entropy,
    "checks": cmd_checks,
}


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for failed checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("run options (environment overrides: FURSTENBERG_<NAME>)")
    g.add_argument("--config", help="JSON run configuration file")
    g.add_argument("--input", help="measure JSON file, or a measure CSV for 'detail'; '-' reads stdin")
    g.add_argument("--seed", type=int, default=env_default("seed", 0), help="64-bit seed (default %(default)s)")
    g.add_argument("--workers", type=int, default=env_default("workers", 1), help="worker threads (default %(default)s)")
    g.add_argument("--samples", type=int, default=env_default("samples", 100000), help="stationary samples (default %(default)s)")
    g.add_argument("--burn-in", type=int, default=env_default("burn_in", 2000), help="walk steps before sampling (default %(default)s)")
    g.add_argument("--n-max", type=int, default=env_default("n_max", 12), help="longest exact word length (default %(default)s)")
    g.add_argument("--runs", type=int, default=env_default("runs", 1000), help="runs per renewal cell (default %(default)s)")
    g.add_argument("--out", default=env_default("out", None, str), help="directory for JSON and CSV outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="furstenberg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("example", help="print an example measure as JSON")
    p.add_argument("family", choices=["two_gen", "rotational", "large_element"])
    p.add_argument("--n", type=int, default=2, help="two_gen parameter (default %(default)s)")
    p.add_argument("--a", type=int, default=5, help="rotational: rotation order (default %(default)s)")
    p.add_argument("--b", type=int, default=1, help="rotational: number of base matrices (default %(default)s)")
    p.add_argument("--entries", help="rotational: JSON list of 2x2 exact matrices")
    p.add_argument("--r", type=float, default=1.0, help="large_element: norm scale (default %(default)s)")
    p.add_argument("--n-steps", type=int, default=1, help="large_element: dyadic depth (default %(default)s)")
    _common(p)

    p = sub.add_parser("lyapunov", help="estimate the Lyapunov exponent")
    p.add_argument("--steps", type=int, default=20000, help="walk length per path (default %(default)s)")
    p.add_argument("--lyapunov-samples", type=int, default=200, help="independent paths (default %(default)s)")
    _common(p)

    p = sub.add_parser("stationary", help="sample the stationary measure")
    p.add_argument("--t", type=float, default=0.5, help="arc length for the maximal arc mass (default %(default)s)")
    _common(p)

    p = sub.add_parser("detail", help="order-k detail of a circle measure")
    p.add_argument("--r", type=float, required=True, help="scale r")
    p.add_argument("--k", type=int, default=1, help="order (default %(default)s)")
    _common(p)

    p = sub.add_parser("certificate", help="evaluate the sufficient condition for a measure")
    p.add_argument("--t", type=float, default=0.5, help="arc length for non-degeneracy (default %(default)s)")
    p.add_argument("--C", type=float, default=1.0, help="the unknown constant, user supplied (default %(default)s)")
    p.add_argument("--steps", type=int, default=20000, help="Lyapunov walk length (default %(default)s)")
    p.add_argument("--lyapunov-samples", type=int, default=200, help="Lyapunov paths (default %(default)s)")
    _common(p)

    p = sub.add_parser("renewal", help="uniformity of stopped-direction laws in v")
    p.add_argument("--v-points", type=int, default=8, help="size of the v grid (default %(default)s)")
    p.add_argument("--P", type=float, nargs="+", default=[1e2, 1e4], help="stopping thresholds (default %(default)s)")
    _common(p)

    p = sub.add_parser("pingpong", help="certify free generation by ping-pong arcs")
    p.add_argument("--epsilon", type=float, default=0.1, help="repelling arc length (default %(default)s)")
    _common(p)

    p = sub.add_parser("entropy", help="exact entropy envelope and height bound")
    _common(p)

    p = sub.add_parser("checks", help="run the analysis checks and property suites")
    _common(p)
    return parser


def config_from_args(args) -> RunConfig:
    if args.config:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = RunConfig()
    cfg.seed, cfg.workers, cfg.samples = args.seed, args.workers, args.samples
    cfg.burn_in, cfg.n_max, cfg.runs, cfg.out = args.burn_in, args.n_max, args.runs, args.out
    if args.command == "example":
        ex = {"family": args.family}
        if args.family == "two_gen":
            ex["n"] = args.n
        elif args.family == "rotational":
            ex.update(a=args.a, b=args.b)
            if args.entries:
                ex["entries"] = json.loads(args.entries)
        else:
            ex.update(r=args.r, n_steps=args.n_steps)
        cfg.example = ex
        return cfg
    if args.command == "checks":
        cfg.params = {}
        return cfg
    if args.input == "-" or (args.input is None and cfg.measure is None and cfg.example is None
                             and cfg.measure_file is None and not sys.stdin.isatty()):
        text = sys.stdin.read()
        if text.strip():
            cfg.measure = parse_config(text).measure
    elif args.input and not args.input.endswith(".csv"):
        cfg.measure = parse_config(Path(args.input).read_text(encoding="utf-8")).measure
    params = {k: v for k, v in vars(args).items()
              if k not in {"command", "config", "input", "seed", "workers", "samples", "burn_in", "n_max", "runs", "out"}}
    if args.input and args.input.endswith(".csv"):
        params["input"] = args.input
    cfg.params = params
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        if cfg.workers < 1:
            raise ParseError("--workers must be at least 1")
        return COMMANDS[args.command](args, cfg)
    except FurstenbergError as exc:
        sys.stderr.write(json.dumps({"error": {"code": exc.code, "message": str(exc)}}) + "\n")
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": {"code": "invalid_input", "message": str(exc)}}) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
