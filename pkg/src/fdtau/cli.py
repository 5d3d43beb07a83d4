"""Command-line front end.

Subcommands::

    fdtau test-dense CURVES.csv RESPONSES.csv [--out report.json]
    fdtau test-sparse LONG.csv RESPONSES.csv [--k 3] [--grid-size 51]
    fdtau simulate --design sim1 --case 1 --n 300 --delta 0 --reps 300 --seed 1
    fdtau simulate --scenario cells.txt --out table.csv
    fdtau export-sim --design sim2 --n 100 --seed 3 DATA.csv RESPONSES.csv

Exit codes: 0 on success (whatever the p-value), 2 for input or validation
errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import sys
from typing import List, Optional

import numpy as np

from . import io, nulldist, pipeline
from .domain import NumericalError, ValidationError
from .pace import SmootherConfig
from .simgen import ScenarioConfig, generate, power_study, read_scenarios

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SIM_COLUMNS = ("design", "case", "n", "p", "delta", "alpha", "rejection_rate", "se",
               "replicates", "failed", "runtime")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _common_test_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fve", type=float, default=0.95,
                   help="fraction of variance the retained null eigenvalues must explain")
    p.add_argument("--mc-draws", type=int, default=nulldist.DEFAULT_DRAWS,
                   help="Monte Carlo draws from the null mixture")
    p.add_argument("--seed", type=_seed, default=None,
                   help="seed for every random choice (drawn from entropy if omitted)")
    p.add_argument("--alpha", type=float, default=None,
                   help="also report the critical value and the decision at this level")
    p.add_argument("--threads", type=_positive_int, default=1,
                   help="worker cap; results do not depend on it")
    p.add_argument("--out", default=None, help="JSON report path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdtau",
        description="Rank-based association tests between a scalar and a functional variable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("test-dense", help="test curves observed on a shared grid")
    d.add_argument("curves", help="wide CSV: grid row, then one curve per row")
    d.add_argument("responses", help="single-column CSV of responses in curve order")
    _common_test_flags(d)

    s = sub.add_parser("test-sparse", help="test sparse, noisy longitudinal data")
    s.add_argument("observations", help="long CSV with header subject_id,time,value")
    s.add_argument("responses", help="CSV with header subject_id,response")
    s.add_argument("--grid-size", type=int, default=51, help="output grid size")
    s.add_argument("--k", type=_positive_int, default=None,
                   help="number of components (default: cross-validation)")
    _common_test_flags(s)

    m = sub.add_parser("simulate", help="run seeded power studies")
    m.add_argument("--scenario", default=None,
                   help="file with one 'key=value ...' scenario per line")
    m.add_argument("--design", default="sim1")
    m.add_argument("--case", type=int, default=1)
    m.add_argument("--n", type=int, default=300)
    m.add_argument("--p", type=int, default=5)
    m.add_argument("--delta", type=float, default=0.0)
    m.add_argument("--reps", type=int, default=300)
    m.add_argument("--alpha", type=float, default=0.05)
    m.add_argument("--seed", type=_seed, default=0)
    m.add_argument("--fve", type=float, default=0.95)
    m.add_argument("--mc-draws", type=int, default=nulldist.DEFAULT_DRAWS)
    m.add_argument("--threads", type=_positive_int, default=1,
                   help="parallel replicates; results do not depend on it")
    m.add_argument("--out", default=None, help="CSV output path (default: stdout)")

    e = sub.add_parser("export-sim", help="write one simulated data set as CSV")
    e.add_argument("data", help="curves (sim1) or long-format observations")
    e.add_argument("responses")
    e.add_argument("--design", default="sim1")
    e.add_argument("--case", type=int, default=1)
    e.add_argument("--n", type=int, default=300)
    e.add_argument("--p", type=int, default=5)
    e.add_argument("--delta", type=float, default=0.0)
    e.add_argument("--seed", type=_seed, default=0)
    return parser


def _report_dict(report, seed: int) -> dict:
    diag = report.diagnostics
    out = {
        "statistic": report.statistic,
        "eigenvalues": list(report.eigenvalues_used.retained),
        "d": diag["d"],
        "p_value": report.p_value,
        "mc_se": report.p_value_mc_se,
        "seed": seed,
        "n": diag["n"],
        "m": diag["m"],
    }
    return out


def _add_alpha(out: dict, report, alpha: Optional[float]) -> None:
    if alpha is not None:
        out["critical_value"] = report.alpha_critical
        out["reject"] = bool(report.statistic > report.alpha_critical)


def _summary(out: dict) -> str:
    line = (f"T={out['statistic']:.6g}  d={out['d']}  "
            f"p={out['p_value']:.4g} ± {out['mc_se']:.2g}")
    if "K" in out:
        line += f"  K={out['K']} ({out['K_mode']})  sigma2={out['sigma2']:.4g}"
    if "reject" in out:
        line += f"  reject={'yes' if out['reject'] else 'no'}"
    return line


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        io.write_text(path, text)


def _check_test_flags(args) -> None:
    if not 0 < args.fve <= 1:
        raise ValidationError("--fve must lie in (0, 1]")
    if args.mc_draws < nulldist.MIN_DRAWS:
        raise ValidationError(f"--mc-draws must be at least {nulldist.MIN_DRAWS}")
    if args.alpha is not None and not 0 < args.alpha < 1:
        raise ValidationError("--alpha must lie in (0, 1)")


def cmd_test_dense(args) -> int:
    _check_test_flags(args)
    sample = io.read_dense(args.curves, args.responses)
    seed = pipeline.new_seed() if args.seed is None else args.seed
    report = pipeline.dense_test(sample, fve=args.fve, draws=args.mc_draws, seed=seed,
                                 alpha=args.alpha, workers=args.threads)
    out = _report_dict(report, seed)
    _add_alpha(out, report, args.alpha)
    _emit(io.dumps_report(out), args.out)
    print(_summary(out), file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def cmd_test_sparse(args) -> int:
    _check_test_flags(args)
    cfg = SmootherConfig(output_grid_size=args.grid_size)
    sample = io.read_sparse(args.observations, args.responses)
    seed = pipeline.new_seed() if args.seed is None else args.seed
    K = "cv" if args.k is None else args.k
    report = pipeline.sparse_test(sample, cfg, fve=args.fve, draws=args.mc_draws, seed=seed,
                                  alpha=args.alpha, K=K, workers=args.threads)
    diag = report.diagnostics
    out = _report_dict(report, seed)
    out.update(K=diag["K"], K_mode=diag["K_mode"], sigma2=diag["sigma2"],
               output_grid_size=diag["output_grid_size"])
    _add_alpha(out, report, args.alpha)
    _emit(io.dumps_report(out), args.out)
    print(_summary(out), file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def _scenarios(args) -> List[ScenarioConfig]:
    if args.scenario is not None:
        with open(args.scenario) as fh:
            return read_scenarios(fh.read())
    return [ScenarioConfig(design=args.design, case=args.case, n=args.n, p=args.p,
                           delta=args.delta, replicates=args.reps, alpha=args.alpha,
                           seed=args.seed)]


def cmd_simulate(args) -> int:
    scenarios = _scenarios(args)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIM_COLUMNS)
    for cfg in scenarios:
        res = power_study(cfg, draws=args.mc_draws, fve=args.fve, workers=args.threads)
        w.writerow([cfg.design, cfg.case, cfg.n, cfg.p, cfg.delta, cfg.alpha,
                    "%.6g" % res.rejection_rate, "%.6g" % res.se, res.replicates,
                    res.failed, "%.3f" % res.runtime])
        for msg in res.errors:
            print(f"warning: {msg}", file=sys.stderr)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_export_sim(args) -> int:
    cfg = ScenarioConfig(design=args.design, case=args.case, n=args.n, p=args.p,
                         delta=args.delta, replicates=1, seed=args.seed)
    sample = generate(cfg, np.random.default_rng(cfg.seed))
    if cfg.design == "sim1":
        io.write_dense(sample, args.data, args.responses)
    else:
        io.write_sparse(sample, args.data, args.responses)
    return EXIT_OK


COMMANDS = {
    "test-dense": cmd_test_dense,
    "test-sparse": cmd_test_sparse,
    "simulate": cmd_simulate,
    "export-sim": cmd_export_sim,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, OSError, csv.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
