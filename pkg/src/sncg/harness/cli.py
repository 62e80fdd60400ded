"""Command-line front end.

    sncg run CONFIG [key=value ...]
    sncg summarize CSV [CSV ...] [-o OUT]
    sncg verify TRACE_OR_DIR [...]
    sncg list-problems

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..problems import PROBLEM_KINDS
from .experiment import ConfigError, load_experiment
from .runner import format_summary, run_experiment, summarize, verify_paths

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

_CONSTANTS = {
    "quadratic": "L1 = max|lam|, L2 = hessian_lipschitz (free), G = max noise norm, "
                 "Delta = f(x0) - min over box",
    "quartic": "L1 = max|w| max(3R^2-1, 1), L2 = 6R max|wbar|, "
               "G = max|w_k - wbar| max|t^3-t|, Delta = f(x0) + sum(wbar)/4",
    "pca": "L1 = max(3R^2, 1), L2 = 6R, G = R max|C - a a'|, Delta = f(x0) + mu_max^2/4",
    "file": "declared in the JSON sidecar (G estimated at x0 when omitted)",
}


def _cmd_run(args) -> int:
    try:
        exp = load_experiment(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out, outcomes = run_experiment(exp)
    failed = [o for o in outcomes if o.error]
    for o in failed:
        print(f"run failed: {o.problem}/{o.algorithm}/seed{o.seed}: {o.error}", file=sys.stderr)
    print(f"{len(outcomes)} runs written to {out}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_summarize(args) -> int:
    try:
        rows = summarize(args.csv)
    except (FileNotFoundError, KeyError) as exc:
        print(f"summarize: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = format_summary(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_verify(args) -> int:
    errors = verify_paths(args.paths, recompute=not args.no_recompute)
    for e in errors:
        print(e, file=sys.stderr)
    if errors:
        return EXIT_VERIFY
    print(f"verified {len(args.paths)} path(s): OK")
    return EXIT_OK


def _cmd_list(args) -> int:
    for kind, text in PROBLEM_KINDS.items():
        print(f"{kind:10s} {text}")
        print(f"{'':10s}   constants: {_CONSTANTS[kind]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sncg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute an experiment config")
    p.add_argument("config")
    p.add_argument("overrides", nargs="*", help="dotted key=value overrides")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("summarize", help="aggregate summary CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("verify", help="re-check traces or experiment directories")
    p.add_argument("paths", nargs="+")
    p.add_argument("--no-recompute", action="store_true",
                   help="skip exact re-evaluation of the final iterate")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("list-problems", help="show built-in problems")
    p.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
