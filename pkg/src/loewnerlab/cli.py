"""Command-line entry point: ``loewnerlab <subcommand> [flags]``.

Exit status is 0 when every hard check of the selected experiment passes,
1 when a check fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction

from . import lab

SUBCOMMANDS = {
    "phase-scan": "phase_scan",
    "boundary": "boundary_class",
    "mirror": "mirror",
    "excursion-hull": "excursion_hull",
    "lambda": "lambda",
    "dist-test": "distribution_test",
    "trace-svg": "trace_render",
}


def _kappa_list(text):
    try:
        return [float(Fraction(s.strip())) for s in text.split(",") if s.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"cannot parse kappa list {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config (default: shipped config)")
    common.add_argument("--seed", type=int, metavar="N", help="override the base seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--workers", type=int, metavar="N", help="worker processes")
    common.add_argument("--dt", type=float, metavar="F", help="override the time step")
    common.add_argument("--kappa", type=_kappa_list, metavar="LIST", help="comma-separated kappas, e.g. 2,8/3,6")
    common.add_argument("-q", "--quiet", action="store_true", help="only print the pass/fail lines")
    p = argparse.ArgumentParser(prog="loewnerlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=f"run the {kind} experiment")
    sub.add_parser("all", parents=[common], help="run every config in a directory (--config DIR)")
    return p


def _default_config(kind):
    return lab.shipped_config_dir() / f"{kind}.json"


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    overrides = dict(seed=args.seed, workers=args.workers, dt=args.dt, kappas=args.kappa)
    try:
        if args.command == "all":
            reports, agg = lab.run_all(args.config, args.out, **overrides)
            for rep in reports:
                for line in rep.summary_lines():
                    print(line)
            return 0 if agg["passed"] else 1
        kind = SUBCOMMANDS[args.command]
        if args.config:
            cfg = lab.load_config(args.config)
        else:
            src = _default_config(kind)
            cfg = lab.parse_config(src.read_text(), str(src))
        if cfg.kind != kind:
            raise lab.ConfigError([f"kind: config is {cfg.kind!r} but subcommand expects {kind!r}"], args.config)
        cfg = lab.with_overrides(cfg, out=args.out, **overrides)
        rep = lab.run_experiment(cfg)
    except lab.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for line in rep.summary_lines():
        print(line)
    return 0 if rep.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
