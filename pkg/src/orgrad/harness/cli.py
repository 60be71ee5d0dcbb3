"""Command line: ``orgrad <experiment> --config FILE [--seed N] [--out DIR] [--reproducible]``.

Every configuration key is also accepted as ``--key VALUE`` and takes
precedence over the file.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import OrgradError
from .config import EXPERIMENTS, PARSERS, build_config, read_ini
from .experiments import run_experiment

RESERVED = ("experiment", "seed", "out", "reproducible")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orgrad", description="Online Riemannian gradient experiments.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="INI file; keys come from [DEFAULT] and [<experiment>]")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--reproducible", action="store_true", default=None,
                        help="omit the timestamp metadata line")
    keys = parser.add_argument_group("configuration keys")
    for key in sorted(PARSERS):
        if key in RESERVED:
            continue
        keys.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="VALUE")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ini = read_ini(args.config, args.experiment) if args.config else {}
        overrides = {k: v for k, v in vars(args).items()
                     if k not in ("experiment", "config") and v is not None}
        cfg = build_config(args.experiment, ini, overrides)
        result = run_experiment(cfg)
    except (OrgradError, OSError) as exc:
        print(f"orgrad: error: {exc}", file=sys.stderr)
        return 2
    for row in result.summary:
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    for path in result.artifacts:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
