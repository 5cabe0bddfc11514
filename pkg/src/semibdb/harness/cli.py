"""``bdb <mode> --config <path> [--out <dir>] [--threads N]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from semibdb.errors import BDBError
from semibdb.harness.config import MODES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdb", description="Boltzmann-Dirac-Benney kinetic experiments")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--out", default=None, help="output directory (default: ./<config-stem>_<mode>)")
    parser.add_argument("--threads", type=int, default=1, help="worker slots for independent runs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("bdb: --threads must be >= 1", file=sys.stderr)
        return 2
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    from semibdb.harness.scenario import scenario_run

    try:
        manifest = scenario_run(args.config, mode=args.mode, out_dir=args.out, threads=args.threads)
    except BDBError as exc:
        print(f"bdb: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for entry in manifest.files:
        print(f"{entry['sha256'][:12]}  {entry['name']}")
    print(f"{args.mode} finished in {manifest.wall_time:.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
