"""Run the reference Monte-Carlo experiment for one builtin scenario.

    python scripts/run_reference.py single_target --runs 50 --out out/single
    python scripts/run_reference.py two_targets --runs 50 --out out/multi
"""
from __future__ import annotations

import argparse
import sys

from tfot.cli import main


def run() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=["single_target", "two_targets"])
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = args.out or f"out/{args.scenario}"
    return main(["bench", "--scenario", f"builtin:{args.scenario}", "--runs", str(args.runs),
                 "--out", out, "--workers", str(args.workers)])


if __name__ == "__main__":
    sys.exit(run())
