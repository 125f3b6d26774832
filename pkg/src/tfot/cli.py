"""Command-line entry point: ``simulate``, ``fit``, ``bench`` and ``metrics``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import ExperimentSpec, SpecError, format_summary, recompute_metrics, run_experiment
from .scenario import load_scenario, simulate_run, write_scans_csv
from .solvers import REFERENCE_SOLVERS, fit_window, parse_solver
from .wls import FitWindow

DEFAULT_SOLVERS = list(REFERENCE_SOLVERS)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="builtin:single_target",
                   help="scenario YAML path or builtin:<name> (single_target, two_targets)")
    p.add_argument("--seed", type=int, default=None, help="seed base (default: scenario seed)")


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.scenario)
    seed = cfg.seed if args.seed is None else args.seed
    truth, scans = simulate_run(cfg, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scans_csv(scans, out / "scans.csv")
    with open(out / "truth.csv", "w") as fh:
        fh.write("target,step,x,y\n")
        for i in range(truth.shape[0]):
            for k in range(truth.shape[1]):
                fh.write(f"{i},{k + 1},{truth[i, k, 0]!r},{truth[i, k, 1]!r}\n")
    print(f"wrote {len(scans)} scans to {out / 'scans.csv'}")
    return 0


def cmd_fit(args) -> int:
    """Fit one window read from CSV (columns t, x, y) or taken from a simulated run."""
    scfg = parse_solver(args.solver)
    if args.window_csv:
        data = np.loadtxt(args.window_csv, delimiter=",", skiprows=1, ndmin=2)
        times, meas = data[:, 0], data[:, 1:]
        var = args.variance
    else:
        cfg = load_scenario(args.scenario)
        seed = cfg.seed if args.seed is None else args.seed
        _, scans = simulate_run(cfg, seed)
        k = args.step if args.step is not None else cfg.window
        sel = scans[max(0, k - cfg.window):k]
        times = np.array([s.time for s in sel])
        meas = np.array([s.points[s.labels == 0][0] for s in sel])
        var = cfg.measurement.noise_cov
    window = FitWindow(times, meas, var if np.ndim(var) else float(var))
    res = fit_window(window, scfg)
    print(json.dumps(res.summary(), indent=2, default=float))
    return 0


def cmd_bench(args) -> int:
    cfg = load_scenario(args.scenario)
    spec = ExperimentSpec(cfg, args.solver or DEFAULT_SOLVERS, args.runs, Path(args.out), args.seed,
                          args.workers, args.strict_theory)
    try:
        result = run_experiment(spec)
    except SpecError as exc:
        print(f"invalid experiment: {exc}", file=sys.stderr)
        return 2
    for d in result["diagnostics"]:
        print(d, file=sys.stderr)
    print(format_summary(cfg, result["summary"], result["timing"]), end="")
    if result["failures"]:
        print(f"{len(result['failures'])} solver failures recorded in manifest.json", file=sys.stderr)
    return 0


def cmd_metrics(args) -> int:
    cfg = load_scenario(args.scenario)
    result = recompute_metrics(Path(args.runs_dir), cfg)
    print(json.dumps(result["summary"], indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfot", description="Regularised polynomial trajectory fitting experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one run and write scans.csv and truth.csv")
    _add_common(p)
    p.add_argument("--out", default="out/simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a single window and print the result")
    _add_common(p)
    p.add_argument("--solver", default="orls", help="fixed:<order> | orls | l0[:k=v,...] | l1[:k=v,...]")
    p.add_argument("--window-csv", help="CSV with header and columns t,x,y")
    p.add_argument("--variance", type=float, default=1.0, help="measurement variance for --window-csv")
    p.add_argument("--step", type=int, help="last step of the window taken from the simulated run")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="Monte-Carlo comparison of solvers")
    _add_common(p)
    p.add_argument("--solver", action="append", help="repeatable; default is the reference set fixed:1 fixed:2 orls l1 l0")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--out", default="out/bench")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict-theory", action="store_true", help="turn step-size bound violations into errors")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="recompute metrics from stored runs")
    _add_common(p)
    p.add_argument("runs_dir", help="directory holding run_*.npz files (bench output/runs)")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
