"""Command-line entry point: run, simulate, sweep, verify, report.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("catalyst")


def _cmd_run(args) -> int:
    from .config import ConfigError, ExperimentConfig
    from .experiment import load_data, result_meta, run_experiment
    from .nn import NumericalError
    from .pipeline import RunLog
    from .report import emit_reports

    try:
        cfg = ExperimentConfig.load(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        if overrides:
            cfg = ExperimentConfig.from_mapping({**cfg.to_dict(), **overrides})
        data = load_data(cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    figures = cfg.figures and not args.no_figures
    runlog = RunLog()
    try:
        res = run_experiment(cfg, data, runlog)
    except NumericalError as exc:
        config = cfg.to_dict()
        config.pop("output_dir")
        meta = {"config": config, "seed": cfg.seed, "error": str(exc), "error_step": exc.step}
        emit_reports(runlog, cfg.output_dir, meta)
        print(f"numerical failure at step {exc.step}: {exc}; partial logs in {cfg.output_dir}", file=sys.stderr)
        return EXIT_NUMERIC
    emit_reports(res.runlog, cfg.output_dir, result_meta(res), figures=figures, bins=cfg.hist_bins)
    with open(os.path.join(cfg.output_dir, "summary.json")) as fh:
        summary = json.load(fh)
    print(f"pruned {summary['channels_dense'] - summary['channels_final']}/{summary['channels_dense']} channels, "
          f"speedup {summary['speedup']:.3f}x, test acc {summary['final_acc']:.2f}% "
          f"(dense baseline {summary['baseline_acc']:.2f}%)")
    print(f"logs written to {cfg.output_dir}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    from .dynamics import simulate_trajectory, state_from_ratio

    if not (args.c0 > 0 and args.lam > 0 and 0 <= args.alpha < 1 and args.steps >= 0 and args.n >= 1):
        print("config error: need c0 > 0, lambda > 0, 0 <= alpha < 1, steps >= 0, n >= 1", file=sys.stderr)
        return EXIT_CONFIG
    s0 = state_from_ratio(args.c0, args.n, args.alpha, args.lam, rng=args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        tr = simulate_trajectory(s0, args.steps, run_past_exit=args.run_past_exit)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("t", "d", "m_norm", "c"))
        for row in tr.rows():
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"outcome={tr.outcome.value} exit_step={tr.exit_step} final_c={tr.c[-1]!r}", file=sys.stderr)
    if args.plot:
        from .plotting import plot_trajectory

        plot_trajectory(tr, args.plot)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .config import ConfigError, SweepConfig
    from .dynamics import phase_sweep, write_sweep_csv

    try:
        cfg = SweepConfig.load(args.grid)
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.output_dir or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    rows = phase_sweep(cfg.c0, cfg.lam, cfg.alpha, cfg.steps, cfg.n, cfg.seed)
    path = os.path.join(outdir, "phase_sweep.csv")
    write_sweep_csv(rows, path)
    if cfg.figures and not args.no_figures:
        from .plotting import plot_phase_diagram

        plot_phase_diagram(rows, os.path.join(outdir, "phase_diagram.png"))
    counts = {}
    for r in rows:
        counts[r.outcome.value] = counts.get(r.outcome.value, 0) + 1
    print(f"{len(rows)} trajectories -> {path}: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_suite

    checks = run_suite(quick=args.quick, progress=lambda c: print(c.line(), flush=True))
    failed = [c for c in checks if c.gating and not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed or advisory")
    return EXIT_VERIFY if failed else EXIT_OK


def _cmd_report(args) -> int:
    from .report import recompute_summary

    try:
        summary = recompute_summary(args.run_dir, figures=args.figures)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"config error: cannot read run directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="catalyst", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="full pruning experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override output_dir from the config")
    r.add_argument("--seed", type=int, help="override seed from the config")
    r.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("simulate", help="one gradient-descent trajectory of |d|/||M||, CSV on stdout")
    s.add_argument("c0", type=float)
    s.add_argument("lam", metavar="lambda", type=float)
    s.add_argument("alpha", type=float)
    s.add_argument("steps", type=int)
    s.add_argument("--n", type=int, default=8, help="length of M (default 8)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--run-past-exit", action="store_true", help="keep stepping after the window exit")
    s.add_argument("-o", "--output", help="write the CSV here instead of stdout")
    s.add_argument("--plot", help="also render c_t to this PNG")
    s.set_defaults(func=_cmd_simulate)

    w = sub.add_parser("sweep", help="phase diagram over a (c0, lambda, alpha) grid")
    w.add_argument("grid")
    w.add_argument("--output-dir")
    w.add_argument("--no-figures", action="store_true")
    w.set_defaults(func=_cmd_sweep)

    v = sub.add_parser("verify", help="run the numerical invariant suite")
    v.add_argument("--quick", action="store_true", help="a tenth of the samples")
    v.set_defaults(func=_cmd_verify)

    rp = sub.add_parser("report", help="recompute summary.json from a run directory's logs")
    rp.add_argument("run_dir")
    rp.add_argument("--figures", action="store_true", help="re-render figures from the logs")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
