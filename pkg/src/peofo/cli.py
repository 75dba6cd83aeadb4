"""
Command line interface.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure,
3 I/O error. ``PEOFO_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) sets the log
verbosity; the default is WARNING.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .errors import ConfigError, NumericalError, PeofoError
from .harness import config as cfgmod
from .harness import metrics, plots, simulate, traceio

log = logging.getLogger("peofo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _setup_logging():
    level = os.environ.get("PEOFO_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args):
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    start = time.perf_counter()
    trace = simulate.run_scenario(cfg)
    elapsed = time.perf_counter() - start
    path = traceio.export_csv(trace, _out_dir(args.out) / f"trace_{cfg.variant}_seed{cfg.seed}.csv")
    print(f"{cfg.variant}: {len(trace)} steps in {elapsed:.2f} s, profit {trace.profit:.6f}, "
          f"excitation violations {trace.violations}")
    print(f"wrote {path}")


def cmd_montecarlo(args):
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    start = time.perf_counter()
    summary = simulate.monte_carlo(cfg, args.runs, workers=args.workers)
    elapsed = time.perf_counter() - start
    path = traceio.export_summary_csv(summary, _out_dir(args.out) / f"montecarlo_{cfg.variant}.csv")
    print(f"{cfg.variant}: {len(summary.seeds)} of {summary.runs} runs completed in {elapsed:.1f} s, "
          f"mean profit {summary.profit:.6f}")
    for seed, msg in summary.failures:
        print(f"failed seed {seed}: {msg}")
    print(f"wrote {path}")


def cmd_compare(args):
    items = [traceio.read_csv(p) for p in args.traces]
    report = metrics.compare_report(items)
    print("\n".join(report.lines()))


def cmd_plot(args):
    items = [traceio.read_csv(p) for p in args.traces]
    for path in plots.render_plots(items, _out_dir(args.out), alpha=args.alpha):
        print(f"wrote {path}")


def cmd_validate(args):
    cfg = cfgmod.load_config(args.config)
    print(f"{args.config}: ok ({cfg.variant}, {cfg.steps} steps, {cfg.field_model.n_wells} wells, "
          f"{len(cfg.schedule)} schedule segments)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peofo", description="Feedback optimization with persistent excitation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write its trace")
    p.add_argument("config")
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("montecarlo", help="repeat a scenario over consecutive seeds")
    p.add_argument("config")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("compare", help="profit, regret and violations of saved traces")
    p.add_argument("traces", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="render SVG figures from saved traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--out", default=".")
    p.add_argument("--alpha", type=float, default=1e-3, help="step size used to normalize pe perturbations")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which is reserved for numerical failures here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigError, metrics.TraceMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed trace files and argument values
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PeofoError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
