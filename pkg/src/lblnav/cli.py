"""Command line entry point: ``lblnav {simulate,compare,gramian}``."""

import argparse
import json
import logging
import sys

from .errors import LblNavError
from .scenario import ScenarioConfig, emit_outputs, gramian_report, load_config, run_scenario, summarize, write_gramian


def _config(args):
    cfg = load_config(args.config) if args.config else ScenarioConfig().validate()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "filters", None):
        cfg.filters = [f.strip() for f in args.filters.split(",") if f.strip()]
    if getattr(args, "runs", None) is not None:
        cfg.monte_carlo_runs = args.runs
    return cfg.validate()


def _fmt(x, spec=".4g"):
    return "-" if x is None else format(x, spec)


def cmd_simulate(args):
    cfg = _config(args)
    reports = run_scenario(cfg, workers=args.workers)
    paths = emit_outputs(reports, args.out)
    for name, entry in summarize(reports).items():
        print(
            f"{name:10s} runs={entry['runs']} pos_rmse={_fmt(entry['position_rmse'])} m "
            f"vel_rmse={_fmt(entry['velocity_rmse'])} m/s grav_rmse={_fmt(entry['gravity_rmse'])} m/s^2 "
            f"diverged={entry['diverged_runs']}"
        )
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def cmd_compare(args):
    if not args.filters:
        args.filters = "proposed,ekf,algebraic"
    cfg = _config(args)
    reports = run_scenario(cfg, workers=args.workers)
    summary = summarize(reports)
    ref = summary.get("proposed", {}).get("position_rmse")
    print(f"{'filter':10s} {'pos_rmse':>10s} {'vel_rmse':>10s} {'conv_t':>8s} {'vs proposed':>12s}")
    for name, entry in summary.items():
        ratio = entry["position_rmse"] / ref if ref and entry["position_rmse"] is not None else None
        print(
            f"{name:10s} {_fmt(entry['position_rmse']):>10s} {_fmt(entry['velocity_rmse']):>10s} "
            f"{_fmt(entry['convergence_time']):>8s} {_fmt(ratio, '.3f'):>12s}"
        )
    if args.out:
        emit_outputs(reports, args.out)
    return 0


def cmd_gramian(args):
    cfg = _config(args)
    report = gramian_report(cfg)
    if args.out:
        write_gramian(report, args.out)
    brief = {k: v for k, v in report.items() if k != "W"}
    print(json.dumps(brief, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lblnav", description="Range-based LBL navigation filter simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required):
        p.add_argument("--config", metavar="PATH", help="JSON scenario file (defaults to the built-in scenario)")
        p.add_argument("--out", metavar="DIR", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")

    p = sub.add_parser("simulate", help="run the scenario and write error CSVs and summary.json")
    common(p, True)
    p.add_argument("--filters", metavar="LIST", help="comma separated subset of proposed,ekf,algebraic")
    p.add_argument("--runs", type=int, help="override monte_carlo_runs")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for Monte Carlo runs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="paired comparison of the filters")
    common(p, False)
    p.add_argument("--filters", metavar="LIST", help="comma separated filters (default: all)")
    p.add_argument("--runs", type=int, help="override monte_carlo_runs")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gramian", help="observability Gramian of the configured scenario")
    common(p, False)
    p.set_defaults(func=cmd_gramian)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LblNavError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
