"""Command-line interface: run, list and validate scenarios.

Exit codes: 0 success, 2 validation failure, 3 run aborted everywhere
(no blocks produced). DRONEQKD_OUT overrides the default output
directory.
"""

from __future__ import annotations

import argparse
import os
import sys

from droneqkd import runner, scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ABORT_ONLY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="droneqkd",
        description="Drone-to-ground free-space CV-QKD link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write reports")
    run_p.add_argument("scenario", help="scenario file path or bundled name")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    run_p.add_argument("--out", default=None,
                       help="output directory (default: DRONEQKD_OUT or ./out)")
    run_p.add_argument("--exact-counts", action="store_true",
                       help="process every real pulse instead of the subsample")

    sub.add_parser("list", help="list bundled scenarios")

    val_p = sub.add_parser("validate", help="validate a scenario file")
    val_p.add_argument("scenario", help="scenario file path")
    return parser


def _load(name_or_path: str) -> scenario.ScenarioConfig:
    if os.path.exists(name_or_path):
        return scenario.load_scenario(name_or_path)
    return scenario.load_bundled(name_or_path)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list":
        for name in scenario.list_bundled():
            cfg = scenario.load_bundled(name)
            ref = cfg.paper_reference
            ref_txt = ""
            if ref is not None and ref.key_rate_kbps is not None:
                ref_txt = f"  paper_measured={ref.key_rate_kbps} kbps"
            print(f"{name}: loss={cfg.channel.loss_db} dB, "
                  f"duration={cfg.duration_s} s{ref_txt}")
        return EXIT_OK

    if args.command == "validate":
        try:
            cfg = scenario.load_scenario(args.scenario)
        except scenario.ScenarioError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"ok: {cfg.name}")
        return EXIT_OK

    # run
    try:
        cfg = _load(args.scenario)
    except scenario.ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = args.out or os.environ.get("DRONEQKD_OUT") or "out"
    report = runner.run_scenario(cfg, seed_override=args.seed,
                                 exact_counts=args.exact_counts)
    try:
        paths = runner.emit_report(report, out_dir)
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{report.name}: {len(report.blocks)} blocks, "
          f"mean key rate {report.mean_key_rate_bps / 1e3:.3f} kbps")
    for path in paths:
        print(f"  wrote {path}")
    aborted = (report.counters.scan_failures + report.counters.sync_aborts
               + report.counters.no_key_aborts + report.counters.transport_aborts
               + report.counters.protocol_aborts)
    if not report.blocks and aborted > 0:
        return EXIT_ABORT_ONLY
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
