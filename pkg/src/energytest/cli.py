"""Command line entry point: ``energytest run|report|score``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .campaign import IssueDatabase, load_campaign_config, load_cases, run_campaign, ground_truth_from_log
from .detect import score_against_ground_truth
from .errors import ConfigError, EnergyTestError
from .report import generate_report
from .sim import load_fleet

EXIT_CONFIG = 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="energytest", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a test campaign")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=_u64)
    run.add_argument("--budget", type=float, help="number of cases (or seconds in wall-clock mode)")
    run.add_argument("--out", required=True)
    run.add_argument("--workers", type=int)
    run.add_argument("--emit-plots", action="store_true")

    rep = sub.add_parser("report", help="write the report bundle for a finished campaign")
    rep.add_argument("--db", required=True)
    rep.add_argument("--emit-plots", action="store_true")

    score = sub.add_parser("score", help="precision and recall against the fleet's seeded defects")
    score.add_argument("--db", required=True)
    score.add_argument("--fleet", required=True)
    return parser


def cmd_run(args) -> int:
    cfg = load_campaign_config(args.config, seed=args.seed, budget=args.budget, out_dir=args.out,
                               workers=args.workers, emit_plots=args.emit_plots or None)
    result = run_campaign(cfg)
    generate_report(args.out, emit_plots=cfg.emit_plots)
    print(json.dumps(result.summary, sort_keys=True, indent=1))
    return 0


def cmd_report(args) -> int:
    path = generate_report(args.db, emit_plots=args.emit_plots)
    index = json.loads(path.read_text())
    print(json.dumps({"index": str(path), "issues": len(index["issues"])}, indent=1))
    return 0


def cmd_score(args) -> int:
    apps = load_fleet(args.fleet)
    db = IssueDatabase.load(args.db)
    truths = ground_truth_from_log(apps, load_cases(args.db))
    scores = score_against_ground_truth(db.records, truths)
    print(json.dumps({k.value: v.to_dict() for k, v in scores.items()}, sort_keys=True, indent=1))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "report": cmd_report, "score": cmd_score}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnergyTestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
