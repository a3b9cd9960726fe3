"""Run the small two-app demo campaign, write its report and score it.

    python3 scripts/demo_campaign.py [--out runs/demo] [--budget 60]
"""

import argparse
import json
from pathlib import Path

from energytest.campaign import ground_truth_from_log, load_campaign_config, run_campaign
from energytest.detect import score_against_ground_truth
from energytest.report import generate_report
from energytest.sim import load_fleet

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIGS / "demo_campaign.yaml"))
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--budget", type=float)
    ap.add_argument("--plots", action="store_true")
    args = ap.parse_args()

    cfg = load_campaign_config(args.config, out_dir=args.out, budget=args.budget)
    result = run_campaign(cfg)
    index = generate_report(args.out, emit_plots=args.plots)

    apps = load_fleet(cfg.fleet, seed=cfg.seed)
    scores = score_against_ground_truth(result.db.records, ground_truth_from_log(apps, result.cases))
    print(f"{result.summary['cases']} cases, {result.summary['records']} records")
    for issue in result.summary["issues"]:
        print(f"  {issue['app']:>8} {issue['kind']:<10} {issue['context']:<13} "
              f"hits={issue['hits']:<3} waste={issue['waste_mean']:.1f}%")
    print("scores:", json.dumps({k.value: (v.tp, v.fp, v.fn) for k, v in scores.items()}))
    print("report:", index)


if __name__ == "__main__":
    main()
