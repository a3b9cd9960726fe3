"""Watch steering drift toward the context that provokes defects.

Builds fleets whose defects fire only under one context, runs a campaign on
each and prints how p_ctx moved. With --baseline the same fleet is also run
with steering frozen (tiny deltas) to compare how many defect hits each
campaign collects.
"""

import argparse

from energytest import steer
from energytest.campaign import CampaignConfig, run_campaign
from energytest.sim import CONTEXTS, ContextKind, FleetSpec, generate_fleet


def hits(result):
    return sum(1 for c in result.cases if c["defects"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--context", default="NetworkFail", choices=[k.value for k in ContextKind])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--budget", type=int, default=500)
    ap.add_argument("--baseline", action="store_true")
    args = ap.parse_args()

    names = [c.kind.value for c in CONTEXTS]
    target = names.index(args.context)
    print("seed  " + "  ".join(f"{n:>13}" for n in names) + "   hits" + ("  frozen" if args.baseline else ""))
    for seed in range(args.seeds):
        apps = generate_fleet(FleetSpec(only_context=args.context), seed)
        res = run_campaign(CampaignConfig(budget=args.budget, seed=1000 + seed), apps)
        row = f"{seed:>4}  " + "  ".join(f"{p:>13.3f}" for p in res.state.p_ctx) + f"  {hits(res):>5}"
        if args.baseline:
            frozen = steer.SteeringConfig(delta_wei=1e-12, delta_context=1e-12)
            base = run_campaign(CampaignConfig(budget=args.budget, seed=1000 + seed, steering=frozen), apps)
            row += f"  {hits(base):>6}"
        mark = "" if res.state.p_ctx[target] == max(res.state.p_ctx) else "   (target not maximal)"
        print(row + mark)


if __name__ == "__main__":
    main()
