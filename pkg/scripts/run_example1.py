#!/usr/bin/env python3
"""Single-link tracking study: combined controller vs the raw learning
controller over a seeded ensemble, with per-trial improvement verdicts."""
import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dhdp_tracking import run_trial
from dhdp_tracking.config import load_config

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "example1.cfg"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    n = args.trials or cfg.run.trials
    seed0 = cfg.run.seed if args.seed is None else args.seed

    rows = {}
    for controller in ("combined", "dhdp_only"):
        successes, mses, diverged = 0, [], 0
        for i in range(n):
            rec = run_trial(cfg, seed0 + i, controller=controller)
            successes += rec.outcome.value == "success"
            diverged += rec.outcome.value == "diverged"
            if rec.mse_second_half is not None:
                mses.append(rec.mse_second_half)
        rows[controller] = (successes, diverged, float(np.median(mses)))
        print(f"{controller:16s} success {successes}/{n}  diverged {diverged}  "
              f"median MSE_late {np.median(mses):.3e}")
    gap = (rows["combined"][0] - rows["dhdp_only"][0]) / n
    print(f"combined minus raw-learner success gap: {gap:+.0%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
