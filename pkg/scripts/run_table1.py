#!/usr/bin/env python3
"""Nine-scenario single-link benchmark grid with paired baselines."""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dhdp_tracking.config import load_config
from dhdp_tracking.evaluation import format_suite_table, run_scenario_suite

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "example1.cfg"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    cfg = load_config(args.config)
    report = run_scenario_suite(cfg, n_trials=args.trials, workers=args.workers)
    print(format_suite_table(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
