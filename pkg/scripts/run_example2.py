#!/usr/bin/env python3
"""Two-link tracking study: reset-protocol episodes paired against the
stabilizing-only controller, reporting per-joint window MSEs."""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dhdp_tracking import run_episode
from dhdp_tracking.config import load_config
from dhdp_tracking.evaluation import mse

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "example2.cfg"


def joint_mses(record):
    n = record.steps
    return [mse(record.e1[:, j], n // 2, n) for j in range(record.n)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--seeds", type=int, default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    n_seeds = args.seeds or cfg.run.trials
    both_wins, resets_total = 0, 0
    base_mses = None
    for s in range(n_seeds):
        episode = run_episode(cfg, cfg.run.seed + s)
        resets_total += episode.resets
        final = episode.final_record
        base = episode.baseline_record
        base_mses = joint_mses(base)
        final_mses = joint_mses(final)
        win = all(f < b for f, b in zip(final_mses, base_mses))
        both_wins += win
        print(f"seed {s:3d}: trials={len(episode.summaries)} resets={episode.resets} "
              f"dhdp=({final_mses[0]:.3e},{final_mses[1]:.3e}) "
              f"baseline=({base_mses[0]:.3e},{base_mses[1]:.3e}) both_joints_better={win}")
    print(f"\nstabilizing-only joint MSE_late: {base_mses[0]:.3e} / {base_mses[1]:.3e}")
    print(f"both-joint wins: {both_wins}/{n_seeds}  total resets: {resets_total}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
