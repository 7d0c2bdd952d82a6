"""Command-line entry points: run one trial/episode, check the stability and
learning-rate conditions, execute the benchmark scenario grid, and convert
trace files into gnuplot-ready data.

Exit codes: 0 success, 1 criterion failure, 2 divergence or reset-cap
exhaustion, 3 config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, trainer
from .backstepping import ConditionUnsatisfiableError, check_gain_conditions
from .config import ConfigError, config_hash, dump_resolved, load_config
from .trainer import Outcome

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DIVERGED = 2
EXIT_CONFIG = 3


def _write_trace_csv(path: Path, record: trainer.TrialRecord, header_comment: str) -> None:
    n = record.n
    cols = ["k", "t"]
    for name in ("q", "qdot", "e1", "e2", "alpha", "u", "f_hat"):
        cols += [f"{name}{j + 1}" for j in range(n)]
    cols += ["r", "J_hat", "e_c", "e_a", "l_a", "l_c"]
    with path.open("w", newline="") as fh:
        fh.write(header_comment + "\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for k in range(record.steps):
            row = [k, repr(float(record.t[k]))]
            for name in ("q", "qdot", "e1", "e2", "alpha", "u", "f_hat"):
                row += [repr(float(v)) for v in getattr(record, name)[k]]
            row += [repr(float(record.r[k])), repr(float(record.j_hat[k])), repr(float(record.e_c[k])),
                    repr(float(record.e_a[k])), repr(float(record.l_a[k])), repr(float(record.l_c[k]))]
            writer.writerow(row)


def _write_weights_csv(path: Path, record: trainer.TrialRecord, header_comment: str) -> None:
    with path.open("w", newline="") as fh:
        fh.write(header_comment + "\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "matrix", "row", "col", "value"])
        for k in sorted(record.weight_snapshots):
            for name, mat in record.weight_snapshots[k].items():
                for i in range(mat.shape[0]):
                    for j in range(mat.shape[1]):
                        writer.writerow([k, name, i, j, repr(float(mat[i, j]))])


def _record_summary(record: trainer.TrialRecord) -> dict:
    return {
        "outcome": record.outcome.value,
        "steps": record.steps,
        "mse_first_half": record.mse_first_half,
        "mse_second_half": record.mse_second_half,
        "min_l_c_bound": None if np.isinf(record.min_l_c_bound) else record.min_l_c_bound,
        "min_l_a_bound": None if np.isinf(record.min_l_a_bound) else record.min_l_a_bound,
        "rates_ok": record.rates_ok,
        "controller": record.controller,
        "seed": record.seed,
    }


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seed = cfg.run.seed if args.seed is None else args.seed
    out_dir = Path(args.out or cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = f"# config_hash={config_hash(cfg)} seed={seed}"
    dump_resolved(cfg, out_dir / "resolved_config.json")

    if args.episode:
        episode = trainer.run_episode(cfg, seed, controller=args.controller)
        record = episode.final_record
        summary = {
            "episode": {
                "trials": len(episode.summaries),
                "resets": episode.resets,
                "success_index": episode.success_index,
                "cap_exhausted": episode.cap_exhausted,
            },
            "final_trial": _record_summary(record),
        }
        if episode.baseline_record is not None:
            summary["baseline"] = _record_summary(episode.baseline_record)
    else:
        baseline = None
        if cfg.run.criterion == "vs_baseline" and args.controller != "stabilizing_only":
            record, baseline = evaluation.run_paired_trial(cfg, seed, controller=args.controller)
        else:
            record = trainer.run_trial(cfg, seed, controller=args.controller)
        summary = {"trial": _record_summary(record)}
        if baseline is not None:
            summary["baseline"] = _record_summary(baseline)

    _write_trace_csv(out_dir / "trace.csv", record, stamp)
    _write_weights_csv(out_dir / "weights.csv", record, stamp)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    print(f"trace written to {out_dir / 'trace.csv'}")

    if args.episode and episode.cap_exhausted:
        return EXIT_DIVERGED
    if record.outcome is Outcome.DIVERGED:
        return EXIT_DIVERGED
    if record.outcome is Outcome.FAILURE:
        return EXIT_FAILURE
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    gains = cfg.build_gains()
    try:
        verdict = check_gain_conditions(gains)
    except ConditionUnsatisfiableError as exc:
        print(f"gain condition: UNSATISFIABLE ({exc})")
        return EXIT_FAILURE
    print(f"|c1| = {abs(gains.c1):.6g} < {verdict.c1_bound:.6g}: "
          f"{'pass' if verdict.c1_ok else 'FAIL'} (margin {verdict.c1_margin:+.6g})")
    print(f"|c2| = {abs(gains.c2):.6g} < {verdict.c2_bound:.6g}: "
          f"{'pass' if verdict.c2_ok else 'FAIL'} (margin {verdict.c2_margin:+.6g})")
    status = EXIT_OK if verdict.passed else EXIT_FAILURE

    if not args.static_only and verdict.passed:
        seed = cfg.run.seed if args.seed is None else args.seed
        ss = np.random.SeedSequence(seed)
        weight_ss, plant_ss = ss.spawn(2)
        record = trainer.run_trial_from_streams(cfg, weight_ss, plant_ss, "combined", seed=seed)
        trainer.apply_judgment(cfg, record, None, skip=True)
        note = " (diverged early)" if record.outcome is Outcome.DIVERGED else ""
        print(f"learning-rate bounds over a seed-{seed} dry run ({record.steps} steps{note}):")
        print(f"  min l_c bound = {record.min_l_c_bound:.6g} "
              f"(configured l_c = {cfg.learning.l_c:g}): "
              f"{'pass' if cfg.learning.l_c < record.min_l_c_bound else 'FAIL'}")
        print(f"  min l_a bound = {record.min_l_a_bound:.6g} "
              f"(configured l_a = {cfg.learning.l_a:g}): "
              f"{'pass' if cfg.learning.l_a < record.min_l_a_bound else 'FAIL'}")
        if not record.rates_ok:
            status = EXIT_FAILURE
    return status


def cmd_suite(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    n_trials = args.trials or cfg.run.trials
    workers = args.workers or cfg.run.workers
    out_dir = Path(args.out or cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_resolved(cfg, out_dir / "resolved_config.json")
    report = evaluation.run_scenario_suite(cfg, n_trials=n_trials, workers=workers)
    table = evaluation.format_suite_table(report)
    print(table)
    (out_dir / "suite.txt").write_text(table + "\n")
    rows = evaluation.suite_rows(report)
    stamp = f"# config_hash={config_hash(cfg)} seed={report.base_seed}"
    with (out_dir / "suite.csv").open("w", newline="") as fh:
        fh.write(stamp + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"suite results written to {out_dir / 'suite.csv'}")
    return EXIT_OK


def cmd_plot_data(args: argparse.Namespace) -> int:
    trace = Path(args.trace)
    if not trace.exists():
        print(f"trace file not found: {trace}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or trace.parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    with trace.open() as fh:
        comment = fh.readline().rstrip("\n")
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        print("empty trace", file=sys.stderr)
        return EXIT_FAILURE
    q_cols = sorted(c for c in rows[0] if c.startswith("q") and not c.startswith("qdot"))
    e1_cols = sorted(c for c in rows[0] if c.startswith("e1"))
    tracking = out_dir / "tracking.dat"
    with tracking.open("w") as fh:
        fh.write(comment + "\n")
        names = ["t"] + q_cols + [f"x1d{j + 1}" for j in range(len(q_cols))] + e1_cols
        fh.write("# " + " ".join(names) + "\n")
        for row in rows:
            q = [float(row[c]) for c in q_cols]
            e1 = [float(row[c]) for c in e1_cols]
            x1d = [qi - ei for qi, ei in zip(q, e1)]
            vals = [float(row["t"])] + q + x1d + e1
            fh.write(" ".join(f"{v:.10g}" for v in vals) + "\n")
    learning = out_dir / "learning.dat"
    with learning.open("w") as fh:
        fh.write(comment + "\n")
        fh.write("# t r J_hat e_c e_a l_a l_c\n")
        for row in rows:
            vals = [float(row[c]) for c in ("t", "r", "J_hat", "e_c", "e_a", "l_a", "l_c")]
            fh.write(" ".join(f"{v:.10g}" for v in vals) + "\n")
    print(f"wrote {tracking} and {learning}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dhdp-track",
        description="Backstepping-stabilized online actor-critic tracking control harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one trial (or episode) and write trace CSVs")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--episode", action="store_true", help="use the reset-on-failure protocol")
    p_run.add_argument("--controller", default="combined", choices=trainer.CONTROLLER_KINDS)
    p_run.add_argument("--out", default=None, help="output directory (default: config output block)")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="print gain and learning-rate condition margins")
    p_check.add_argument("config")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--static-only", action="store_true",
                         help="skip the dry run for the state-dependent rate bounds")
    p_check.set_defaults(func=cmd_check)

    p_suite = sub.add_parser("suite", help="run the nine-scenario benchmark grid")
    p_suite.add_argument("config")
    p_suite.add_argument("--trials", type=int, default=None)
    p_suite.add_argument("--workers", type=int, default=None)
    p_suite.add_argument("--out", default=None)
    p_suite.set_defaults(func=cmd_suite)

    p_plot = sub.add_parser("plot-data", help="emit gnuplot-ready files from a trace CSV")
    p_plot.add_argument("trace")
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except trainer.TrialPreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
