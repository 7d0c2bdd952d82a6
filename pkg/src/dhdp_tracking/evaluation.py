"""Evaluation layer: per-sample MSE metric, success criteria, the nine
benchmark scenarios, baseline controllers, and ensemble statistics.

Two success criteria are supported:

* ``half_vs_half`` -- MSE over the last half of a trial is strictly below
  the MSE over the first half (learning improved tracking within the trial).
* ``vs_baseline`` -- MSE over the last half is strictly below the same
  window of a paired run of the stabilizing-only controller sharing the
  plant seed (same disturbance realization).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from multiprocessing import get_context
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from . import trainer
from .trainer import Outcome, TrialRecord

BASELINE_KINDS = ("stabilizing_only", "dhdp_only")


def mse(e1_series: np.ndarray, n_minus: int, n_plus: int) -> float:
    """Per-sample mean squared tracking error over the window [n-, n+):

    (1 / (n+ - n-)) * sum ||e1(k)||^2

    ``e1_series`` is (N,) for one joint or (N, n) for n joints.
    """
    e1 = np.asarray(e1_series, dtype=float)
    if e1.ndim == 1:
        e1 = e1[:, None]
    n_total = e1.shape[0]
    if not 0 <= n_minus < n_plus <= n_total:
        raise ValueError(f"empty or invalid window [{n_minus}, {n_plus}) for {n_total} samples")
    window = e1[n_minus:n_plus]
    return float(np.mean(np.sum(window**2, axis=1)))


def judge(
    record: TrialRecord,
    criterion: str,
    baseline_record: Optional[TrialRecord] = None,
) -> tuple[bool, float, float]:
    """Apply a success criterion; returns (success, mse_reference, mse_tested).

    For ``half_vs_half`` the reference is the first-half MSE; for
    ``vs_baseline`` it is the paired baseline's second-half MSE. Success is
    strict inequality; a diverged trial never succeeds.
    """
    n_steps = record.steps
    half = n_steps // 2
    mse_late = mse(record.e1, half, n_steps)
    if criterion == "half_vs_half":
        mse_ref = mse(record.e1, 0, half)
    elif criterion == "vs_baseline":
        if baseline_record is None:
            raise ValueError("vs_baseline criterion requires a paired baseline record")
        b_steps = baseline_record.steps
        mse_ref = mse(baseline_record.e1, b_steps // 2, b_steps)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    success = record.outcome is not Outcome.DIVERGED and mse_late < mse_ref
    return success, mse_ref, mse_late


def baseline_controller(kind: str) -> str:
    """Resolve a baseline name to a controller kind accepted by the trainer.

    ``stabilizing_only``: u = c2 e2, no networks, no learning.
    ``dhdp_only``: the actor output is the whole torque (feed-forward
    composition removed); inputs, stage cost and updates unchanged.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    return kind


@dataclass(frozen=True)
class ScenarioSpec:
    """One row of the benchmark grid."""

    scenario_id: int
    initial_state: tuple[float, float]
    inertia_variant: str  # "C" constant, "V" constant plus per-step Gaussian
    mass: float
    length: float
    disturbance: str  # "none", "pulse", "gaussian"


TABLE1_SCENARIOS: tuple[ScenarioSpec, ...] = (
    ScenarioSpec(1, (-0.1, 0.1), "C", 1.0, 1.0, "none"),
    ScenarioSpec(2, (0.1, -0.1), "C", 1.0, 1.0, "none"),
    ScenarioSpec(3, (0.2, -0.2), "C", 1.0, 1.0, "none"),
    ScenarioSpec(4, (-0.2, 0.2), "C", 1.0, 1.0, "none"),
    ScenarioSpec(5, (-0.1, 0.1), "C", 1.0, 1.0, "pulse"),
    ScenarioSpec(6, (-0.1, 0.1), "C", 1.0, 1.0, "gaussian"),
    ScenarioSpec(7, (-0.1, 0.1), "C", 1.0, 2.0, "none"),
    ScenarioSpec(8, (-0.1, 0.1), "C", 2.0, 2.0, "none"),
    ScenarioSpec(9, (-0.1, 0.1), "V", 1.0, 1.0, "none"),
)


def scenario_config(base: ExperimentConfig, spec: ScenarioSpec) -> ExperimentConfig:
    """Apply one scenario row to a single-link base config."""
    if base.plant.model != "single_link":
        raise ValueError("scenario grid applies to the single-link plant")
    plant = replace(
        base.plant,
        inertia_std=0.5 if spec.inertia_variant == "V" else 0.0,
        mass=spec.mass,
        half_length=spec.length,
        initial_position=(spec.initial_state[0],),
        initial_velocity=(spec.initial_state[1],),
        disturbance=replace(base.plant.disturbance, kind=spec.disturbance),
    )
    run = replace(base.run, criterion="vs_baseline")
    return replace(base, plant=plant, run=run)


@dataclass(frozen=True)
class ScenarioResult:
    spec: ScenarioSpec
    success_rate: float
    resets: int
    mean_mse_late: float
    median_mse_late: float
    baseline_mse_late: float
    episodes: int


@dataclass(frozen=True)
class SuiteReport:
    results: tuple[ScenarioResult, ...]
    n_trials: int
    base_seed: int


def _episode_worker(args) -> tuple[bool, int, float, float]:
    """Run one episode; returns (first_trial_success, resets,
    final_mse_late, baseline_mse_late). Module-level for multiprocessing."""
    cfg, seed = args
    episode = trainer.run_episode(cfg, seed)
    first_success = episode.summaries[0].outcome is Outcome.SUCCESS
    final_mse = episode.final_record.mse_second_half
    baseline = episode.baseline_record
    baseline_mse = baseline.mse_second_half if baseline is not None else None
    return (
        first_success,
        episode.resets,
        np.nan if final_mse is None else float(final_mse),
        np.nan if baseline_mse is None else float(baseline_mse),
    )


def run_scenario_suite(
    base_config: ExperimentConfig,
    n_trials: int = 50,
    workers: int = 1,
    base_seed: Optional[int] = None,
    scenarios: Sequence[ScenarioSpec] = TABLE1_SCENARIOS,
) -> SuiteReport:
    """Run every scenario row as ``n_trials`` paired episodes and aggregate.

    The success rate counts first trials (before any reset); resets accumulate
    across episodes. Episode e of scenario s uses seed
    base_seed + 1000 * s + e, so rows and episodes are independent.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    seed0 = base_config.run.seed if base_seed is None else base_seed
    results = []
    for spec in scenarios:
        cfg = scenario_config(base_config, spec)
        jobs = [(cfg, seed0 + 1000 * spec.scenario_id + e) for e in range(n_trials)]
        if workers > 1:
            # fork keeps workers cheap; nothing here is thread-sensitive
            with get_context("fork").Pool(workers) as pool:
                rows = pool.map(_episode_worker, jobs)
        else:
            rows = [_episode_worker(job) for job in jobs]
        firsts = np.array([row[0] for row in rows])
        resets = int(sum(row[1] for row in rows))
        final_mses = np.array([row[2] for row in rows])
        baseline_mses = np.array([row[3] for row in rows])
        results.append(
            ScenarioResult(
                spec=spec,
                success_rate=float(np.mean(firsts)),
                resets=resets,
                mean_mse_late=float(np.mean(final_mses)),
                median_mse_late=float(np.median(final_mses)),
                baseline_mse_late=float(np.mean(baseline_mses)),
                episodes=n_trials,
            )
        )
    return SuiteReport(tuple(results), n_trials, seed0)


def format_suite_table(report: SuiteReport) -> str:
    """Aligned-text scenario table."""
    header = (
        f"{'case':>4} {'initial state':>14} {'M':>2} {'m,l':>9} {'dist':>9} "
        f"{'success':>8} {'resets':>6} {'mse_late':>10} {'baseline':>10}"
    )
    lines = [header, "-" * len(header)]
    for res in report.results:
        s = res.spec
        lines.append(
            f"{s.scenario_id:>4} {str(s.initial_state):>14} {s.inertia_variant:>2} "
            f"{f'({s.mass:g},{s.length:g})':>9} {s.disturbance:>9} "
            f"{res.success_rate:>7.0%} {res.resets:>6d} {res.mean_mse_late:>10.3e} {res.baseline_mse_late:>10.3e}"
        )
    return "\n".join(lines)


def suite_rows(report: SuiteReport) -> list[dict]:
    """Suite report as flat dicts (CSV-ready)."""
    rows = []
    for res in report.results:
        s = res.spec
        rows.append(
            {
                "case": s.scenario_id,
                "x1_0": s.initial_state[0],
                "x2_0": s.initial_state[1],
                "inertia": s.inertia_variant,
                "mass": s.mass,
                "length": s.length,
                "disturbance": s.disturbance,
                "success_rate": res.success_rate,
                "resets": res.resets,
                "mean_mse_late": res.mean_mse_late,
                "median_mse_late": res.median_mse_late,
                "baseline_mse_late": res.baseline_mse_late,
                "episodes": res.episodes,
            }
        )
    return rows


def run_ensemble(
    cfg: ExperimentConfig,
    n_trials: int,
    controller: str = "combined",
    base_seed: Optional[int] = None,
) -> list[TrialRecord]:
    """Independent seeded trials (seed0 + i), no resets; for ablations."""
    seed0 = cfg.run.seed if base_seed is None else base_seed
    return [trainer.run_trial(cfg, seed0 + i, controller) for i in range(n_trials)]


def run_paired_trial(cfg: ExperimentConfig, seed: int, controller: str = "combined") -> tuple[TrialRecord, TrialRecord]:
    """One controller trial plus its stabilizing-only twin on the same plant
    seed; the pair isolates the controller from the disturbance realization."""
    ss = np.random.SeedSequence(seed)
    weight_ss, plant_ss = ss.spawn(2)
    baseline = trainer.run_trial_from_streams(cfg, None, plant_ss, "stabilizing_only", seed=seed)
    trainer.apply_judgment(cfg, baseline, None, skip=True)
    record = trainer.run_trial_from_streams(cfg, weight_ss, plant_ss, controller, seed=seed)
    trainer.apply_judgment(cfg, record, baseline)
    return record, baseline
