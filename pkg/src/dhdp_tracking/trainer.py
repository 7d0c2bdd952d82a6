"""Closed-loop trial execution: stage cost, per-step sequencing of the
backstepping layer and the online actor-critic updates, divergence guards,
and the reset-on-failure episode protocol.

Per-step order (one sample k):

1. form x_a(k) with the two-step trajectory lookahead, actor forward -> f_hat
2. compose u(k) and hold it over one RK4 plant step
3. observe x(k+1), form r(k+1) from e1(k+1) and u(k)
4. one-step-ahead virtual control and e2(k+1)
5. critic forward at x_c(k) = [x_a(k), u(k)], temporal-difference error,
   critic update(s)
6. actor error from the measured feed-forward residual, actor update(s)

A trial ends early (outcome DIVERGED) on any non-finite state/weight or when
the position error exceeds the blow-up bound. An episode repeats trials,
re-randomizing only the network weights, until success or the reset cap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import actor_critic as ac
from . import plant as plant_mod
from .backstepping import (
    GainSet,
    check_gain_conditions,
    compose_control,
    compute_errors,
    tracking_error,
    virtual_control_next,
)
from .config import ExperimentConfig

CONTROLLER_KINDS = ("combined", "stabilizing_only", "dhdp_only")


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    DIVERGED = "diverged"


class TrialPreconditionError(RuntimeError):
    """Trial refused to start (failed gain check without override, etc.)."""


@dataclass(frozen=True)
class StageCostSpec:
    """Quadratic stage cost r = e1' Q e1 + u' R u with discount gamma."""

    q: np.ndarray
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        for name, mat in (("Q", q), ("R", r)):
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat).min() < -1e-12:
                raise ValueError(f"{name} must be positive semi-definite")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)


def stage_cost(e1: np.ndarray, u: np.ndarray, spec: StageCostSpec) -> float:
    """r = e1' Q e1 + u' R u  (non-negative)."""
    e1 = np.atleast_1d(np.asarray(e1, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(e1 @ spec.q @ e1 + u @ spec.r @ u)


def discounted_return(r_sequence, gamma: float) -> float:
    """Truncated cost-to-go sum_{j>=1} gamma^j r(k+j), with r_sequence[0]
    playing the role of r(k). Evaluation oracle only, never in the loop."""
    rs = np.asarray(r_sequence, dtype=float)[1:]
    if rs.size == 0:
        return 0.0
    return float(np.sum(rs * gamma ** np.arange(1, rs.size + 1)))


@dataclass
class TrialRecord:
    """Full per-step trace of one trial plus its verdicts."""

    h: float
    gamma: float
    seed: Optional[int]
    controller: str
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    q: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    e1: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    e2: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    u: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    f_hat: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    j_hat: np.ndarray = field(default_factory=lambda: np.zeros(0))
    e_c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    e_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_c_bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_a_bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dw_norm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weight_snapshots: dict = field(default_factory=dict)
    outcome: Outcome = Outcome.FAILURE
    success: Optional[bool] = None
    mse_first_half: Optional[float] = None
    mse_second_half: Optional[float] = None
    gain_verdict: Optional[object] = None
    min_l_c_bound: float = np.inf
    min_l_a_bound: float = np.inf
    rates_ok: Optional[bool] = None

    @property
    def steps(self) -> int:
        return self.t.size

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def replay_td_errors(self) -> np.ndarray:
        """Re-derive e_c(k) = gamma J_hat(k) - (J_hat(k-1) - r(k)) from the
        stored arrays (J_hat(-1) taken as J_hat(0)); audit helper."""
        j_prev = np.concatenate([self.j_hat[:1], self.j_hat[:-1]])
        return self.gamma * self.j_hat - (j_prev - self.r)


@dataclass(frozen=True)
class TrialSummary:
    outcome: Outcome
    success: Optional[bool]
    mse_first_half: Optional[float]
    mse_second_half: Optional[float]
    steps: int
    rates_ok: Optional[bool]
    min_l_c_bound: float
    min_l_a_bound: float


def summarize(record: TrialRecord) -> TrialSummary:
    return TrialSummary(
        outcome=record.outcome,
        success=record.success,
        mse_first_half=record.mse_first_half,
        mse_second_half=record.mse_second_half,
        steps=record.steps,
        rates_ok=record.rates_ok,
        min_l_c_bound=record.min_l_c_bound,
        min_l_a_bound=record.min_l_a_bound,
    )


@dataclass
class EpisodeRecord:
    """Reset-protocol outcome: per-trial summaries, reset count, and the
    final trial's full record (plus its paired baseline when used)."""

    summaries: list
    resets: int
    success_index: Optional[int]
    final_record: TrialRecord
    baseline_record: Optional[TrialRecord] = None
    cap_exhausted: bool = False


def _learning_params(cfg: ExperimentConfig) -> ac.LearningParams:
    l = cfg.learning
    return ac.LearningParams(
        l_a=l.l_a,
        l_c=l.l_c,
        gamma=l.gamma,
        beta1=l.beta1,
        beta2=l.beta2,
        beta3=l.beta3,
        u_c=l.u_c,
        m_hat_plus=cfg.m_hat_plus_matrix(),
    )


def run_trial(
    cfg: ExperimentConfig,
    seed: int,
    controller: str = "combined",
    baseline_record: Optional[TrialRecord] = None,
) -> TrialRecord:
    """Execute one trial from a fresh seed; equals the first trial of
    ``run_episode`` with the same seed."""
    ss = np.random.SeedSequence(seed)
    weight_ss, plant_ss = ss.spawn(2)
    record = run_trial_from_streams(cfg, weight_ss, plant_ss, controller, seed=seed)
    apply_judgment(cfg, record, baseline_record)
    return record


def run_episode(cfg: ExperimentConfig, seed: int, controller: str = "combined") -> EpisodeRecord:
    """Repeat trials, re-randomizing only the network weights after each
    failure, until success or the reset cap. The plant stream (initial state,
    disturbances, inertia draws) is identical across trials."""
    ss = np.random.SeedSequence(seed)
    weight_ss, plant_ss = ss.spawn(2)

    baseline = None
    if cfg.run.criterion == "vs_baseline" and controller != "stabilizing_only":
        baseline = run_trial_from_streams(cfg, None, plant_ss, "stabilizing_only", seed=seed)
        apply_judgment(cfg, baseline, None, skip=True)

    summaries: list[TrialSummary] = []
    record = None
    for trial_index in range(cfg.run.reset_cap):
        record = run_trial_from_streams(cfg, weight_ss, plant_ss, controller, seed=seed)
        apply_judgment(cfg, record, baseline)
        summaries.append(summarize(record))
        if record.outcome is Outcome.SUCCESS:
            return EpisodeRecord(summaries, trial_index, trial_index, record, baseline)
        weight_ss = ss.spawn(1)[0]
    return EpisodeRecord(summaries, len(summaries), None, record, baseline, cap_exhausted=True)


def apply_judgment(cfg, record, baseline_record=None, skip: bool = False) -> None:
    """Fill the MSE halves and, unless ``skip`` or diverged, tag the outcome
    under the configured success criterion."""
    from .evaluation import judge, mse  # evaluation sits above trainer

    n_steps = record.steps
    half = n_steps // 2
    if n_steps >= 2:
        record.mse_first_half = mse(record.e1, 0, half)
        record.mse_second_half = mse(record.e1, half, n_steps)
    if record.outcome is Outcome.DIVERGED or skip:
        return
    success, _, _ = judge(record, cfg.run.criterion, baseline_record)
    record.success = success
    record.outcome = Outcome.SUCCESS if success else Outcome.FAILURE


def run_trial_from_streams(
    cfg: ExperimentConfig,
    weight_ss: Optional[np.random.SeedSequence],
    plant_ss: np.random.SeedSequence,
    controller: str,
    seed: Optional[int] = None,
) -> TrialRecord:
    if controller not in CONTROLLER_KINDS:
        raise ValueError(f"unknown controller kind {controller!r}")
    model = cfg.build_plant()
    gains = cfg.build_gains()
    verdict = check_gain_conditions(gains)
    if not verdict.passed and not cfg.run.allow_failed_gain_check:
        raise TrialPreconditionError(
            f"gain conditions failed (c1 margin {verdict.c1_margin:.4g}, "
            f"c2 margin {verdict.c2_margin:.4g}); set run.allow_failed_gain_check to proceed"
        )
    traj = cfg.build_trajectory()
    dist_spec = cfg.build_disturbance()
    cost = StageCostSpec(cfg.q_cost_matrix(), cfg.r_cost_matrix(), cfg.learning.gamma)
    params = _learning_params(cfg)
    n = model.n
    h = gains.h
    c1, c2 = gains.c1, gains.c2
    n_steps = cfg.run.samples
    learn = controller in ("combined", "dhdp_only")

    plant_rng = np.random.default_rng(plant_ss)
    critic = actor = None
    monitor = None
    if learn:
        weight_rng = np.random.default_rng(weight_ss)
        lcfg = cfg.learning
        # draw order fixed: critic then actor
        critic = ac.Mlp.initialize(weight_rng, 6 * n, lcfg.hidden_critic, 1, lcfg.init_range)
        actor = ac.Mlp.initialize(weight_rng, 5 * n, lcfg.hidden_actor, n, lcfg.init_range)
        monitor = ac.RateMonitor(params)

    rec = TrialRecord(h=h, gamma=params.gamma, seed=seed, controller=controller)
    rec.gain_verdict = verdict
    rec.t = np.zeros(n_steps)
    for name in ("q", "qdot", "e1", "e2", "alpha", "u", "f_hat"):
        setattr(rec, name, np.zeros((n_steps, n)))
    for name in ("r", "j_hat", "e_c", "e_a", "l_a", "l_c", "dw_norm"):
        setattr(rec, name, np.zeros(n_steps))
    rec.l_c_bound = np.full(n_steps, np.inf)
    rec.l_a_bound = np.full(n_steps, np.inf)

    state = plant_mod.PlantState(
        np.asarray(cfg.plant.initial_position, dtype=float),
        np.asarray(cfg.plant.initial_velocity, dtype=float),
        0.0,
    )
    x1d_kp1 = traj(1)
    x1d_kp2 = traj(2)
    errors = compute_errors(state.q, state.qdot, traj(0), x1d_kp1, x1d_kp2, gains)
    e1, e2, alpha = errors.e1, errors.e2, errors.alpha
    r_k = stage_cost(e1, np.zeros(n), cost)  # no control applied before k=0
    j_prev: Optional[float] = None

    l_a, l_c = params.l_a, params.l_c
    inner_c, inner_a, inner_tol = cfg.learning.inner_critic, cfg.learning.inner_actor, cfg.learning.inner_tol
    use_f_hat_error = cfg.learning.actor_error_uses_f_hat
    stride = cfg.output.snapshot_stride
    blowup = cfg.run.blowup_bound
    m_hat_plus = params.m_hat_plus
    lr_window = cfg.learning.lr_window
    guard_window = cfg.learning.lr_guard_window
    guard_factor = cfg.learning.lr_guard_factor
    e1_sq = np.zeros(n_steps)  # for MSE-based rate scheduling
    prev_window_mse: Optional[float] = None
    prev_guard_mse: Optional[float] = None
    steps_done = 0
    diverged = False

    for k in range(n_steps):
        x_a = ac.build_actor_input(state.q, state.qdot, e1, e2, x1d_kp2)
        if learn:
            f_hat = actor.forward(x_a)
            u = compose_control(f_hat, e2, gains) if controller == "combined" else f_hat.copy()
        else:
            f_hat = np.zeros(n)
            u = c2 * e2

        inertia_k = plant_mod.sample_inertia(model, plant_rng)
        tau_d = plant_mod.disturbance_at(dist_spec, state.t, h, n, plant_rng)
        try:
            state_next = plant_mod.rk4_step(model, state, u, h, tau_d, inertia_k)
        except plant_mod.NonFiniteStateError:
            diverged = True
            steps_done = k
            break

        e1_next = tracking_error(state_next.q, x1d_kp1)
        r_next = stage_cost(e1_next, u, cost)
        alpha_next = virtual_control_next(e1, e2, state.q, state.qdot, x1d_kp2, gains)
        e2_next = state_next.qdot - alpha_next

        j_hat = e_c = e_a = 0.0
        dw_total = 0.0
        if learn:
            x_c = ac.build_critic_input(x_a, u)
            j_hat = ac.critic_forward(critic, x_c)
            if k == 0:
                j_prev = j_hat
            e_c = ac.td_error(j_hat, j_prev, r_k, params.gamma)
            bounds = monitor.observe(critic, actor)
            rec.l_c_bound[k] = bounds.l_c_bound
            rec.l_a_bound[k] = bounds.l_a_bound
            try:
                ec_i = e_c
                for i in range(inner_c):
                    if abs(ec_i) < inner_tol:
                        break
                    dw_total += ac.critic_update(critic, ec_i, params.gamma, l_c)
                    if i + 1 < inner_c:
                        ec_i = ac.td_error(ac.critic_forward(critic, x_c), j_prev, r_k, params.gamma)

                f_tilde = ac.estimate_f_tilde(m_hat_plus, e2_next, e2, c2)
                e_a = ac.actor_error(j_hat, f_hat if use_f_hat_error else f_tilde, params.u_c)
                ea_i = e_a
                for i in range(inner_a):
                    if abs(ea_i) < inner_tol:
                        break
                    dw_total += ac.actor_update(actor, critic, ea_i, l_a)
                    if i + 1 < inner_a:
                        f_v = ac.actor_forward(actor, x_a)
                        u_v = f_v + c2 * e2 if controller == "combined" else f_v
                        j_v = ac.critic_forward(critic, ac.build_critic_input(x_a, u_v))
                        ea_i = ac.actor_error(j_v, f_v if use_f_hat_error else f_tilde, params.u_c)
            except ac.DivergenceError:
                diverged = True
                steps_done = k
                break
            if not (np.isfinite(j_hat) and np.isfinite(e_c) and np.isfinite(e_a)):
                diverged = True
                steps_done = k
                break

        rec.t[k] = state.t
        rec.q[k] = state.q
        rec.qdot[k] = state.qdot
        rec.e1[k] = e1
        rec.e2[k] = e2
        rec.alpha[k] = alpha
        rec.u[k] = u
        rec.f_hat[k] = f_hat
        rec.r[k] = r_k
        rec.j_hat[k] = j_hat
        rec.e_c[k] = e_c
        rec.e_a[k] = e_a
        rec.l_a[k] = l_a
        rec.l_c[k] = l_c
        rec.dw_norm[k] = dw_total
        e1_sq[k] = float(e1 @ e1)
        if learn and k % stride == 0:
            rec.weight_snapshots[k] = _snapshot(critic, actor)
        steps_done = k + 1

        if not np.all(np.isfinite(e1_next)) or float(np.linalg.norm(e1_next)) > blowup:
            diverged = True
            break

        # MSE-based rate schedule: a short-window guard halves the rates when
        # tracking sharply worsens (learning-induced runaway); the long-window
        # rule halves them when improvement stalls. Halving never raises a
        # rate that is already at or below the floor.
        if learn and cfg.learning.lr_scheduling:
            floor = cfg.learning.lr_floor
            halve = False
            if (k + 1) % guard_window == 0:
                guard_mse = float(np.mean(e1_sq[k + 1 - guard_window : k + 1]))
                halve |= prev_guard_mse is not None and guard_mse > guard_factor * prev_guard_mse
                prev_guard_mse = guard_mse
            if (k + 1) % lr_window == 0:
                window_mse = float(np.mean(e1_sq[k + 1 - lr_window : k + 1]))
                halve |= prev_window_mse is not None and window_mse > 0.99 * prev_window_mse
                prev_window_mse = window_mse
            if halve:
                l_a = max(l_a * 0.5, min(floor, l_a))
                l_c = max(l_c * 0.5, min(floor, l_c))

        state = state_next
        e1 = e1_next
        e2 = e2_next
        alpha = alpha_next
        r_k = r_next
        if learn:
            j_prev = j_hat
        x1d_k = x1d_kp1
        x1d_kp1 = x1d_kp2
        x1d_kp2 = traj(k + 3)

    for name in ("t", "r", "j_hat", "e_c", "e_a", "l_a", "l_c", "dw_norm", "l_c_bound", "l_a_bound"):
        setattr(rec, name, getattr(rec, name)[:steps_done])
    for name in ("q", "qdot", "e1", "e2", "alpha", "u", "f_hat"):
        setattr(rec, name, getattr(rec, name)[:steps_done])
    if learn:
        if steps_done > 0:
            rec.weight_snapshots[steps_done - 1] = _snapshot(critic, actor)
        rec.min_l_c_bound = monitor.min_l_c_bound
        rec.min_l_a_bound = monitor.min_l_a_bound
        rec.rates_ok = monitor.rates_ok
    if diverged:
        rec.outcome = Outcome.DIVERGED
        rec.success = False
    return rec


def _snapshot(critic: ac.Mlp, actor: ac.Mlp) -> dict:
    return {
        "w_c1": critic.w1.copy(),
        "w_c2": critic.w2.copy(),
        "w_a1": actor.w1.copy(),
        "w_a2": actor.w2.copy(),
    }
