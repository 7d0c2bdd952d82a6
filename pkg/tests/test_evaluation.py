import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st

from dhdp_tracking.config import config_from_dict
from dhdp_tracking.evaluation import (
    TABLE1_SCENARIOS,
    baseline_controller,
    judge,
    mse,
    run_paired_trial,
    run_scenario_suite,
    scenario_config,
    suite_rows,
)
from dhdp_tracking.trainer import Outcome, TrialRecord, run_trial


def record_with_e1(e1, outcome=Outcome.FAILURE):
    rec = TrialRecord(h=0.02, gamma=0.95, seed=None, controller="combined")
    rec.e1 = np.asarray(e1, dtype=float).reshape(len(e1), -1)
    rec.t = np.zeros(len(e1))
    rec.outcome = outcome
    return rec


class TestMse:
    def test_constant_error(self):
        assert mse(np.full(10, 0.1), 0, 10) == pytest.approx(0.01)

    def test_all_zero(self):
        assert mse(np.zeros(10), 2, 8) == 0.0

    def test_two_sample_window(self):
        assert mse(np.array([0.1, 0.3]), 0, 2) == pytest.approx(0.05)

    def test_multi_joint_sums_squared_norm(self):
        e1 = np.array([[0.1, 0.2], [0.1, 0.2]])
        assert mse(e1, 0, 2) == pytest.approx(0.05)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            mse(np.zeros(10), 5, 5)
        with pytest.raises(ValueError):
            mse(np.zeros(10), 0, 11)

    @given(st.floats(0.01, 10.0))
    @settings(max_examples=30, deadline=None)
    def test_quadratic_scaling(self, c):
        e1 = np.linspace(-1, 1, 20)
        assert mse(c * e1, 0, 20) == pytest.approx(c * c * mse(e1, 0, 20), rel=1e-9)

    def test_window_translation_invariance(self):
        e1 = np.tile([0.1, 0.3], 10)
        assert mse(e1, 0, 2) == pytest.approx(mse(e1, 10, 12))


class TestJudge:
    def test_half_vs_half_success(self):
        rec = record_with_e1(np.concatenate([np.full(10, 0.3), np.full(10, 0.1)]))
        success, ref, late = judge(rec, "half_vs_half")
        assert success and late < ref

    def test_equal_halves_fail_strictly(self):
        rec = record_with_e1(np.full(20, 0.1))
        success, ref, late = judge(rec, "half_vs_half")
        assert not success and ref == late

    def test_vs_baseline_requires_pair(self):
        rec = record_with_e1(np.full(20, 0.1))
        with pytest.raises(ValueError):
            judge(rec, "vs_baseline")

    def test_vs_baseline_comparison(self):
        rec = record_with_e1(np.full(20, 0.1))
        base = record_with_e1(np.full(20, 0.2))
        success, ref, late = judge(rec, "vs_baseline", base)
        assert success and ref == pytest.approx(0.04) and late == pytest.approx(0.01)

    def test_diverged_never_succeeds(self):
        rec = record_with_e1(np.concatenate([np.full(10, 0.3), np.full(10, 0.1)]), Outcome.DIVERGED)
        success, _, _ = judge(rec, "half_vs_half")
        assert not success


class TestBaselines:
    def test_kind_resolution(self):
        assert baseline_controller("stabilizing_only") == "stabilizing_only"
        assert baseline_controller("dhdp_only") == "dhdp_only"
        with pytest.raises(ValueError):
            baseline_controller("pid")

    def test_stabilizing_zero_errors_means_zero_torque(self):
        cfg = config_from_dict(
            {"plant": {"initial_position": [0.0], "initial_velocity": [0.0]},
             "trajectory": {"amplitude": 0.0},
             "run": {"samples": 50}}
        )
        rec = run_trial(cfg, seed=0, controller="stabilizing_only")
        np.testing.assert_allclose(rec.u, 0.0, atol=1e-15)
        np.testing.assert_allclose(rec.e1, 0.0, atol=1e-15)

    def test_dhdp_only_uses_raw_actor_output(self):
        cfg = config_from_dict({"run": {"samples": 60}})
        rec = run_trial(cfg, seed=2, controller="dhdp_only")
        np.testing.assert_array_equal(rec.u, rec.f_hat)

    def test_combined_composes_feedback(self):
        cfg = config_from_dict({"run": {"samples": 60}})
        rec = run_trial(cfg, seed=2)
        np.testing.assert_allclose(rec.u, rec.f_hat + cfg.controller.c2 * rec.e2, atol=1e-12)


class TestPairing:
    def test_paired_baseline_deterministic_under_noise(self):
        cfg = config_from_dict(
            {"plant": {"disturbance": {"kind": "gaussian", "mean": 0.0, "std": 8.25}},
             "run": {"samples": 300, "criterion": "vs_baseline"}}
        )
        r1, b1 = run_paired_trial(cfg, seed=9)
        r2, b2 = run_paired_trial(cfg, seed=9)
        np.testing.assert_array_equal(b1.q, b2.q)
        np.testing.assert_array_equal(r1.q, r2.q)
        # same plant stream, different controller: trajectories diverge but
        # the disturbance draws are shared, so the baseline is reproducible
        # from the trial seed alone
        assert b1.controller == "stabilizing_only"


class TestScenarios:
    def test_grid_matches_benchmark_rows(self):
        assert len(TABLE1_SCENARIOS) == 9
        assert TABLE1_SCENARIOS[0].initial_state == (-0.1, 0.1)
        assert TABLE1_SCENARIOS[4].disturbance == "pulse"
        assert TABLE1_SCENARIOS[5].disturbance == "gaussian"
        assert TABLE1_SCENARIOS[6].length == 2.0
        assert TABLE1_SCENARIOS[7] == replace(TABLE1_SCENARIOS[7], mass=2.0, length=2.0)
        assert TABLE1_SCENARIOS[8].inertia_variant == "V"

    def test_scenario_config_applies_row(self):
        base = config_from_dict({})
        cfg = scenario_config(base, TABLE1_SCENARIOS[8])
        assert cfg.plant.inertia_std == 0.5
        assert cfg.run.criterion == "vs_baseline"
        cfg = scenario_config(base, TABLE1_SCENARIOS[7])
        assert cfg.plant.mass == 2.0 and cfg.plant.half_length == 2.0

    def test_two_link_base_rejected(self):
        base = config_from_dict({"plant": {"model": "two_link", "initial_position": [0, 0],
                                            "initial_velocity": [0, 0]},
                                 "controller": {"m_hat_plus": [[347.3, 19.6], [19.6, 19.6]]}})
        with pytest.raises(ValueError):
            scenario_config(base, TABLE1_SCENARIOS[0])

    def test_one_trial_smoke_suite(self):
        base = config_from_dict({"run": {"samples": 240, "reset_cap": 2}})
        report = run_scenario_suite(base, n_trials=1, workers=1, base_seed=5)
        assert len(report.results) == 9
        rows = suite_rows(report)
        assert {r["case"] for r in rows} == set(range(1, 10))
        for row in rows:
            assert 0.0 <= row["success_rate"] <= 1.0
            assert row["resets"] >= 0
            assert np.isfinite(row["baseline_mse_late"])
