import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhdp_tracking import actor_critic as ac
from dhdp_tracking import plant
from dhdp_tracking.backstepping import GainSet, SineTrajectory, compute_errors


def make_nets(rng, n=1, hc=4, ha=4, scale=0.3):
    critic = ac.Mlp.initialize(rng, 6 * n, hc, 1, scale)
    actor = ac.Mlp.initialize(rng, 5 * n, ha, n, scale)
    return critic, actor


class TestActivation:
    def test_zero(self):
        assert ac.activation(np.array([0.0]))[0] == 0.0

    def test_reference_value(self):
        # (1 - e^-2) / (1 + e^-2) equals tanh(1)
        assert ac.activation(np.array([2.0]))[0] == pytest.approx(math.tanh(1.0), abs=1e-12)
        assert ac.activation(np.array([2.0]))[0] == pytest.approx(0.76159, abs=1e-5)

    def test_matches_rational_form(self):
        v = np.linspace(-20, 20, 101)
        rational = (1.0 - np.exp(-v)) / (1.0 + np.exp(-v))
        np.testing.assert_allclose(ac.activation(v), rational, atol=1e-14)

    @given(st.floats(-500, 500))
    @settings(max_examples=100, deadline=None)
    def test_odd(self, v):
        arr = np.array([v])
        np.testing.assert_allclose(ac.activation(-arr), -ac.activation(arr), atol=1e-15)

    def test_saturates_in_open_interval(self):
        out = ac.activation(np.array([-1e6, 1e6]))
        assert -1.0 <= out[0] < 0 < out[1] <= 1.0

    def test_derivative_matches_finite_difference(self):
        v = np.linspace(-3, 3, 13)
        eps = 1e-6
        fd = (ac.activation(v + eps) - ac.activation(v - eps)) / (2 * eps)
        np.testing.assert_allclose(ac.activation_deriv_from_phi(ac.activation(v)), fd, atol=1e-9)


class TestForward:
    def test_zero_output_layer(self):
        critic = ac.Mlp(np.ones((3, 6)), np.zeros((1, 3)))
        assert ac.critic_forward(critic, np.ones(6)) == 0.0

    def test_zero_everything(self):
        critic = ac.Mlp(np.zeros((3, 6)), np.zeros((1, 3)))
        assert ac.critic_forward(critic, np.zeros(6)) == 0.0

    def test_against_handwritten_loop(self):
        rng = np.random.default_rng(5)
        net = ac.Mlp.initialize(rng, 6, 6, 1, 0.5)
        x = rng.normal(size=6)
        got = ac.critic_forward(net, x)
        total = 0.0
        for i in range(6):
            v = sum(net.w1[i, j] * x[j] for j in range(6))
            phi = (1.0 - math.exp(-v)) / (1.0 + math.exp(-v))
            total += net.w2[0, i] * phi
        assert got == pytest.approx(total, abs=1e-12)

    def test_actor_vector_output(self):
        rng = np.random.default_rng(6)
        net = ac.Mlp.initialize(rng, 10, 5, 2, 0.5)
        x = rng.normal(size=10)
        got = ac.actor_forward(net, x)
        want = net.w2 @ np.tanh(0.5 * (net.w1 @ x))
        np.testing.assert_allclose(got, want, atol=1e-14)
        assert got.shape == (2,)

    def test_output_bound(self):
        rng = np.random.default_rng(7)
        net = ac.Mlp.initialize(rng, 5, 8, 1, 0.5)
        out = ac.actor_forward(net, rng.normal(size=5) * 100)
        assert abs(out[0]) <= np.linalg.norm(net.w2) * np.sqrt(8)

    def test_input_builders(self):
        x1, x2 = np.array([1.0]), np.array([2.0])
        e1, e2 = np.array([3.0]), np.array([4.0])
        x1d = np.array([5.0])
        x_a = ac.build_actor_input(x1, x2, e1, e2, x1d)
        np.testing.assert_array_equal(x_a, [1, 2, 3, 4, 5])
        x_c = ac.build_critic_input(x_a, np.array([6.0]))
        np.testing.assert_array_equal(x_c, [1, 2, 3, 4, 5, 6])


class TestTdError:
    def test_all_zero(self):
        assert ac.td_error(0.0, 0.0, 0.0, 0.95) == 0.0

    def test_bellman_consistent_point(self):
        assert ac.td_error(1.0, 1.0, 0.05, 0.95) == pytest.approx(0.0, abs=1e-15)

    def test_pure_cost(self):
        assert ac.td_error(0.0, 0.0, 1.0, 0.95) == 1.0


class TestCriticUpdate:
    def test_zero_error_no_change(self):
        rng = np.random.default_rng(8)
        critic, _ = make_nets(rng)
        ac.critic_forward(critic, rng.normal(size=6))
        w1, w2 = critic.w1.copy(), critic.w2.copy()
        ac.critic_update(critic, 0.0, 0.95, 0.01)
        np.testing.assert_array_equal(critic.w1, w1)
        np.testing.assert_array_equal(critic.w2, w2)

    def test_scalar_case_hand_derived(self):
        # one hidden node, one input: dE/dw2 = gamma e phi, dE/dw1 = gamma e w2 (1-phi^2)/2 x
        critic = ac.Mlp(np.array([[0.4]]), np.array([[0.7]]))
        x = np.array([1.3])
        ac.critic_forward(critic, x)
        phi = math.tanh(0.5 * 0.4 * 1.3)
        e_c, gamma, l_c = 0.9, 0.95, 0.05
        ac.critic_update(critic, e_c, gamma, l_c)
        want_w2 = 0.7 - l_c * gamma * e_c * phi
        want_w1 = 0.4 - l_c * gamma * e_c * 0.7 * 0.5 * (1 - phi**2) * 1.3
        assert critic.w2[0, 0] == pytest.approx(want_w2, abs=1e-15)
        assert critic.w1[0, 0] == pytest.approx(want_w1, abs=1e-15)

    def test_objective_decreases(self):
        rng = np.random.default_rng(9)
        critic, _ = make_nets(rng)
        x_c = rng.normal(size=6)
        j_prev, r_k, gamma = 0.4, 0.2, 0.95
        j0 = ac.critic_forward(critic, x_c)
        e0 = ac.td_error(j0, j_prev, r_k, gamma)
        ac.critic_update(critic, e0, gamma, 1e-3)
        e1 = ac.td_error(ac.critic_forward(critic, x_c), j_prev, r_k, gamma)
        assert e1**2 < e0**2


class TestActorError:
    def test_zero(self):
        assert ac.actor_error(0.0, np.zeros(1)) == 0.0

    def test_sum(self):
        assert ac.actor_error(0.5, np.array([0.25])) == pytest.approx(0.75)

    def test_exact_model_residual_vanishes(self):
        # with the exact feed-forward and the exact inertia estimate, the
        # measured residual reduces to numerical noise on the design model
        model = plant.SingleLink()
        gains = GainSet(0.7, -5.0, 0.02, 62500.0)
        traj = SineTrajectory((0.5,), (0.5,), (0.0,), 0.02)
        state = plant.PlantState(np.array([-0.1]), np.array([0.1]), 0.0)
        err = compute_errors(state.q, state.qdot, traj(0), traj(1), traj(2), gains)
        q1 = state.q + gains.h * state.qdot
        dm = plant.design_model_at(model, state, plant.PlantState(q1, state.qdot, gains.h), gains.h)
        f_exact = dm.g + dm.mplus @ err.alpha_next
        u = f_exact + gains.c2 * err.e2
        nxt = plant.euler_design_step(model, state, u, gains.h)
        e2_next = nxt.qdot - err.alpha_next
        f_tilde = ac.estimate_f_tilde(dm.mplus, e2_next, err.e2, gains.c2)
        assert np.linalg.norm(f_tilde) < 1e-9


class TestActorUpdate:
    def test_zero_error_no_change(self):
        rng = np.random.default_rng(10)
        critic, actor = make_nets(rng)
        x_a = rng.normal(size=5)
        u = ac.actor_forward(actor, x_a) + 0.1
        ac.critic_forward(critic, ac.build_critic_input(x_a, u))
        w1, w2 = actor.w1.copy(), actor.w2.copy()
        ac.actor_update(actor, critic, 0.0, 0.01)
        np.testing.assert_array_equal(actor.w1, w1)
        np.testing.assert_array_equal(actor.w2, w2)

    def test_detached_control_slot_no_change(self):
        rng = np.random.default_rng(11)
        critic, actor = make_nets(rng)
        critic.w1[:, -1] = 0.0  # critic ignores the control input
        x_a = rng.normal(size=5)
        u = ac.actor_forward(actor, x_a)
        ac.critic_forward(critic, ac.build_critic_input(x_a, u))
        w1, w2 = actor.w1.copy(), actor.w2.copy()
        ac.actor_update(actor, critic, 2.5, 0.01)
        np.testing.assert_array_equal(actor.w1, w1)
        np.testing.assert_array_equal(actor.w2, w2)

    def test_update_locality(self):
        rng = np.random.default_rng(12)
        critic, actor = make_nets(rng)
        x_a = rng.normal(size=5)
        u = ac.actor_forward(actor, x_a)
        ac.critic_forward(critic, ac.build_critic_input(x_a, u))
        aw1, aw2 = actor.w1.copy(), actor.w2.copy()
        ac.critic_update(critic, 0.3, 0.95, 0.01)
        np.testing.assert_array_equal(actor.w1, aw1)
        np.testing.assert_array_equal(actor.w2, aw2)
        cw1, cw2 = critic.w1.copy(), critic.w2.copy()
        ac.actor_update(actor, critic, 0.3, 0.01)
        np.testing.assert_array_equal(critic.w1, cw1)
        np.testing.assert_array_equal(critic.w2, cw2)

    def test_single_node_symbolic_match(self):
        # scalar network chain written out by hand
        critic = ac.Mlp(np.array([[0.3, -0.2]]), np.array([[0.6]]))  # x_c = [x_a, u]
        actor = ac.Mlp(np.array([[0.5]]), np.array([[0.4]]))
        x_a = np.array([0.9])
        f = ac.actor_forward(actor, x_a)
        u = f + 1.0
        x_c = ac.build_critic_input(x_a, u)
        ac.critic_forward(critic, x_c)
        phi_c = math.tanh(0.5 * (0.3 * 0.9 - 0.2 * u[0]))
        phi_a = math.tanh(0.5 * 0.5 * 0.9)
        e_a, l_a = 1.1, 0.02
        j_u = 0.6 * 0.5 * (1 - phi_c**2) * (-0.2)
        want_dw2 = -l_a * e_a * j_u * phi_a
        want_dw1 = -l_a * e_a * j_u * 0.4 * 0.5 * (1 - phi_a**2) * 0.9
        w1_0, w2_0 = actor.w1[0, 0], actor.w2[0, 0]
        ac.actor_update(actor, critic, e_a, l_a)
        assert actor.w2[0, 0] - w2_0 == pytest.approx(want_dw2, abs=1e-12)
        assert actor.w1[0, 0] - w1_0 == pytest.approx(want_dw1, abs=1e-12)


def fd_grad(fun, w, eps=1e-6):
    g = np.zeros_like(w)
    it = np.nditer(w, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = w[idx]
        w[idx] = orig + eps
        ep = fun()
        w[idx] = orig - eps
        em = fun()
        w[idx] = orig
        g[idx] = (ep - em) / (2 * eps)
    return g


def rel_err(analytic, numeric):
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-9)


class TestGradientOracle:
    """Analytic updates vs central finite differences of both objectives."""

    def test_hundred_random_instances(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 3))
            hc = int(rng.integers(1, 9))
            ha = int(rng.integers(1, 9))
            # moderate scales keep the activations off their saturated tails,
            # where finite differences lose all precision
            critic = ac.Mlp.initialize(rng, 6 * n, hc, 1, 0.3)
            actor = ac.Mlp.initialize(rng, 5 * n, ha, n, 0.3)
            x_a = rng.uniform(-0.8, 0.8, 5 * n)
            e2 = rng.uniform(-0.8, 0.8, n)
            c2 = float(rng.uniform(-5, -0.5))
            gamma = 0.95
            j_prev = float(rng.normal())
            r_k = float(rng.uniform(0, 2))
            res_norm = float(rng.uniform(0, 2))

            f_hat = ac.actor_forward(actor, x_a)
            u = f_hat + c2 * e2
            x_c = ac.build_critic_input(x_a, u)

            def critic_loss():
                j = float((critic.w2 @ np.tanh(0.5 * (critic.w1 @ x_c)))[0])
                return 0.5 * (gamma * j - (j_prev - r_k)) ** 2

            fd_c1 = fd_grad(critic_loss, critic.w1)
            fd_c2 = fd_grad(critic_loss, critic.w2)
            e_c = ac.td_error(ac.critic_forward(critic, x_c), j_prev, r_k, gamma)
            before = (critic.w1.copy(), critic.w2.copy())
            ac.critic_update(critic, e_c, gamma, l_c=1.0)
            worst = max(worst, rel_err(before[0] - critic.w1, fd_c1))
            worst = max(worst, rel_err(before[1] - critic.w2, fd_c2))

            def actor_loss():
                f = actor.w2 @ np.tanh(0.5 * (actor.w1 @ x_a))
                xc = np.concatenate([x_a, f + c2 * e2])
                j = float((critic.w2 @ np.tanh(0.5 * (critic.w1 @ xc)))[0])
                return 0.5 * (j + res_norm) ** 2

            fd_a1 = fd_grad(actor_loss, actor.w1)
            fd_a2 = fd_grad(actor_loss, actor.w2)
            f_hat = ac.actor_forward(actor, x_a)
            j_hat = ac.critic_forward(critic, ac.build_critic_input(x_a, f_hat + c2 * e2))
            e_a = j_hat + res_norm
            before = (actor.w1.copy(), actor.w2.copy())
            ac.actor_update(actor, critic, e_a, l_a=1.0)
            worst = max(worst, rel_err(before[0] - actor.w1, fd_a1))
            worst = max(worst, rel_err(before[1] - actor.w2, fd_a2))
        assert worst < 1e-5


class TestRateConditions:
    def test_zero_weights_trivially_satisfied(self):
        params = ac.LearningParams(0.01, 0.01, 0.95, 9.0, 20.0, 90.0, 0.0, np.eye(1) * 250)
        critic = ac.Mlp(np.zeros((4, 6)), np.zeros((1, 4)))
        actor = ac.Mlp(np.zeros((4, 5)), np.zeros((1, 4)))
        ac.critic_forward(critic, np.zeros(6))
        ac.actor_forward(actor, np.zeros(5))
        bounds = ac.rate_bounds(params, critic, actor)
        assert bounds.l_c_bound == np.inf and bounds.l_a_bound == np.inf
        verdict = ac.check_learning_rates(params, critic, actor)
        assert verdict["l_c_ok"] and verdict["l_a_ok"]

    def test_unit_norm_arithmetic(self):
        # substituting unit norms into the critic-rate expression:
        # (b2 - g) / (g^2 b2 (1 + 1/b2)) with b2 = 2g, g = 0.95
        gamma = 0.95
        beta2 = 2 * gamma
        bound = (beta2 - gamma) / (gamma**2 * beta2 * (1.0 + 1.0 / beta2))
        assert bound == pytest.approx(1.0 / (2 * gamma**2 + gamma), abs=1e-12)
        assert bound == pytest.approx(0.362976, abs=1e-6)

    def test_formula_against_direct_norms(self):
        rng = np.random.default_rng(21)
        params = ac.LearningParams(0.01, 0.01, 0.95, 9.0, 20.0, 90.0, 0.0, np.eye(2) * 100)
        critic, actor = make_nets(rng, n=2, hc=5, ha=4, scale=0.4)
        x_a = rng.normal(size=10)
        u = ac.actor_forward(actor, x_a)
        x_c = ac.build_critic_input(x_a, u)
        ac.critic_forward(critic, x_c)
        bounds = ac.rate_bounds(params, critic, actor)

        g, b1, b2, b3 = params.gamma, params.beta1, params.beta2, params.beta3
        phi_c, phi_a = critic.phi, actor.phi
        a_vec = 0.5 * (1 - phi_c**2) * critic.w2[0]
        lc_want = (b2 - g) / (g**2 * b2 * (phi_c @ phi_c + (a_vec @ a_vec) * (x_c @ x_c) / b2))
        c_mat = 0.5 * (1 - phi_c**2)[:, None] * critic.w1[:, -2:]
        wc2c = critic.w2[0] @ c_mat
        d_mat = actor.w2 * (0.5 * (1 - phi_a**2))[None, :]
        chain = wc2c @ d_mat
        la_want = (b3 - b1) / (b3 * (wc2c @ wc2c) * (phi_a @ phi_a) + b1 * (chain @ chain) * (x_a @ x_a))
        assert bounds.l_c_bound == pytest.approx(lc_want, rel=1e-12)
        assert bounds.l_a_bound == pytest.approx(la_want, rel=1e-12)

    def test_bound_monotone_in_beta2(self):
        rng = np.random.default_rng(22)
        critic, actor = make_nets(rng, scale=0.4)
        x_a = rng.normal(size=5)
        u = ac.actor_forward(actor, x_a)
        ac.critic_forward(critic, ac.build_critic_input(x_a, u))
        prev = 0.0
        for beta2 in (1.0, 2.0, 5.0, 20.0):
            params = ac.LearningParams(0.01, 0.01, 0.95, 9.0, beta2, 90.0, 0.0, np.eye(1))
            bound = ac.rate_bounds(params, critic, actor).l_c_bound
            assert bound > prev
            prev = bound

    def test_monitor_tracks_running_min(self):
        rng = np.random.default_rng(23)
        params = ac.LearningParams(0.01, 0.01, 0.95, 9.0, 20.0, 90.0, 0.0, np.eye(1) * 250)
        critic, actor = make_nets(rng, scale=0.4)
        monitor = ac.RateMonitor(params)
        seen = []
        for _ in range(20):
            x_a = rng.normal(size=5)
            u = ac.actor_forward(actor, x_a)
            ac.critic_forward(critic, ac.build_critic_input(x_a, u))
            seen.append(monitor.observe(critic, actor))
        assert monitor.min_l_c_bound == pytest.approx(min(b.l_c_bound for b in seen))
        assert monitor.min_l_a_bound == pytest.approx(min(b.l_a_bound for b in seen))
        assert monitor.steps == 20


class TestLearningParams:
    def test_beta_ordering_enforced(self):
        with pytest.raises(ValueError):
            ac.LearningParams(0.01, 0.01, 0.95, 9.0, 0.5, 90.0, 0.0, np.eye(1))
        with pytest.raises(ValueError):
            ac.LearningParams(0.01, 0.01, 0.95, 5.0, 20.0, 90.0, 0.0, np.eye(1))  # beta1 < 8/g^2

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            ac.LearningParams(0.01, 0.01, 1.2, 9.0, 20.0, 90.0, 0.0, np.eye(1))
