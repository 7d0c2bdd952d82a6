"""One-hidden-layer critic and actor networks with hand-derived gradient
updates, plus the runtime learning-rate condition check.

The activation is phi(v) = (1 - exp(-v)) / (1 + exp(-v)) (equal to
tanh(v/2)); its derivative is written everywhere as (1 - phi^2)/2.

Critic:  J_hat = w_c2 . phi(w_c1 x_c),  x_c = [x_a, u]
Actor:   f_hat = w_a2 . phi(w_a1 x_a),  x_a = [x1, x2, e1, e2, x1d(k+2)]

The critic minimizes E_c = e_c^2 / 2 with the temporal-difference error
e_c = gamma J_hat(k) - (J_hat(k-1) - r(k)). The actor minimizes
E_a = e_a^2 / 2 with e_a = J_hat + ||f_tilde_est|| - U_c, descending through
the critic's u-input path: the shared chain factor is
(w_c2 * (1 - phi_c^2)/2) @ w_cu, where w_cu is the block of w_c1 connected
to the control slots of x_c.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class DivergenceError(RuntimeError):
    """A weight update produced NaN or Inf."""


def activation(v: np.ndarray) -> np.ndarray:
    """Componentwise phi(v) = (1 - e^-v) / (1 + e^-v); saturates in (-1, 1)."""
    # tanh(v/2) is the same function without overflow for large |v|
    return np.tanh(0.5 * np.asarray(v, dtype=float))


def activation_deriv_from_phi(phi: np.ndarray) -> np.ndarray:
    """dphi/dv expressed through the activation value: (1 - phi^2) / 2."""
    return 0.5 * (1.0 - phi**2)


class Mlp:
    """One-hidden-layer network, weights ``w1`` (hidden x in) and ``w2``
    (out x in hidden), caching the last forward pass for the update rules."""

    def __init__(self, w1: np.ndarray, w2: np.ndarray):
        self.w1 = np.asarray(w1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w2.shape[1] != self.w1.shape[0]:
            raise ValueError(f"inconsistent shapes w1{self.w1.shape} w2{self.w2.shape}")
        self.x: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.phi: Optional[np.ndarray] = None

    @classmethod
    def initialize(cls, rng: np.random.Generator, n_in: int, n_hidden: int, n_out: int, scale: float = 0.5) -> "Mlp":
        """Uniform init in [-scale, scale], small enough to avoid saturation."""
        w1 = rng.uniform(-scale, scale, size=(n_hidden, n_in))
        w2 = rng.uniform(-scale, scale, size=(n_out, n_hidden))
        return cls(w1, w2)

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_in,):
            raise ValueError(f"input shape {x.shape}, expected ({self.n_in},)")
        self.x = x
        self.v = self.w1 @ x
        self.phi = activation(self.v)
        return self.w2 @ self.phi

    def weights_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2)))

    def copy(self) -> "Mlp":
        twin = Mlp(self.w1.copy(), self.w2.copy())
        if self.x is not None:
            twin.x, twin.v, twin.phi = self.x.copy(), self.v.copy(), self.phi.copy()
        return twin


@dataclass(frozen=True)
class LearningParams:
    """Learning rates, discount, condition-check weighting factors, the
    performance target, and the fixed inertia estimate used by the actor
    error signal."""

    l_a: float
    l_c: float
    gamma: float
    beta1: float
    beta2: float
    beta3: float
    u_c: float
    m_hat_plus: np.ndarray

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.l_a < 0 or self.l_c < 0:
            raise ValueError("learning rates must be non-negative")
        if not self.beta2 > self.gamma:
            raise ValueError("beta2 must exceed gamma")
        if not self.beta3 > self.beta1 > 8.0 / self.gamma**2:
            raise ValueError("need beta3 > beta1 > 8 / gamma^2")
        object.__setattr__(self, "m_hat_plus", np.atleast_2d(np.asarray(self.m_hat_plus, dtype=float)))


def build_actor_input(x1, x2, e1, e2, x1d_kplus2) -> np.ndarray:
    """x_a = [x1, x2, e1, e2, x1d(k+2)], length 5n, ordering fixed."""
    return np.concatenate([x1, x2, e1, e2, x1d_kplus2])


def build_critic_input(x_a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """x_c = [x_a, u]; the control occupies the trailing slots."""
    return np.concatenate([x_a, u])


def critic_forward(net: Mlp, x_c: np.ndarray) -> float:
    """Cost-to-go estimate J_hat = w_c2 . phi(w_c1 x_c); caches phi_c."""
    out = net.forward(x_c)
    return float(out[0])


def actor_forward(net: Mlp, x_a: np.ndarray) -> np.ndarray:
    """Feed-forward estimate f_hat = w_a2 . phi(w_a1 x_a); caches phi_a."""
    return net.forward(x_a)


def td_error(jhat_k: float, jhat_km1: float, r_k: float, gamma: float) -> float:
    """Temporal-difference error e_c = gamma J_hat(k) - (J_hat(k-1) - r(k))."""
    return gamma * jhat_k - (jhat_km1 - r_k)


def critic_update(net: Mlp, e_c: float, gamma: float, l_c: float) -> float:
    """Gradient step on E_c = e_c^2 / 2; both layers move from the same
    pre-update snapshot. Returns the Frobenius norm of the combined change."""
    if net.phi is None:
        raise ValueError("forward pass must be cached before updating")
    phi, x = net.phi, net.x
    w2_row = net.w2[0]
    scale = l_c * gamma * e_c
    dw2 = -scale * phi
    dw1 = -scale * np.outer(w2_row * activation_deriv_from_phi(phi), x)
    net.w2 = net.w2 + dw2[None, :]
    net.w1 = net.w1 + dw1
    if not net.weights_finite():
        raise DivergenceError("critic weights became non-finite")
    return float(np.sqrt(np.sum(dw1**2) + np.sum(dw2**2)))


def actor_error(jhat: float, f_tilde_est: np.ndarray, u_c: float = 0.0) -> float:
    """Actor training error e_a = J_hat + ||f_tilde_est|| - U_c.

    ``f_tilde_est`` is the measured feed-forward residual
    M_hat_plus e2(k+1) - c2 e2(k) (disturbance taken as zero)."""
    return float(jhat + np.linalg.norm(f_tilde_est) - u_c)


def estimate_f_tilde(m_hat_plus: np.ndarray, e2_next: np.ndarray, e2: np.ndarray, c2: float) -> np.ndarray:
    """Feed-forward residual estimate from consecutive velocity errors."""
    return np.atleast_2d(m_hat_plus) @ e2_next - c2 * e2


def _critic_chain_to_u(critic: Mlp, n_ctrl: int) -> np.ndarray:
    """dJ_hat/du through the critic: (w_c2 * (1 - phi_c^2)/2) @ w_cu."""
    w_cu = critic.w1[:, -n_ctrl:]
    return (critic.w2[0] * activation_deriv_from_phi(critic.phi)) @ w_cu


def actor_update(actor: Mlp, critic: Mlp, e_a: float, l_a: float) -> float:
    """Gradient step on E_a = e_a^2 / 2 through the critic's control path.

    Requires both networks' forward caches from the current step. The
    hidden-to-output change is -l_a e_a outer(dJ/du, phi_a); the
    input-to-hidden change propagates dJ/du through w_a2 and the activation
    derivative. Returns the Frobenius norm of the combined change."""
    if actor.phi is None or critic.phi is None:
        raise ValueError("forward passes must be cached before updating")
    j_u = _critic_chain_to_u(critic, actor.n_out)
    phi_a, x_a = actor.phi, actor.x
    dw2 = -l_a * e_a * np.outer(j_u, phi_a)
    hidden_factor = (actor.w2.T @ j_u) * activation_deriv_from_phi(phi_a)
    dw1 = -l_a * e_a * np.outer(hidden_factor, x_a)
    actor.w2 = actor.w2 + dw2
    actor.w1 = actor.w1 + dw1
    if not actor.weights_finite():
        raise DivergenceError("actor weights became non-finite")
    return float(np.sqrt(np.sum(dw1**2) + np.sum(dw2**2)))


@dataclass(frozen=True)
class RateBounds:
    """Right-hand sides of the two learning-rate conditions at one step;
    ``inf`` marks a degenerate denominator (trivially satisfied)."""

    l_c_bound: float
    l_a_bound: float


def rate_bounds(params: LearningParams, critic: Mlp, actor: Mlp) -> RateBounds:
    """Evaluate the per-step learning-rate bounds from the cached forward
    passes (weights and activations at the current step, before updates).

    l_c bound: (b2 - g) / (g^2 b2 (||phi_c||^2 + ||A||^2 ||x_c||^2 / b2)),
        A = (1 - phi_c^2)/2 * w_c2
    l_a bound: (b3 - b1) / (b3 ||w_c2 C||^2 ||phi_a||^2
                            + b1 ||w_c2 C D^T||^2 ||x_a||^2),
        C = (1 - phi_c^2)/2 * w_cu (rowwise),  D = w_a2 * (1 - phi_a^2)/2
    """
    if critic.phi is None or actor.phi is None:
        raise ValueError("forward passes must be cached before checking rates")
    g, b1, b2, b3 = params.gamma, params.beta1, params.beta2, params.beta3
    phi_c, x_c = critic.phi, critic.x
    phi_a, x_a = actor.phi, actor.x
    n_ctrl = actor.n_out

    a_vec = activation_deriv_from_phi(phi_c) * critic.w2[0]
    denom_c = g**2 * b2 * (phi_c @ phi_c + (a_vec @ a_vec) * (x_c @ x_c) / b2)
    l_c_bound = (b2 - g) / denom_c if denom_c > 0 else np.inf

    c_mat = activation_deriv_from_phi(phi_c)[:, None] * critic.w1[:, -n_ctrl:]
    wc2_c = critic.w2[0] @ c_mat
    d_mat = actor.w2 * activation_deriv_from_phi(phi_a)[None, :]
    chain = wc2_c @ d_mat
    denom_a = b3 * (wc2_c @ wc2_c) * (phi_a @ phi_a) + b1 * (chain @ chain) * (x_a @ x_a)
    l_a_bound = (b3 - b1) / denom_a if denom_a > 0 else np.inf

    return RateBounds(float(l_c_bound), float(l_a_bound))


@dataclass
class RateMonitor:
    """Tracks the per-step learning-rate bounds and their running minima
    over a trial; the configured rates must stay below the running minima."""

    params: LearningParams
    min_l_c_bound: float = np.inf
    min_l_a_bound: float = np.inf
    steps: int = 0

    def observe(self, critic: Mlp, actor: Mlp) -> RateBounds:
        bounds = rate_bounds(self.params, critic, actor)
        self.min_l_c_bound = min(self.min_l_c_bound, bounds.l_c_bound)
        self.min_l_a_bound = min(self.min_l_a_bound, bounds.l_a_bound)
        self.steps += 1
        return bounds

    @property
    def rates_ok(self) -> bool:
        return self.params.l_c < self.min_l_c_bound and self.params.l_a < self.min_l_a_bound


def check_learning_rates(params: LearningParams, critic: Mlp, actor: Mlp) -> dict:
    """One-shot verdict at the current step: bounds plus pass flags."""
    bounds = rate_bounds(params, critic, actor)
    return {
        "l_c_bound": bounds.l_c_bound,
        "l_a_bound": bounds.l_a_bound,
        "l_c_ok": params.l_c < bounds.l_c_bound,
        "l_a_ok": params.l_a < bounds.l_a_bound,
    }
