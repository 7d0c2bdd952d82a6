"""Rigid-link benchmark plants: continuous dynamics, RK4 ground truth, and the
Euler-discretized design model used by controller-side algebra and test oracles.

Two plants are provided:

* ``SingleLink`` -- a single revolute link under gravity,
  ``M qdd + G(q) + tau_d = tau`` with ``G(q) = 0.5 * 9.8 * m * l * sin(q)``.
  The inertia is either a constant or a constant plus a per-step Gaussian
  redraw (the "varying inertia" benchmark variant).
* ``TwoLink`` -- a planar two-link arm with configuration-dependent inertia,
  a centripetal/Coriolis matrix, and viscous-plus-tanh friction,
  ``M(q) qdd + Vm(q, qd) qd + F(qd) + tau_d = tau`` (no gravity term).

The simulation ground truth is classical RK4 with zero-order hold on the
torque and disturbance. The design model is the forward-Euler form

    x1(k+1) = h x2(k) + x1(k)
    M+(k) x2(k+1) = u(k) - g(k) - tau_d(k)

with M+(k) = M(t_{k+1})/h, M-(k) = M(t_k)/h and
g(k) = Vm(k) x2(k) + G(k) + F(k) - M-(k) x2(k). It is used by oracles and
consistency tests only; the learning controller never sees it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

GRAVITY = 9.8


class PlantError(RuntimeError):
    """Modeling-level failure (dimension mismatch, singular inertia)."""


class NonFiniteStateError(PlantError):
    """An integration step produced NaN or Inf."""


@dataclass(frozen=True)
class PlantState:
    """Joint positions/velocities (rad, rad/s) and the simulation clock (s)."""

    q: np.ndarray
    qdot: np.ndarray
    t: float

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        qd = np.atleast_1d(np.asarray(self.qdot, dtype=float))
        if q.shape != qd.shape or q.ndim != 1 or q.size < 1:
            raise PlantError(f"state dimension mismatch: q{q.shape} qdot{qd.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    @property
    def n(self) -> int:
        return self.q.size

    def require_finite(self) -> "PlantState":
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise NonFiniteStateError(f"non-finite state at t={self.t}: q={self.q} qdot={self.qdot}")
        return self


@dataclass(frozen=True)
class SingleLink:
    """Single revolute link. ``inertia_std > 0`` selects the varying-inertia
    variant: each step uses ``inertia + N(0, inertia_std)``, held within the step."""

    inertia: float = 5.0
    inertia_std: float = 0.0
    mass: float = 1.0
    half_length: float = 1.0

    def __post_init__(self):
        if self.inertia <= 0 or self.mass <= 0 or self.half_length <= 0:
            raise PlantError("single-link parameters must be positive")

    @property
    def n(self) -> int:
        return 1


@dataclass(frozen=True)
class TwoLink:
    """Planar two-link arm. ``vm_corner`` is the constant lower-right entry of
    the centripetal/Coriolis matrix; the benchmark prints it as 5, which looks
    like a typo for 0, so it is exposed as a parameter rather than hardcoded."""

    p1: float = 3.473
    p2: float = 0.196
    p3: float = 0.242
    fd: tuple[float, float] = (5.3, 6.1)
    fs: tuple[float, float] = (8.45, 2.35)
    vm_corner: float = 5.0

    @property
    def n(self) -> int:
        return 2


PlantModel = Union[SingleLink, TwoLink]


@dataclass(frozen=True)
class DisturbanceSpec:
    """Torque disturbance: ``none``, a single-sample ``pulse``, or per-step
    i.i.d. ``gaussian`` draws (one draw per joint per sample)."""

    kind: str = "none"
    magnitude: float = 0.0
    at_time: float = 0.0
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "pulse", "gaussian"):
            raise PlantError(f"unknown disturbance kind {self.kind!r}")


@dataclass(frozen=True)
class DiscreteDesignModel:
    """Euler design-model quantities at one sample: M+ = M(t_{k+1})/h,
    M- = M(t_k)/h, and the lumped vector g(k)."""

    mplus: np.ndarray
    mminus: np.ndarray
    g: np.ndarray
    h: float


def _check_dim(model: PlantModel, v: np.ndarray, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (model.n,):
        raise PlantError(f"{name} has shape {v.shape}, expected ({model.n},)")
    return v


def inertia_matrix(model: PlantModel, q: np.ndarray, inertia_sample: Optional[float] = None) -> np.ndarray:
    """Inertia matrix M(q); 1x1 for the single link, symmetric 2x2 for the
    two-link arm. ``inertia_sample`` overrides the single-link inertia (used
    for the per-step varying-inertia draw)."""
    q = _check_dim(model, q, "q")
    if isinstance(model, SingleLink):
        m = model.inertia if inertia_sample is None else inertia_sample
        return np.array([[m]])
    s1 = np.cos(q[1])
    off = model.p2 + model.p3 * s1
    return np.array([[model.p1 + 2.0 * model.p3 * s1, off], [off, model.p2]])


def coriolis_matrix(model: PlantModel, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """Centripetal/Coriolis matrix Vm(q, qdot); zero for the single link."""
    q = _check_dim(model, q, "q")
    qdot = _check_dim(model, qdot, "qdot")
    if isinstance(model, SingleLink):
        return np.zeros((1, 1))
    s2 = np.sin(q[1])
    return np.array(
        [
            [-model.p3 * s2 * qdot[1], -model.p3 * s2 * (qdot[0] + qdot[1])],
            [model.p2 * s2 * qdot[0], model.vm_corner],
        ]
    )


def gravity_vector(model: PlantModel, q: np.ndarray) -> np.ndarray:
    q = _check_dim(model, q, "q")
    if isinstance(model, SingleLink):
        return np.array([0.5 * GRAVITY * model.mass * model.half_length * np.sin(q[0])])
    return np.zeros(2)


def friction_vector(model: PlantModel, qdot: np.ndarray) -> np.ndarray:
    """Friction torque: viscous ``Fd qdot`` plus tanh-shaped static term for
    the two-link arm; frictionless single link."""
    qdot = _check_dim(model, qdot, "qdot")
    if isinstance(model, SingleLink):
        return np.zeros(1)
    fd = np.asarray(model.fd)
    fs = np.asarray(model.fs)
    return fd * qdot + fs * np.tanh(qdot)


def _accel(
    model: PlantModel,
    q: np.ndarray,
    qdot: np.ndarray,
    torque: np.ndarray,
    disturbance: np.ndarray,
    inertia_sample: Optional[float],
) -> np.ndarray:
    mass = inertia_matrix(model, q, inertia_sample)
    rhs = (
        torque
        - coriolis_matrix(model, q, qdot) @ qdot
        - gravity_vector(model, q)
        - friction_vector(model, qdot)
        - disturbance
    )
    try:
        return np.linalg.solve(mass, rhs)
    except np.linalg.LinAlgError as exc:  # cannot occur for valid parameters
        raise PlantError(f"singular inertia matrix at q={q}") from exc


def dynamics_accel(
    model: PlantModel,
    state: PlantState,
    torque: np.ndarray,
    disturbance: Optional[np.ndarray] = None,
    inertia_sample: Optional[float] = None,
) -> np.ndarray:
    """Joint acceleration qdd = M(q)^-1 (tau - Vm qd - G - F - tau_d)."""
    torque = _check_dim(model, torque, "torque")
    dist = np.zeros(model.n) if disturbance is None else _check_dim(model, disturbance, "disturbance")
    return _accel(model, state.q, state.qdot, torque, dist, inertia_sample)


def rk4_step(
    model: PlantModel,
    state: PlantState,
    torque: np.ndarray,
    h: float,
    disturbance: Optional[np.ndarray] = None,
    inertia_sample: Optional[float] = None,
) -> PlantState:
    """Advance (q, qdot) by one classical RK4 step of size ``h``.

    Torque and disturbance are zero-order held across the sub-stages; the
    per-step inertia sample, when given, is held as well. Raises
    ``NonFiniteStateError`` if the step produces NaN/Inf.
    """
    if h <= 0:
        raise PlantError("step size must be positive")
    torque = _check_dim(model, torque, "torque")
    dist = np.zeros(model.n) if disturbance is None else _check_dim(model, disturbance, "disturbance")

    def f(q, qd):
        return qd, _accel(model, q, qd, torque, dist, inertia_sample)

    q0, qd0 = state.q, state.qdot
    k1q, k1v = f(q0, qd0)
    k2q, k2v = f(q0 + 0.5 * h * k1q, qd0 + 0.5 * h * k1v)
    k3q, k3v = f(q0 + 0.5 * h * k2q, qd0 + 0.5 * h * k2v)
    k4q, k4v = f(q0 + h * k3q, qd0 + h * k3v)
    q1 = q0 + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    qd1 = qd0 + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return PlantState(q1, qd1, state.t + h).require_finite()


def euler_design_step(
    model: PlantModel,
    state: PlantState,
    torque: np.ndarray,
    h: float,
    disturbance: Optional[np.ndarray] = None,
) -> PlantState:
    """One step of the forward-Euler design model (oracle use only).

    x1(k+1) = h x2(k) + x1(k);  x2(k+1) = M+(k)^-1 (u - g(k) - tau_d(k)).
    """
    torque = _check_dim(model, torque, "torque")
    dist = np.zeros(model.n) if disturbance is None else _check_dim(model, disturbance, "disturbance")
    q1 = state.q + h * state.qdot
    dm = design_model_at(model, state, PlantState(q1, state.qdot, state.t + h), h)
    qd1 = np.linalg.solve(dm.mplus, torque - dm.g - dist)
    return PlantState(q1, qd1, state.t + h).require_finite()


def design_model_at(
    model: PlantModel,
    state_k: PlantState,
    state_k1: PlantState,
    h: float,
    inertia_k: Optional[float] = None,
    inertia_k1: Optional[float] = None,
) -> DiscreteDesignModel:
    """Euler design-model quantities at sample k given the states at k and k+1."""
    if h <= 0:
        raise PlantError("step size must be positive")
    mminus = inertia_matrix(model, state_k.q, inertia_k) / h
    mplus = inertia_matrix(model, state_k1.q, inertia_k1) / h
    g = (
        coriolis_matrix(model, state_k.q, state_k.qdot) @ state_k.qdot
        + gravity_vector(model, state_k.q)
        + friction_vector(model, state_k.qdot)
        - mminus @ state_k.qdot
    )
    return DiscreteDesignModel(mplus=mplus, mminus=mminus, g=g, h=h)


def disturbance_at(
    spec: DisturbanceSpec,
    t: float,
    h: float,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Disturbance torque sampled at time ``t``.

    A pulse hits exactly one sample: the one whose time lies in
    [at_time - h/2, at_time + h/2). Gaussian draws are fresh per call."""
    if spec.kind == "none":
        return np.zeros(n)
    if spec.kind == "pulse":
        if -0.5 * h <= t - spec.at_time < 0.5 * h:
            return np.full(n, spec.magnitude)
        return np.zeros(n)
    if rng is None:
        raise PlantError("gaussian disturbance requires an rng")
    return rng.normal(spec.mean, spec.std, size=n)


def sample_inertia(model: PlantModel, rng: Optional[np.random.Generator]) -> Optional[float]:
    """Per-step inertia draw for the varying-inertia single link; None when
    the inertia is constant (no rng consumption, keeps streams aligned)."""
    if isinstance(model, SingleLink) and model.inertia_std > 0:
        if rng is None:
            raise PlantError("varying inertia requires an rng")
        return model.inertia + rng.normal(0.0, model.inertia_std)
    return None
