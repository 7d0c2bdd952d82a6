"""Backstepping tracking layer: error coordinates, virtual controls, control
composition, reference trajectories, and the closed-loop gain condition check.

Error coordinates for the Euler design model:

    e1(k) = x1(k) - x1d(k)
    alpha(k) = (c1 e1(k) - x1(k) + x1d(k+1)) / h
    e2(k) = x2(k) - alpha(k)
    u(k) = f_hat(k) + c2 e2(k)

With exact feed-forward f, the closed loop contracts as
e1(k+1) = c1 e1(k) + h e2(k) and M+(k) e2(k+1) = c2 e2(k).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ConditionUnsatisfiableError(ValueError):
    """The gain condition cannot be met for any c2 at this step size."""


@dataclass(frozen=True)
class GainSet:
    """Backstepping constants, the step size, and the inertia lower bound
    used by the stability gain check."""

    c1: float
    c2: float
    h: float
    m_min: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.m_min <= 0:
            raise ValueError("m_min must be positive")


@dataclass
class TrackingErrors:
    """Per-step error bundle; lengths equal the plant dimension."""

    e1: np.ndarray
    e2: np.ndarray
    alpha: np.ndarray
    alpha_next: np.ndarray


@dataclass(frozen=True)
class GainConditionVerdict:
    c1_ok: bool
    c2_ok: bool
    c1_margin: float
    c2_margin: float
    c1_bound: float
    c2_bound: float

    @property
    def passed(self) -> bool:
        return self.c1_ok and self.c2_ok


@dataclass(frozen=True)
class SineTrajectory:
    """Per-joint sinusoid x1d(k) = A sin(omega * k * h + phase), defined for
    every sample index (lookahead included) and bounded by max |A|."""

    amplitude: tuple[float, ...]
    omega: tuple[float, ...]
    phase: tuple[float, ...]
    h: float

    def __post_init__(self):
        if not (len(self.amplitude) == len(self.omega) == len(self.phase)):
            raise ValueError("per-joint trajectory descriptors must share length")

    @property
    def n(self) -> int:
        return len(self.amplitude)

    def __call__(self, k: int) -> np.ndarray:
        t = k * self.h
        return np.asarray(self.amplitude) * np.sin(np.asarray(self.omega) * t + np.asarray(self.phase))


def tracking_error(x1: np.ndarray, x1d: np.ndarray) -> np.ndarray:
    """Position error e1 = x1 - x1d."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x1d = np.atleast_1d(np.asarray(x1d, dtype=float))
    if x1.shape != x1d.shape:
        raise ValueError(f"dimension mismatch: x1{x1.shape} vs x1d{x1d.shape}")
    return x1 - x1d


def virtual_control(e1: np.ndarray, x1: np.ndarray, x1d_next: np.ndarray, gains: GainSet) -> np.ndarray:
    """Stabilizing velocity target alpha(k) = (c1 e1 - x1 + x1d(k+1)) / h."""
    return (gains.c1 * np.asarray(e1) - np.asarray(x1) + np.asarray(x1d_next)) / gains.h


def virtual_control_next(
    e1: np.ndarray,
    e2: np.ndarray,
    x1: np.ndarray,
    x2: np.ndarray,
    x1d_kplus2: np.ndarray,
    gains: GainSet,
) -> np.ndarray:
    """One-step-ahead velocity target built from sample-k quantities:

    alpha(k+1) = (c1 (c1 e1 + h e2) - h x2 - x1 + x1d(k+2)) / h
    """
    c1, h = gains.c1, gains.h
    return (
        c1 * (c1 * np.asarray(e1) + h * np.asarray(e2))
        - h * np.asarray(x2)
        - np.asarray(x1)
        + np.asarray(x1d_kplus2)
    ) / h


def compose_control(f_hat: np.ndarray, e2: np.ndarray, gains: GainSet) -> np.ndarray:
    """Control input u = f_hat + c2 e2."""
    f_hat = np.atleast_1d(np.asarray(f_hat, dtype=float))
    e2 = np.atleast_1d(np.asarray(e2, dtype=float))
    if f_hat.shape != e2.shape:
        raise ValueError(f"dimension mismatch: f_hat{f_hat.shape} vs e2{e2.shape}")
    return f_hat + gains.c2 * e2


def check_gain_conditions(gains: GainSet) -> GainConditionVerdict:
    """Check |c1| < sqrt(2)/2 and |c2| < 0.5 * sqrt(2 m_min - 4 h^2).

    Raises ``ConditionUnsatisfiableError`` when 2 m_min <= 4 h^2, in which
    case no c2 can satisfy the bound at this step size.
    """
    radicand = 2.0 * gains.m_min - 4.0 * gains.h**2
    if radicand <= 0:
        raise ConditionUnsatisfiableError(
            f"gain condition unsatisfiable at this h: 2*m_min={2 * gains.m_min} <= 4*h^2={4 * gains.h ** 2}"
        )
    c1_bound = np.sqrt(2.0) / 2.0
    c2_bound = 0.5 * np.sqrt(radicand)
    c1_margin = c1_bound - abs(gains.c1)
    c2_margin = c2_bound - abs(gains.c2)
    return GainConditionVerdict(
        c1_ok=c1_margin > 0,
        c2_ok=c2_margin > 0,
        c1_margin=c1_margin,
        c2_margin=c2_margin,
        c1_bound=c1_bound,
        c2_bound=c2_bound,
    )


def compute_errors(
    x1: np.ndarray,
    x2: np.ndarray,
    x1d_k: np.ndarray,
    x1d_k1: np.ndarray,
    x1d_k2: np.ndarray,
    gains: GainSet,
) -> TrackingErrors:
    """Full error bundle at one sample from the state and the trajectory
    lookahead (x1d at k, k+1, k+2)."""
    e1 = tracking_error(x1, x1d_k)
    alpha = virtual_control(e1, x1, x1d_k1, gains)
    e2 = np.asarray(x2, dtype=float) - alpha
    alpha_next = virtual_control_next(e1, e2, x1, x2, x1d_k2, gains)
    return TrackingErrors(e1=e1, e2=e2, alpha=alpha, alpha_next=alpha_next)


def trajectory_from_lists(
    amplitude: Sequence[float], frequency: Sequence[float], phase: Sequence[float], h: float
) -> SineTrajectory:
    return SineTrajectory(tuple(amplitude), tuple(frequency), tuple(phase), h)
