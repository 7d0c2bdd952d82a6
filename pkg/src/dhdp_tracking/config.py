"""Experiment configuration: JSON-backed dataclass blocks, defaults,
validation, and a stable resolved form for self-describing runs.

A config file is a JSON document with optional blocks ``plant``,
``controller``, ``learning``, ``trajectory``, ``run``, ``output``. Every
field has a default; ``load_config`` applies them and validates cross-field
constraints, so a resolved dump reloads to an identical config.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Union

import numpy as np

from . import plant as plant_mod
from .backstepping import GainSet, SineTrajectory


class ConfigError(ValueError):
    """Config parse failure or a named constraint violation."""


def _as_float_list(value, n: int, name: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * n
    out = [float(v) for v in value]
    if len(out) != n:
        raise ConfigError(f"{name} must have {n} entries, got {len(out)}")
    return out


def _as_matrix(value, n: int, name: str) -> list[list[float]]:
    """Accept a scalar (times identity) or a full n x n matrix."""
    if isinstance(value, (int, float)):
        return [[float(value) if i == j else 0.0 for j in range(n)] for i in range(n)]
    mat = [[float(x) for x in row] for row in value]
    if len(mat) != n or any(len(row) != n for row in mat):
        raise ConfigError(f"{name} must be {n}x{n}")
    return mat


@dataclass(frozen=True)
class DisturbanceConfig:
    kind: str = "none"
    magnitude: float = 2.0
    at_time: float = 40.0
    mean: float = 0.0
    std: float = 8.25


@dataclass(frozen=True)
class PlantConfig:
    model: str = "single_link"
    inertia: float = 5.0
    inertia_std: float = 0.0
    mass: float = 1.0
    half_length: float = 1.0
    p1: float = 3.473
    p2: float = 0.196
    p3: float = 0.242
    fd: tuple[float, ...] = (5.3, 6.1)
    fs: tuple[float, ...] = (8.45, 2.35)
    vm_corner: float = 5.0
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    initial_position: tuple[float, ...] = (-0.1,)
    initial_velocity: tuple[float, ...] = (0.1,)


@dataclass(frozen=True)
class ControllerConfig:
    c1: float = 0.7
    c2: float = -5.0
    h: float = 0.02
    m_min: float = 62500.0
    m_hat_plus: tuple[tuple[float, ...], ...] = ((250.0,),)


@dataclass(frozen=True)
class LearningConfig:
    hidden_critic: int = 6
    hidden_actor: int = 6
    l_a: float = 0.01
    l_c: float = 0.01
    gamma: float = 0.95
    beta1: float = 9.0
    beta2: float = 20.0
    beta3: float = 90.0
    u_c: float = 0.0
    init_range: float = 0.1
    inner_critic: int = 1
    inner_actor: int = 1
    inner_tol: float = 1e-4
    lr_scheduling: bool = True
    lr_window: int = 500
    lr_guard_window: int = 25
    lr_guard_factor: float = 1.3
    lr_floor: float = 1e-5
    q_cost: tuple[tuple[float, ...], ...] = ((1.0,),)
    r_cost: tuple[tuple[float, ...], ...] = ((0.01,),)
    actor_error_uses_f_hat: bool = False


@dataclass(frozen=True)
class TrajectoryConfig:
    waveform: str = "sine"
    amplitude: tuple[float, ...] = (0.5,)
    frequency: tuple[float, ...] = (0.5,)
    phase: tuple[float, ...] = (0.0,)


@dataclass(frozen=True)
class RunConfig:
    samples: int = 6000
    trials: int = 50
    seed: int = 0
    criterion: str = "half_vs_half"
    reset_cap: int = 50
    blowup_bound: float = 50.0
    allow_failed_gain_check: bool = False
    workers: int = 1


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    snapshot_stride: int = 500


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantConfig = field(default_factory=PlantConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def n_joints(self) -> int:
        return 1 if self.plant.model == "single_link" else 2

    def build_plant(self) -> plant_mod.PlantModel:
        p = self.plant
        if p.model == "single_link":
            return plant_mod.SingleLink(p.inertia, p.inertia_std, p.mass, p.half_length)
        return plant_mod.TwoLink(p.p1, p.p2, p.p3, tuple(p.fd), tuple(p.fs), p.vm_corner)

    def build_gains(self) -> GainSet:
        c = self.controller
        return GainSet(c.c1, c.c2, c.h, c.m_min)

    def build_trajectory(self) -> SineTrajectory:
        t = self.trajectory
        return SineTrajectory(tuple(t.amplitude), tuple(t.frequency), tuple(t.phase), self.controller.h)

    def build_disturbance(self) -> plant_mod.DisturbanceSpec:
        d = self.plant.disturbance
        return plant_mod.DisturbanceSpec(d.kind, d.magnitude, d.at_time, d.mean, d.std)

    def m_hat_plus_matrix(self) -> np.ndarray:
        return np.asarray(self.controller.m_hat_plus, dtype=float)

    def q_cost_matrix(self) -> np.ndarray:
        return np.asarray(self.learning.q_cost, dtype=float)

    def r_cost_matrix(self) -> np.ndarray:
        return np.asarray(self.learning.r_cost, dtype=float)


_BLOCK_TYPES = {
    "plant": PlantConfig,
    "controller": ControllerConfig,
    "learning": LearningConfig,
    "trajectory": TrajectoryConfig,
    "run": RunConfig,
    "output": OutputConfig,
}


def _build_block(cls, data: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name == "disturbance":
            kwargs[name] = _build_block(DisturbanceConfig, value, f"{path}.disturbance")
        elif isinstance(value, list):
            kwargs[name] = _tuplify(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _broadcast_joints(values, n: int, name: str) -> tuple[float, ...]:
    """A bare number or single entry applies to every joint; otherwise the
    length must match the joint count."""
    if isinstance(values, (int, float)):
        return (float(values),) * n
    if len(values) == 1 and n != 1:
        return (float(values[0]),) * n
    return tuple(_as_float_list(list(values), n, name))


def _broadcast_matrix(mat, n: int, name: str) -> tuple:
    """A bare number or 1x1 entry means that scalar times identity."""
    if isinstance(mat, (int, float)):
        return _tuplify(_as_matrix(mat, n, name))
    if len(mat) == 1 and not isinstance(mat[0], (int, float)) and len(mat[0]) == 1 and n != 1:
        return _tuplify(_as_matrix(mat[0][0], n, name))
    return _tuplify(_as_matrix(mat, n, name))


def _normalize(cfg: ExperimentConfig) -> ExperimentConfig:
    """Broadcast scalar per-joint fields to the plant dimension."""
    n = cfg.n_joints
    traj = replace(
        cfg.trajectory,
        amplitude=_broadcast_joints(cfg.trajectory.amplitude, n, "trajectory.amplitude"),
        frequency=_broadcast_joints(cfg.trajectory.frequency, n, "trajectory.frequency"),
        phase=_broadcast_joints(cfg.trajectory.phase, n, "trajectory.phase"),
    )
    learning = replace(
        cfg.learning,
        q_cost=_broadcast_matrix(cfg.learning.q_cost, n, "learning.q_cost"),
        r_cost=_broadcast_matrix(cfg.learning.r_cost, n, "learning.r_cost"),
    )
    m_hat = cfg.controller.m_hat_plus
    if len(m_hat) == 1 and len(m_hat[0]) == 1 and n != 1:
        raise ConfigError("controller.m_hat_plus must be a full matrix for the two-link plant")
    return replace(cfg, trajectory=traj, learning=learning)


def _validate(cfg: ExperimentConfig) -> None:
    n = cfg.n_joints
    c, l, r, p = cfg.controller, cfg.learning, cfg.run, cfg.plant
    checks = [
        (p.model in ("single_link", "two_link"), "plant.model must be 'single_link' or 'two_link'"),
        (len(p.initial_position) == n, f"plant.initial_position must have {n} entries"),
        (len(p.initial_velocity) == n, f"plant.initial_velocity must have {n} entries"),
        (p.inertia > 0, "plant.inertia must be positive"),
        (p.mass > 0 and p.half_length > 0, "plant.mass and plant.half_length must be positive"),
        (p.inertia_std >= 0, "plant.inertia_std must be non-negative"),
        (p.disturbance.kind in ("none", "pulse", "gaussian"), "plant.disturbance.kind must be none/pulse/gaussian"),
        (c.h > 0, "controller.h must be positive"),
        (c.m_min > 0, "controller.m_min must be positive"),
        (len(c.m_hat_plus) == n and all(len(row) == n for row in c.m_hat_plus), f"controller.m_hat_plus must be {n}x{n}"),
        (0 < l.gamma < 1, "learning.gamma must satisfy 0 < gamma < 1"),
        (l.l_a >= 0 and l.l_c >= 0, "learning rates must be non-negative"),
        (l.beta2 > l.gamma, "learning.beta2 must exceed learning.gamma"),
        (l.beta3 > l.beta1, "learning.beta3 must exceed learning.beta1"),
        (l.beta1 > 8.0 / l.gamma**2, "learning.beta1 must exceed 8 / gamma^2"),
        (l.hidden_critic >= 1 and l.hidden_actor >= 1, "hidden widths must be >= 1"),
        (l.init_range > 0, "learning.init_range must be positive"),
        (l.lr_window >= 10, "learning.lr_window must be >= 10"),
        (l.lr_guard_window >= 10, "learning.lr_guard_window must be >= 10"),
        (l.lr_guard_factor > 1.0, "learning.lr_guard_factor must exceed 1"),
        (1 <= l.inner_critic <= 50 and 1 <= l.inner_actor <= 50, "inner-loop caps must be in 1..50"),
        (cfg.trajectory.waveform == "sine", "trajectory.waveform must be 'sine'"),
        (r.samples >= 10, "run.samples must be >= 10"),
        (r.trials >= 1, "run.trials must be >= 1"),
        (r.criterion in ("half_vs_half", "vs_baseline"), "run.criterion must be half_vs_half/vs_baseline"),
        (r.reset_cap >= 1, "run.reset_cap must be >= 1"),
        (r.blowup_bound > 0, "run.blowup_bound must be positive"),
        (r.workers >= 1, "run.workers must be >= 1"),
        (cfg.output.snapshot_stride >= 1, "output.snapshot_stride must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    for name, mat in (("learning.q_cost", cfg.q_cost_matrix()), ("learning.r_cost", cfg.r_cost_matrix())):
        if not np.allclose(mat, mat.T):
            raise ConfigError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(mat).min() < -1e-12:
            raise ConfigError(f"{name} must be positive semi-definite")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(data) - set(_BLOCK_TYPES)
    if unknown:
        raise ConfigError(f"unknown top-level block(s): {sorted(unknown)}")
    blocks = {name: _build_block(cls, data.get(name, {}), name) for name, cls in _BLOCK_TYPES.items()}
    try:
        cfg = _normalize(ExperimentConfig(**blocks))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load, default-fill, and validate an experiment config file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return config_from_dict(data)


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Fully-resolved config as plain JSON-ready data (every default filled)."""
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        return obj

    return clean(asdict(cfg))


def dump_resolved(cfg: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(resolved_dict(cfg), indent=2, sort_keys=True) + "\n")


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable digest of the resolved config, stamped into outputs."""
    blob = json.dumps(resolved_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
