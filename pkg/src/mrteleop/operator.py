"""Operator models.

A scripted operator follows keyframed joint trajectories, slows as clutch
resistance grows (full lock stops the joint), and optionally retreats when
resistance spikes past a reflex threshold, resuming once it falls off. The
sEMG proxy converts resisted torque to a muscle-activation level via an
affine calibration or a lookup table.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "OperatorModel",
    "OperatorState",
    "ReflexConfig",
    "SEMGCalibration",
    "TrajectoryScript",
    "interpolate_script",
    "rms_window",
    "scripted_operator_step",
    "semg_proxy",
]


@dataclass(frozen=True)
class ReflexConfig:
    """Retreat-on-spike behavior: back off by retreat_offset when resisted
    torque exceeds retreat_torque, resume below half that (hysteresis)."""

    retreat_torque: float = 4.0
    retreat_offset: tuple = ()

    def __post_init__(self):
        if self.retreat_torque <= 0:
            raise ValueError("ReflexConfig.retreat_torque must be > 0")
        object.__setattr__(self, "retreat_offset", tuple(float(v) for v in self.retreat_offset))


@dataclass
class TrajectoryScript:
    """Keyframed master joint trajectory with an optional compliance reflex."""

    keyframes: tuple
    reflex: ReflexConfig | None = None

    def __post_init__(self):
        frames = []
        width = None
        for t, q in self.keyframes:
            q = tuple(float(v) for v in q)
            if width is None:
                width = len(q)
            elif len(q) != width:
                raise ValueError("TrajectoryScript keyframe angle vectors must share a length")
            frames.append((float(t), q))
        if not frames:
            raise ValueError("TrajectoryScript needs at least one keyframe")
        times = [t for t, _ in frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("TrajectoryScript keyframe times must be strictly increasing")
        self.keyframes = tuple(frames)
        if self.reflex is not None and self.reflex.retreat_offset and \
                len(self.reflex.retreat_offset) != width:
            raise ValueError("reflex.retreat_offset length must match keyframe width")

    @property
    def dof(self) -> int:
        return len(self.keyframes[0][1])

    @property
    def end_time(self) -> float:
        return self.keyframes[-1][0]


@dataclass(frozen=True)
class OperatorModel:
    """Compliance parameters: torque that fully locks a joint, and the
    fastest the operator chases a moving goal."""

    lock_torque: float = 42.12
    max_velocity: float = 6.0

    def __post_init__(self):
        if self.lock_torque <= 0 or self.max_velocity <= 0:
            raise ValueError("OperatorModel fields must be > 0")


@dataclass
class OperatorState:
    """Where the operator's arm is, whether the reflex is active, latest sEMG."""

    current_q: np.ndarray
    retreating: bool = False
    semg: float = 0.0
    retreat_target: np.ndarray | None = None

    def __post_init__(self):
        self.current_q = np.asarray(self.current_q, dtype=float)
        if not np.all(np.isfinite(self.current_q)):
            raise ValueError("OperatorState.current_q must be finite")


def interpolate_script(script: TrajectoryScript, t: float) -> np.ndarray:
    """Linear keyframe interpolation; holds the first/last pose outside the span."""
    times = np.array([kf[0] for kf in script.keyframes])
    angles = np.array([kf[1] for kf in script.keyframes])
    return np.array([np.interp(t, times, angles[:, j]) for j in range(angles.shape[1])])


def scripted_operator_step(
    script: TrajectoryScript,
    state: OperatorState,
    t: float,
    resistance,
    dt: float,
    model: OperatorModel = OperatorModel(),
) -> OperatorState:
    """Advance the operator from time t to t+dt under per-joint resistance.

    The arm chases its goal (script pose, or the retreat target while the
    reflex holds) at up to max_velocity, scaled per joint by
    max(0, 1 - resistance/lock_torque): a fully locked joint stops.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    q = state.current_q
    resistance = np.asarray(resistance, dtype=float)
    if resistance.shape != q.shape:
        raise ValueError("resistance must match the joint vector length")
    if np.any(resistance < 0):
        raise ValueError("resistance torques must be >= 0")

    retreating = state.retreating
    retreat_target = state.retreat_target
    if script.reflex is not None:
        peak = float(resistance.max())
        if not retreating and peak > script.reflex.retreat_torque:
            retreating = True
            offset = np.array(script.reflex.retreat_offset) if script.reflex.retreat_offset \
                else np.zeros_like(q)
            retreat_target = q + offset
        elif retreating and peak < 0.5 * script.reflex.retreat_torque:
            retreating = False
            retreat_target = None

    goal = retreat_target if retreating else interpolate_script(script, t + dt)
    velocity = np.clip((goal - q) / dt, -model.max_velocity, model.max_velocity)
    scale = np.clip(1.0 - resistance / model.lock_torque, 0.0, 1.0)
    return OperatorState(
        current_q=q + velocity * scale * dt,
        retreating=retreating,
        semg=state.semg,
        retreat_target=retreat_target,
    )


@dataclass(frozen=True)
class SEMGCalibration:
    """Torque-to-sEMG mapping: affine by default, table lookup when given.

    Defaults are the least-squares affine fit over the bench calibration
    pairs (0, 37), (2.8, 86), (4.2, 118), (5.3, 141), (7.1, 185), (8.8, 228)
    (N*m, uV).
    """

    intercept: float = 29.8942307692308
    slope: float = 21.831014729950894
    table: tuple | None = None

    def __post_init__(self):
        if self.intercept < 0:
            raise ValueError("SEMGCalibration.intercept must be >= 0")
        if self.slope <= 0:
            raise ValueError("SEMGCalibration.slope must be > 0")
        if self.table is not None:
            pts = tuple((float(a), float(b)) for a, b in self.table)
            if len(pts) < 2:
                raise ValueError("SEMGCalibration.table needs at least 2 points")
            torques = [a for a, _ in pts]
            if any(b <= a for a, b in zip(torques, torques[1:])):
                raise ValueError("SEMGCalibration.table torques must be strictly increasing")
            object.__setattr__(self, "table", pts)


def semg_proxy(resisted_torque: float, cal: SEMGCalibration = SEMGCalibration()) -> float:
    """Muscle-activation proxy (uV) for a resisted torque (N*m)."""
    if resisted_torque < 0:
        raise ValueError(f"resisted_torque must be >= 0, got {resisted_torque!r}")
    if cal.table is not None:
        pts = np.asarray(cal.table, dtype=float)
        return float(np.interp(resisted_torque, pts[:, 0], pts[:, 1]))
    return cal.intercept + cal.slope * resisted_torque


def rms_window(samples, window) -> float:
    """Root mean square of (timestamp, value) samples falling inside [t0, t1]."""
    t0, t1 = window
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be (timestamp, value) pairs")
    mask = (arr[:, 0] >= t0) & (arr[:, 0] <= t1)
    if not np.any(mask):
        raise ValueError(f"no samples inside window [{t0}, {t1}]")
    return float(np.sqrt(np.mean(arr[mask, 1] ** 2)))
