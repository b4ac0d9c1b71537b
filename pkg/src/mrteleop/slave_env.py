"""Slave-side world: rate-limited IK tracking, box contact, force sensing.

Contact is a penetration spring-damper against axis-aligned boxes with
graded stiffness presets; the sensor adds seeded Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mrteleop.kinematics import (
    IKParams,
    KinematicChain,
    Pose,
    forward_kinematics,
    inverse_kinematics_dls,
)

__all__ = [
    "ContactState",
    "ForceSample",
    "RigidObject",
    "STIFFNESS_PRESETS",
    "contact_force",
    "sense_force",
    "step_slave",
]

# Starting points for the environment tuner; N/m. Scenario files may carry
# explicitly calibrated values instead.
STIFFNESS_PRESETS = {"high": 2.0e4, "medium": 3.0e3, "low": 5.0e2}


@dataclass
class RigidObject:
    """Axis-aligned box obstacle with a penetration spring-damper surface.

    force_cap, when set, saturates the contact force magnitude; useful for
    granular material whose resistance stops growing once it yields.
    """

    center: np.ndarray
    half_extents: np.ndarray
    stiffness: float
    damping: float = 10.0
    label: str = "custom"
    force_cap: float | None = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        if self.center.shape != (3,) or self.half_extents.shape != (3,):
            raise ValueError("RigidObject center and half_extents must be 3-vectors")
        if not np.all(self.half_extents > 0):
            raise ValueError("RigidObject.half_extents must be > 0")
        if self.stiffness <= 0:
            raise ValueError("RigidObject.stiffness must be > 0")
        if self.damping < 0:
            raise ValueError("RigidObject.damping must be >= 0")
        if self.label not in ("high", "medium", "low", "custom"):
            raise ValueError(f"RigidObject.label must be high/medium/low/custom, got {self.label!r}")
        if self.force_cap is not None and self.force_cap <= 0:
            raise ValueError("RigidObject.force_cap must be > 0 when set")

    @classmethod
    def preset(cls, label: str, center, half_extents, damping: float = 10.0,
               force_cap: float | None = None) -> "RigidObject":
        """Box with one of the named stiffness presets."""
        if label not in STIFFNESS_PRESETS:
            raise ValueError(f"unknown preset {label!r}; choose from {sorted(STIFFNESS_PRESETS)}")
        return cls(center=center, half_extents=half_extents,
                   stiffness=STIFFNESS_PRESETS[label], damping=damping,
                   label=label, force_cap=force_cap)


@dataclass
class ContactState:
    """Deepest-penetration summary for the current end-effector position."""

    penetrating: bool = False
    depth: float = 0.0
    normal: np.ndarray = None
    object_label: str = ""

    def __post_init__(self):
        if self.normal is None:
            self.normal = np.zeros(3)
        self.normal = np.asarray(self.normal, dtype=float)
        if self.depth < 0:
            raise ValueError("ContactState.depth must be >= 0")
        if self.penetrating and abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise ValueError("ContactState.normal must be unit length while penetrating")


@dataclass
class ForceSample:
    """Force sensed at the slave end-effector at a given sim time."""

    force: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        if self.force.shape != (3,):
            raise ValueError("ForceSample.force must be a 3-vector")
        if not np.all(np.isfinite(self.force)) or not np.isfinite(self.timestamp):
            raise ValueError("ForceSample values must be finite")


def step_slave(
    slave_chain: KinematicChain,
    current_q,
    target_pose: Pose,
    dt: float,
    rate_limit: float = 10.0,
    ik_params: IKParams = IKParams(orientation_weight=0.0),
):
    """One tracking step toward the target pose; returns (q_next, ik_ok).

    Solves IK seeded at the current angles and moves each joint at most
    rate_limit*dt toward the solution. On IK failure the arm holds its pose
    and reports ik_ok=False so the caller can flag the tick.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if rate_limit <= 0:
        raise ValueError(f"rate_limit must be > 0, got {rate_limit!r}")
    q = np.asarray(current_q, dtype=float)
    result = inverse_kinematics_dls(slave_chain, target_pose, q, ik_params)
    if not result.converged:
        return q.copy(), False
    step = np.clip(result.q - q, -rate_limit * dt, rate_limit * dt)
    return q + step, True


def contact_force(ee_position, ee_velocity, objects, now: float = 0.0):
    """Spring-damper contact force for the deepest penetrated box, if any.

    Depth is the smallest axis-exit distance and the normal points outward
    along that axis. The normal force is floored at zero so a receding
    end-effector is never pulled back (no adhesion).
    """
    p = np.asarray(ee_position, dtype=float)
    v = np.asarray(ee_velocity, dtype=float)
    deepest = None
    for obj in objects:
        offset = p - obj.center
        exit_dist = obj.half_extents - np.abs(offset)
        if np.all(exit_dist > 0):
            axis = int(np.argmin(exit_dist))
            depth = float(exit_dist[axis])
            if deepest is None or depth > deepest[0]:
                normal = np.zeros(3)
                normal[axis] = 1.0 if offset[axis] >= 0 else -1.0
                deepest = (depth, normal, obj)
    if deepest is None:
        return ForceSample(force=np.zeros(3), timestamp=now), ContactState()
    depth, normal, obj = deepest
    magnitude = max(0.0, obj.stiffness * depth + obj.damping * float(-v @ normal))
    if obj.force_cap is not None:
        magnitude = min(magnitude, obj.force_cap)
    state = ContactState(penetrating=True, depth=depth, normal=normal,
                         object_label=obj.label)
    return ForceSample(force=magnitude * normal, timestamp=now), state


def sense_force(sample: ForceSample, sigma: float, rng: np.random.Generator) -> ForceSample:
    """Sensor model: per-component Gaussian noise, deterministic given the rng."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    if sigma == 0:
        return ForceSample(force=sample.force.copy(), timestamp=sample.timestamp)
    noisy = sample.force + rng.normal(0.0, sigma, size=3)
    return ForceSample(force=noisy, timestamp=sample.timestamp)
