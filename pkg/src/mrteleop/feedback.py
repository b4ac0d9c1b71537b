"""Force-feedback pipeline.

Maps a sensed end-effector wrench through the master Jacobian transpose to
per-joint torques, amplifies them, and converts each to a clutch current
command with torque-cap and current-limit clamping. Also the manual
demagnetization trigger that flips every clutch into demag mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mrteleop.clutch import ClutchState, HillParams, inverse_hill
from mrteleop.kinematics import KinematicChain, numeric_jacobian

__all__ = [
    "FeedbackConfig",
    "JointCommand",
    "feedback_pipeline",
    "trigger_manual_demag",
    "wrench_to_joint_torques",
]


@dataclass(frozen=True)
class FeedbackConfig:
    """Gain and safety limits for the wrench-to-current pipeline.

    actuated_joints are master joint indices that carry clutches; the
    remaining joints (e.g. a passive wrist roll) receive no feedback.
    """

    gain: float = 5.0
    current_limit: float = 1.3
    torque_cap: float = 42.12
    actuated_joints: tuple = (0, 1, 2, 3)

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError(f"FeedbackConfig.gain must be > 0, got {self.gain!r}")
        if self.current_limit <= 0:
            raise ValueError("FeedbackConfig.current_limit must be > 0")
        if self.torque_cap <= 0:
            raise ValueError("FeedbackConfig.torque_cap must be > 0")
        object.__setattr__(self, "actuated_joints", tuple(int(i) for i in self.actuated_joints))
        if len(set(self.actuated_joints)) != len(self.actuated_joints):
            raise ValueError("FeedbackConfig.actuated_joints must be distinct")


@dataclass(frozen=True)
class JointCommand:
    """One clutch excitation command; target_torque is the pre-clamp request."""

    joint_index: int
    current: float
    target_torque: float
    clamped: bool


def wrench_to_joint_torques(jacobian: np.ndarray, force, moment=None) -> np.ndarray:
    """Statics-dual torque allocation: tau = J^T [force; moment]."""
    jac = np.asarray(jacobian, dtype=float)
    if jac.ndim != 2 or jac.shape[0] != 6:
        raise ValueError(f"jacobian must be 6 x N, got shape {jac.shape}")
    f = np.asarray(force, dtype=float)
    if f.shape != (3,):
        raise ValueError("force must be a 3-vector")
    m = np.zeros(3) if moment is None else np.asarray(moment, dtype=float)
    if m.shape != (3,):
        raise ValueError("moment must be a 3-vector")
    return jac.T @ np.concatenate([f, m])


def feedback_pipeline(
    chain: KinematicChain,
    q,
    force,
    config: FeedbackConfig,
    params: HillParams,
    moment=None,
) -> list:
    """Per-actuated-joint clutch commands for a sensed wrench at the master pose.

    Clutches brake regardless of direction, so only |tau_i| matters. The
    torque request is capped, then clamped just under the curve asymptote
    before inversion, and the resulting current is clamped to the limit.
    """
    f = np.asarray(force, dtype=float)
    if not np.any(f) and (moment is None or not np.any(np.asarray(moment))):
        # zero wrench maps to zero torque for any Jacobian; skip computing one
        torques = np.zeros(chain.dof)
    else:
        jac = numeric_jacobian(chain, q)
        torques = wrench_to_joint_torques(jac, f, moment)
    soft_max = 0.999 * params.v_max
    commands = []
    for idx in config.actuated_joints:
        if not 0 <= idx < chain.dof:
            raise ValueError(f"actuated joint index {idx} outside chain of {chain.dof} joints")
        requested = config.gain * abs(float(torques[idx]))
        target = requested
        clamped = False
        if target > config.torque_cap:
            target = config.torque_cap
            clamped = True
        if target > soft_max:
            target = soft_max
            clamped = True
        current = inverse_hill(params, target)
        if current > config.current_limit:
            current = config.current_limit
            clamped = True
        commands.append(JointCommand(joint_index=idx, current=current,
                                     target_torque=requested, clamped=clamped))
    return commands


def trigger_manual_demag(states) -> list:
    """Put every clutch into demag mode, remembering its magnetization as burst amplitude."""
    out = []
    for s in states:
        out.append(ClutchState(
            commanded_current=0.0,
            magnetization=s.magnetization,
            output_torque=s.output_torque,
            mode="demag",
            demag_elapsed=0.0,
            demag_i0=s.magnetization,
        ))
    return out
