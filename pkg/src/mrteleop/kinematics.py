"""Serial-chain kinematics in the modified Denavit-Hartenberg convention.

Homogeneous transforms, forward kinematics, numeric Jacobians,
damped-least-squares inverse kinematics with joint-limit clamping, and the
proportional workspace map that turns master poses into slave targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ARM_LINK_LENGTHS",
    "DHRow",
    "IKParams",
    "IKResult",
    "KinematicChain",
    "Pose",
    "WorkspaceMap",
    "dh_transform",
    "exoskeleton_chain",
    "forward_kinematics",
    "inverse_kinematics_dls",
    "map_workspace",
    "numeric_jacobian",
    "seven_dof_arm_chain",
]

# Default link lengths (m), shoulder to wrist, representative of an adult arm.
ARM_LINK_LENGTHS = (0.28, 0.05, 0.25, 0.07)


@dataclass(frozen=True)
class DHRow:
    """One joint row: twist alpha (rad), link length a (m), joint offset d (m).

    alpha and a describe the preceding link (they position joint i relative
    to joint i-1), so row i feeds the transform from frame i-1 to frame i.
    """

    alpha: float
    a: float
    d: float
    theta_offset: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "a", "d", "theta_offset"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"DHRow.{name} must be finite, got {value!r}")
        if self.a < 0:
            raise ValueError(f"DHRow.a must be >= 0, got {self.a!r}")


@dataclass
class KinematicChain:
    """Ordered DH rows plus per-joint limits and an optional fixed tool transform.

    joint_limits is an (N, 2) array of [min, max] angles; equal bounds lock a
    joint in place (IK clamping pins it, the Jacobian still differentiates it).
    tool, when given, is a constant 4x4 transform appended after the last frame.
    """

    rows: tuple
    joint_limits: np.ndarray | None = None
    name: str = "chain"
    tool: np.ndarray | None = None

    def __post_init__(self):
        self.rows = tuple(self.rows)
        if not self.rows:
            raise ValueError("KinematicChain needs at least one row")
        n = len(self.rows)
        if self.joint_limits is None:
            limits = np.tile((-np.pi, np.pi), (n, 1)).astype(float)
        else:
            limits = np.array(self.joint_limits, dtype=float)
            if limits.shape != (n, 2):
                raise ValueError(f"joint_limits must have shape ({n}, 2), got {limits.shape}")
            if not np.all(np.isfinite(limits)):
                raise ValueError("joint_limits must be finite")
            if not np.all(limits[:, 0] <= limits[:, 1]):
                raise ValueError("joint_limits min must not exceed max")
        self.joint_limits = limits
        if self.tool is not None:
            tool = np.array(self.tool, dtype=float)
            if tool.shape != (4, 4):
                raise ValueError(f"tool must be a 4x4 transform, got shape {tool.shape}")
            if np.max(np.abs(tool[3] - (0.0, 0.0, 0.0, 1.0))) > 1e-12:
                raise ValueError("tool bottom row must be [0, 0, 0, 1]")
            if np.max(np.abs(tool[:3, :3].T @ tool[:3, :3] - np.eye(3))) > 1e-9:
                raise ValueError("tool rotation block must be orthonormal")
            self.tool = tool
        self._consts = None

    @property
    def dof(self) -> int:
        return len(self.rows)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        """Clip joint angles into the chain's limits."""
        return np.clip(np.asarray(q, dtype=float), self.joint_limits[:, 0], self.joint_limits[:, 1])

    def _row_constants(self):
        # per-row (cos a, sin a, a, -sin(a)*d, cos(a)*d, theta_offset); rows
        # are immutable so this is computed once
        if self._consts is None:
            self._consts = [
                (math.cos(r.alpha), math.sin(r.alpha), r.a,
                 -math.sin(r.alpha) * r.d, math.cos(r.alpha) * r.d, r.theta_offset)
                for r in self.rows
            ]
        return self._consts


@dataclass
class Pose:
    """Frame position (m) and orientation (3x3 rotation matrix)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        position = np.asarray(self.position, dtype=float)
        if position.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {position.shape}")
        if not np.all(np.isfinite(position)):
            raise ValueError("position must be finite")
        orientation = np.asarray(self.orientation, dtype=float)
        if orientation.shape != (3, 3):
            raise ValueError(f"orientation must be 3x3, got shape {orientation.shape}")
        if np.max(np.abs(orientation.T @ orientation - np.eye(3))) > 1e-9:
            raise ValueError("orientation must be orthonormal within 1e-9")
        if abs(np.linalg.det(orientation) - 1.0) > 1e-9:
            raise ValueError("orientation must have determinant +1 within 1e-9")
        self.position = position
        self.orientation = orientation


@dataclass
class WorkspaceMap:
    """Proportional position map from the master workspace into the slave's."""

    scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    master_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    slave_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=float)
        self.master_origin = np.asarray(self.master_origin, dtype=float)
        self.slave_origin = np.asarray(self.slave_origin, dtype=float)
        for name in ("scale", "master_origin", "slave_origin"):
            value = getattr(self, name)
            if value.shape != (3,):
                raise ValueError(f"WorkspaceMap.{name} must be a 3-vector")
            if not np.all(np.isfinite(value)):
                raise ValueError(f"WorkspaceMap.{name} must be finite")
        if not np.all(self.scale > 0):
            raise ValueError("WorkspaceMap.scale components must be > 0")


def dh_transform(row: DHRow, theta: float) -> np.ndarray:
    """4x4 homogeneous transform for one row at joint angle theta.

    Equivalent to Rx(alpha) * Tx(a) * Rz(theta + offset) * Tz(d), the
    preceding-link (modified) DH composition.
    """
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta!r}")
    th = theta + row.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    out = np.empty((4, 4))
    out[0, 0] = ct; out[0, 1] = -st; out[0, 2] = 0.0; out[0, 3] = row.a
    out[1, 0] = st * ca; out[1, 1] = ct * ca; out[1, 2] = -sa; out[1, 3] = -sa * row.d
    out[2, 0] = st * sa; out[2, 1] = ct * sa; out[2, 2] = ca; out[2, 3] = ca * row.d
    out[3, 0] = 0.0; out[3, 1] = 0.0; out[3, 2] = 0.0; out[3, 3] = 1.0
    return out


def _fk_raw(chain: KinematicChain, q) -> tuple:
    """(position, rotation) of the last frame; no validation, hot path."""
    rot = np.eye(3)
    pos = np.zeros(3)
    rm = np.empty((3, 3))
    for (ca, sa, a, dy, dz, off), theta in zip(chain._row_constants(), q):
        th = theta + off
        ct, st = math.cos(th), math.sin(th)
        rm[0, 0] = ct; rm[0, 1] = -st; rm[0, 2] = 0.0
        rm[1, 0] = st * ca; rm[1, 1] = ct * ca; rm[1, 2] = -sa
        rm[2, 0] = st * sa; rm[2, 1] = ct * sa; rm[2, 2] = ca
        pos = pos + rot @ (a, dy, dz)
        rot = rot @ rm
    if chain.tool is not None:
        pos = pos + rot @ chain.tool[:3, 3]
        rot = rot @ chain.tool[:3, :3]
    return pos, rot


def _fk_batch(chain: KinematicChain, qs: np.ndarray) -> tuple:
    """Vectorized _fk_raw over a (B, N) batch of joint vectors."""
    batch = qs.shape[0]
    rot = np.broadcast_to(np.eye(3), (batch, 3, 3)).copy()
    pos = np.zeros((batch, 3))
    for i, (ca, sa, a, dy, dz, off) in enumerate(chain._row_constants()):
        th = qs[:, i] + off
        ct, st = np.cos(th), np.sin(th)
        rm = np.empty((batch, 3, 3))
        rm[:, 0, 0] = ct; rm[:, 0, 1] = -st; rm[:, 0, 2] = 0.0
        rm[:, 1, 0] = st * ca; rm[:, 1, 1] = ct * ca; rm[:, 1, 2] = -sa
        rm[:, 2, 0] = st * sa; rm[:, 2, 1] = ct * sa; rm[:, 2, 2] = ca
        pos += (rot @ np.array((a, dy, dz))[:, None])[:, :, 0]
        rot = rot @ rm
    if chain.tool is not None:
        pos += (rot @ chain.tool[:3, 3][:, None])[:, :, 0]
        rot = rot @ chain.tool[:3, :3]
    return pos, rot


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Pose of the chain's last frame (times the tool transform, if any)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint angles, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint angles must be finite")
    pos, rot = _fk_raw(chain, q)
    return Pose(position=pos, orientation=rot)


def numeric_jacobian(chain: KinematicChain, q, step: float = 1e-6) -> np.ndarray:
    """6xN end-effector Jacobian by central differences.

    Rows 0-2 are linear velocity per joint rate (m/rad); rows 3-5 are angular
    velocity (rad/rad), recovered from dR/dq * R^T. Joint limits are ignored.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint angles, got shape {q.shape}")
    n = chain.dof
    _, rot0 = _fk_raw(chain, q)
    qs = np.repeat(q[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    qs[2 * idx, idx] += step
    qs[2 * idx + 1, idx] -= step
    pos, rot = _fk_batch(chain, qs)
    jac = np.zeros((6, n))
    inv2h = 1.0 / (2.0 * step)
    jac[:3, :] = ((pos[0::2] - pos[1::2]) * inv2h).T
    omega = ((rot[0::2] - rot[1::2]) * inv2h) @ rot0.T
    skew = 0.5 * (omega - np.transpose(omega, (0, 2, 1)))
    jac[3, :] = skew[:, 2, 1]
    jac[4, :] = skew[:, 0, 2]
    jac[5, :] = skew[:, 1, 0]
    return jac


@dataclass(frozen=True)
class IKParams:
    """Damped-least-squares solver knobs.

    orientation_weight scales the angular error rows; 0 solves position only.
    """

    damping: float = 0.05
    tol: float = 1e-6
    tol_rot: float = 1e-4
    max_iters: int = 200
    orientation_weight: float = 1.0

    def __post_init__(self):
        if self.damping <= 0:
            raise ValueError("IKParams.damping must be > 0")
        if self.tol <= 0 or self.tol_rot <= 0:
            raise ValueError("IKParams tolerances must be > 0")
        if self.max_iters < 1:
            raise ValueError("IKParams.max_iters must be >= 1")
        if self.orientation_weight < 0:
            raise ValueError("IKParams.orientation_weight must be >= 0")


@dataclass
class IKResult:
    """Best iterate found by the solver, with convergence diagnostics."""

    q: np.ndarray
    converged: bool
    iterations: int
    position_error: float
    orientation_error: float


def _rotation_error_vector(r_target: np.ndarray, r_current: np.ndarray) -> np.ndarray:
    """Axis-angle vector of the rotation carrying r_current onto r_target."""
    r_err = r_target @ r_current.T
    cos_angle = min(1.0, max(-1.0, (r_err[0, 0] + r_err[1, 1] + r_err[2, 2] - 1.0) / 2.0))
    angle = math.acos(cos_angle)
    if angle < 1e-12:
        return np.zeros(3)
    raw = np.array(
        [r_err[2, 1] - r_err[1, 2], r_err[0, 2] - r_err[2, 0], r_err[1, 0] - r_err[0, 1]]
    )
    denom = 2.0 * math.sin(angle)
    if denom > 1e-9:
        return (angle / denom) * raw
    # angle near pi: sin() loses the axis, recover it from the symmetric part
    axis = np.sqrt(np.clip((np.diag(r_err) + 1.0) / 2.0, 0.0, None))
    k = int(np.argmax(axis))
    if axis[k] > 0:
        off = {0: (1, 2), 1: (0, 2), 2: (0, 1)}[k]
        for j in off:
            axis[j] = r_err[min(k, j), max(k, j)] / (2.0 * axis[k])
    norm = np.linalg.norm(axis)
    axis = axis / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
    return angle * axis


def inverse_kinematics_dls(
    chain: KinematicChain, target: Pose, seed, params: IKParams = IKParams()
) -> IKResult:
    """Iterative damped-least-squares IK, clamped to joint limits every step.

    Never raises on non-convergence: after max_iters the best iterate seen is
    returned with converged=False.
    """
    q = chain.clamp(np.asarray(seed, dtype=float))
    if q.shape != (chain.dof,):
        raise ValueError(f"seed must have {chain.dof} angles")
    w = params.orientation_weight
    lam_sq = params.damping**2
    best = None
    for iteration in range(params.max_iters + 1):
        pos, rot = _fk_raw(chain, q)
        e_pos = target.position - pos
        pos_err = float(np.linalg.norm(e_pos))
        if w > 0:
            e_rot = _rotation_error_vector(target.orientation, rot)
            rot_err = float(np.linalg.norm(e_rot))
        else:
            rot_err = 0.0
        cost = pos_err + w * rot_err
        if best is None or cost < best[0]:
            best = (cost, q.copy(), pos_err, rot_err)
        if pos_err <= params.tol and (w == 0.0 or rot_err <= params.tol_rot):
            if w == 0.0:
                rot_err = float(np.linalg.norm(_rotation_error_vector(target.orientation, rot)))
            return IKResult(q=q, converged=True, iterations=iteration,
                            position_error=pos_err, orientation_error=rot_err)
        if iteration == params.max_iters:
            break
        jac = numeric_jacobian(chain, q)
        if w > 0:
            j_use = np.vstack([jac[:3], w * jac[3:]])
            err = np.concatenate([e_pos, w * e_rot])
        else:
            j_use = jac[:3]
            err = e_pos
        gram = j_use @ j_use.T + lam_sq * np.eye(j_use.shape[0])
        dq = j_use.T @ np.linalg.solve(gram, err)
        q = chain.clamp(q + dq)
    _, best_q, best_pos, best_rot = best
    return IKResult(q=best_q, converged=False, iterations=params.max_iters,
                    position_error=best_pos, orientation_error=best_rot)


def map_workspace(master_pose: Pose, wmap: WorkspaceMap) -> Pose:
    """Slave target pose: scaled, re-origined position; orientation passed through."""
    position = wmap.slave_origin + wmap.scale * (master_pose.position - wmap.master_origin)
    return Pose(position=position, orientation=master_pose.orientation)


def exoskeleton_chain(lengths=ARM_LINK_LENGTHS, joint_limits=None, name="master") -> KinematicChain:
    """Five-row shoulder-to-wrist chain.

    The fifth row is a wrist roll whose angle leaves the end point fixed
    (its link length enters the transform before the joint rotation).
    """
    l1, l2, l3, l4 = lengths
    rows = (
        DHRow(alpha=np.pi / 2, a=0.0, d=0.0),
        DHRow(alpha=-np.pi / 2, a=l1, d=0.0),
        DHRow(alpha=np.pi / 2, a=l2, d=0.0),
        DHRow(alpha=0.0, a=l3, d=0.0),
        DHRow(alpha=0.0, a=l4, d=0.0),
    )
    return KinematicChain(rows=rows, joint_limits=joint_limits, name=name)


def seven_dof_arm_chain(lengths=ARM_LINK_LENGTHS, joint_limits=None, name="slave") -> KinematicChain:
    """Seven-row arm: the exoskeleton geometry plus two zero-length wrist rows.

    Matches the master's positional reach while adding wrist orientation
    freedom, so an identity workspace map is trackable.
    """
    base = exoskeleton_chain(lengths).rows
    rows = base + (
        DHRow(alpha=np.pi / 2, a=0.0, d=0.0),
        DHRow(alpha=-np.pi / 2, a=0.0, d=0.0),
    )
    return KinematicChain(rows=rows, joint_limits=joint_limits, name=name)
