"""Capsule geometry and serial-chain kinematics.

Robot links and human body parts are modeled as capsules (segment + radius).
The chain is an open serial arm with revolute joints only; each joint rotates
about a fixed local axis after a fixed translation from its parent frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Fallback separation direction when closest points coincide (full overlap).
# Downstream the ISO limit then clamps the approach speed to zero, which is
# the safe completion of the degenerate case.
DEGENERATE_DIRECTION = np.array([0.0, 0.0, 1.0])


@dataclass
class Capsule:
    """Capsule: all points within `radius` of the segment [a, b]."""

    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.radius = float(self.radius)
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("capsule endpoints must be finite")
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be > 0")

    def translated(self, delta: np.ndarray) -> "Capsule":
        return Capsule(self.a + delta, self.b + delta, self.radius)


@dataclass
class CapsuleAttachment:
    """Capsule rigidly attached to a chain link, endpoints in link frame."""

    link: int
    local_a: np.ndarray
    local_b: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        self.local_a = np.asarray(self.local_a, dtype=float)
        self.local_b = np.asarray(self.local_b, dtype=float)
        self.radius = float(self.radius)


@dataclass
class Joint:
    """Revolute joint: translate by `offset` in the parent frame, then rotate
    about the local `axis` by the joint angle."""

    axis: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        self.axis = np.asarray(self.axis, dtype=float)
        norm = float(np.linalg.norm(self.axis))
        if norm < 1e-12:
            raise ValueError("joint axis must be nonzero")
        self.axis = self.axis / norm
        self.offset = np.asarray(self.offset, dtype=float)


@dataclass
class KinematicChain:
    """n-DOF velocity-controlled serial arm with capsule link geometry and
    joint velocity/acceleration bounds."""

    joints: list[Joint]
    capsules: list[CapsuleAttachment]
    qd_min: np.ndarray
    qd_max: np.ndarray
    qdd_min: np.ndarray
    qdd_max: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.joints)
        if n < 1:
            raise ValueError("chain needs at least one joint")
        for name in ("qd_min", "qd_max", "qdd_min", "qdd_max"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            setattr(self, name, v)
        if not (np.all(self.qd_min < 0.0) and np.all(self.qd_max > 0.0)):
            raise ValueError("joint velocity bounds must straddle zero")
        if not (np.all(self.qdd_min < 0.0) and np.all(self.qdd_max > 0.0)):
            raise ValueError("joint acceleration bounds must straddle zero")
        for cap in self.capsules:
            if not (0 <= cap.link < n):
                raise ValueError(f"capsule references invalid link {cap.link}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)


@dataclass
class JointState:
    q: np.ndarray
    q_dot: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)
        self.q_dot = np.asarray(self.q_dot, dtype=float)


@dataclass
class SeparationGeometry:
    """Closest-pair witness between one robot link capsule and a human capsule.

    `distance` is surface-to-surface (negative when penetrating); `direction`
    is the unit vector from the robot witness point toward the human witness
    point, or the +z fallback when the witnesses coincide.
    """

    distance: float
    closest_point_robot: np.ndarray
    closest_point_human: np.ndarray
    direction: np.ndarray
    link_index: int
    degenerate: bool = False


@dataclass
class ChainPose:
    """Forward-kinematics result: per-link world frames plus the world-space
    joint axes/origins needed by the Jacobians."""

    link_rotations: list[np.ndarray]
    link_origins: list[np.ndarray]
    joint_axes_world: list[np.ndarray]
    joint_origins_world: list[np.ndarray]
    capsules: list[Capsule] = field(default_factory=list)
    capsule_links: list[int] = field(default_factory=list)


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def _project_point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return a
    t = float((p - a) @ ab) / denom
    return a + min(1.0, max(0.0, t)) * ab


def segment_closest_points(
    seg_a: tuple[np.ndarray, np.ndarray], seg_b: tuple[np.ndarray, np.ndarray]
) -> tuple[np.ndarray, np.ndarray, float]:
    """Globally closest points between two segments (degenerate ones allowed).

    Returns (point_on_a, point_on_b, distance). The minimum over the unit
    parameter square is attained either at the interior stationary point or on
    one of the four edges, so checking those candidates is exhaustive.
    """
    p0 = np.asarray(seg_a[0], dtype=float)
    p1 = np.asarray(seg_a[1], dtype=float)
    q0 = np.asarray(seg_b[0], dtype=float)
    q1 = np.asarray(seg_b[1], dtype=float)

    u = p1 - p0
    v = q1 - q0
    w = p0 - q0
    a = float(u @ u)
    b = float(u @ v)
    c = float(v @ v)
    d = float(u @ w)
    e = float(v @ w)
    det = a * c - b * b

    candidates = []
    if det > 1e-14 * max(a * c, 1e-30):
        s = (b * e - c * d) / det
        t = (a * e - b * d) / det
        if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
            candidates.append((p0 + s * u, q0 + t * v))
    candidates.append((_project_point_segment(q0, p0, p1), q0))
    candidates.append((_project_point_segment(q1, p0, p1), q1))
    candidates.append((p0, _project_point_segment(p0, q0, q1)))
    candidates.append((p1, _project_point_segment(p1, q0, q1)))

    best_pa, best_pb = candidates[0]
    best_d2 = float((best_pa - best_pb) @ (best_pa - best_pb))
    for pa, pb in candidates[1:]:
        d2 = float((pa - pb) @ (pa - pb))
        if d2 < best_d2:
            best_d2 = d2
            best_pa, best_pb = pa, pb
    return best_pa, best_pb, float(np.sqrt(best_d2))


def capsule_separation(cap_a: Capsule, cap_b: Capsule, link_index: int = 0) -> SeparationGeometry:
    """Surface-to-surface separation between two capsules.

    Negative distance signals penetration; it is reported, never raised.
    Witness points are the capsule surface points along the separation axis
    (walking the surface point back along the axis keeps it rigid to the link
    while leaving the approach-speed projection unchanged).
    """
    axis_a, axis_b, axis_dist = segment_closest_points(
        (cap_a.a, cap_a.b), (cap_b.a, cap_b.b)
    )
    diff = axis_b - axis_a
    degenerate = axis_dist < 1e-12
    if degenerate:
        direction = DEGENERATE_DIRECTION.copy()
    else:
        direction = diff / axis_dist
    distance = axis_dist - cap_a.radius - cap_b.radius
    point_a = axis_a + direction * cap_a.radius
    point_b = axis_b - direction * cap_b.radius
    return SeparationGeometry(
        distance=float(distance),
        closest_point_robot=point_a,
        closest_point_human=point_b,
        direction=direction,
        link_index=link_index,
        degenerate=degenerate,
    )


def forward_kinematics(chain: KinematicChain, q: np.ndarray) -> ChainPose:
    """World frames for every link plus world-space capsules.

    Frame j is the frame rigidly attached to link j, i.e. after joint j's
    rotation; frames compose in chain order from the fixed base.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n_joints,):
        raise ValueError(f"q must have length {chain.n_joints}")

    rotations: list[np.ndarray] = []
    origins: list[np.ndarray] = []
    axes_world: list[np.ndarray] = []
    joint_origins: list[np.ndarray] = []
    R = np.eye(3)
    p = np.zeros(3)
    for j, joint in enumerate(chain.joints):
        p = p + R @ joint.offset
        axis_w = R @ joint.axis
        joint_origins.append(p)
        axes_world.append(axis_w)
        R = R @ _axis_angle_matrix(joint.axis, float(q[j]))
        rotations.append(R)
        origins.append(p)

    pose = ChainPose(
        link_rotations=rotations,
        link_origins=origins,
        joint_axes_world=axes_world,
        joint_origins_world=joint_origins,
    )
    for att in chain.capsules:
        Rl = rotations[att.link]
        pl = origins[att.link]
        pose.capsules.append(
            Capsule(pl + Rl @ att.local_a, pl + Rl @ att.local_b, att.radius)
        )
        pose.capsule_links.append(att.link)
    return pose


def link_position_jacobian(
    chain: KinematicChain,
    q: np.ndarray,
    link: int,
    point: np.ndarray,
    pose: ChainPose | None = None,
) -> np.ndarray:
    """3xn Jacobian of a world point rigidly attached to `link`.

    Column k is the revolute rate map w_k x (x - p_k); joints distal to the
    link contribute zero columns.
    """
    if not (0 <= link < chain.n_joints):
        raise ValueError(f"invalid link index {link}")
    if pose is None:
        pose = forward_kinematics(chain, q)
    point = np.asarray(point, dtype=float)
    J = np.zeros((3, chain.n_joints))
    for k in range(link + 1):
        J[:, k] = np.cross(pose.joint_axes_world[k], point - pose.joint_origins_world[k])
    return J


def modified_jacobian_row(
    chain: KinematicChain,
    q: np.ndarray,
    sep: SeparationGeometry,
    pose: ChainPose | None = None,
) -> np.ndarray:
    """1xn row mapping joint velocities to the scalar speed of the witness
    link point toward the human witness point (positive = approaching)."""
    J = link_position_jacobian(chain, q, sep.link_index, sep.closest_point_robot, pose)
    return sep.direction @ J
