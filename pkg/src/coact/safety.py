"""Speed-and-separation monitoring and the per-tick scaling optimization.

Two pieces: the ISO/TS 15066 limit on the robot's speed toward the operator
as a function of separation, and the analytic maximization of the path-speed
scaling factor alpha under that limit plus joint velocity and acceleration
bounds. Every constraint is linear in alpha, so the optimum is computed by
interval intersection rather than an iterative solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import (
    Capsule,
    ChainPose,
    KinematicChain,
    SeparationGeometry,
    capsule_separation,
    forward_kinematics,
    modified_jacobian_row,
)


@dataclass
class IsoParams:
    """Parameters of the separation-monitoring speed limit.

    a_max: maximum deceleration (m/s^2). T_r: reaction time, which doubles as
    the discrete controller period (s). C: intrusion distance (m). Z_d, Z_r:
    position uncertainty of human and robot (m).
    """

    a_max: float
    T_r: float = 0.1
    C: float = 0.0
    Z_d: float = 0.0
    Z_r: float = 0.0

    def __post_init__(self) -> None:
        if self.a_max <= 0.0 or self.T_r <= 0.0:
            raise ValueError("a_max and T_r must be > 0")
        if min(self.C, self.Z_d, self.Z_r) < 0.0:
            raise ValueError("C, Z_d, Z_r must be >= 0")

    @property
    def clearance(self) -> float:
        """Minimum protective margin C + Z_d + Z_r."""
        return self.C + self.Z_d + self.Z_r


@dataclass
class LinkSeparation:
    """Per-link separation inputs to the speed limit."""

    S_p: float  # measured separation, clamped >= 0
    v_h: float  # human approach speed toward the link, clamped >= 0
    J_row: np.ndarray  # 1xn approach-speed Jacobian row
    v_rh: float  # current robot approach speed toward the human
    geometry: SeparationGeometry


@dataclass
class SeparationState:
    links: list[LinkSeparation]
    worst_link: int

    @property
    def min_distance(self) -> float:
        """Raw signed separation of the worst link (may be negative)."""
        return self.links[self.worst_link].geometry.distance


@dataclass
class JointLimits:
    qd_min: np.ndarray
    qd_max: np.ndarray
    qdd_min: np.ndarray
    qdd_max: np.ndarray


@dataclass
class ScalingRow:
    """One ISO velocity constraint: a * alpha <= v_max."""

    a: float  # approach speed of the link at alpha = 1
    v_max: float  # >= 0
    link: int = 0


@dataclass
class BindingConstraint:
    kind: str  # velocity_limit | joint_velocity | joint_acceleration | unit_cap | infeasible_brake
    index: int | None = None


@dataclass
class ScalingResult:
    alpha: float
    binding: BindingConstraint
    feasible: bool


def iso_speed_limit(iso: IsoParams, S_p: float, v_h: float) -> float:
    """Maximum robot speed toward the operator at separation S_p.

    v_h < 0 (receding human) is clamped to 0: a departing operator must not
    inflate the limit. A negative discriminant (human inside the protective
    margin) clamps to 0, the only safe completion of the formula's domain.
    """
    v_h = max(0.0, v_h)
    S_p = max(0.0, S_p)
    K = iso.clearance - S_p
    a_t = iso.a_max * iso.T_r
    disc = v_h * v_h + a_t * a_t - 2.0 * iso.a_max * K
    if disc <= 0.0:
        return 0.0
    return max(0.0, math.sqrt(disc) - a_t - v_h)


def separation_state(
    chain: KinematicChain,
    q: np.ndarray,
    q_dot: np.ndarray,
    human_capsules: list[Capsule],
    human_velocity: np.ndarray | list[np.ndarray] | None = None,
    pose: ChainPose | None = None,
) -> SeparationState:
    """Per-link worst separation against all human capsules.

    For each robot link: the minimum capsule separation, the human witness
    velocity projected onto the approach axis (clamped at 0 from below), and
    the approach-speed Jacobian row of the witness point.

    human_velocity is one 3-vector applied to every human capsule, or a list
    with one 3-vector per capsule; None means a static human.
    """
    if not human_capsules:
        raise ValueError("need at least one human capsule")
    if pose is None:
        pose = forward_kinematics(chain, q)
    q_dot = np.asarray(q_dot, dtype=float)

    if human_velocity is None:
        velocities = [np.zeros(3)] * len(human_capsules)
    elif isinstance(human_velocity, (list, tuple)):
        velocities = [np.asarray(v, dtype=float) for v in human_velocity]
    else:
        velocities = [np.asarray(human_velocity, dtype=float)] * len(human_capsules)

    best: dict[int, tuple[SeparationGeometry, np.ndarray]] = {}
    for cap, link in zip(pose.capsules, pose.capsule_links):
        for h_cap, h_vel in zip(human_capsules, velocities):
            sep = capsule_separation(cap, h_cap, link_index=link)
            if link not in best or sep.distance < best[link][0].distance:
                best[link] = (sep, h_vel)

    links: list[LinkSeparation] = []
    worst = 0
    worst_dist = math.inf
    for idx, link in enumerate(sorted(best)):
        sep, h_vel = best[link]
        J_row = modified_jacobian_row(chain, q, sep, pose)
        # Approach speed of the human witness point toward the robot:
        # component along -direction, receding motion clamped to zero.
        v_h = max(0.0, float(-sep.direction @ h_vel))
        links.append(
            LinkSeparation(
                S_p=max(0.0, sep.distance),
                v_h=v_h,
                J_row=J_row,
                v_rh=float(J_row @ q_dot),
                geometry=sep,
            )
        )
        if sep.distance < worst_dist:
            worst_dist = sep.distance
            worst = idx
    return SeparationState(links=links, worst_link=worst)


def scaling_rows(
    state: SeparationState, iso: IsoParams, qp_dot: np.ndarray
) -> list[ScalingRow]:
    """ISO constraint rows for the scaling problem: one per monitored link,
    using each link's own separation and human approach speed."""
    rows = []
    for ls in state.links:
        rows.append(
            ScalingRow(
                a=float(ls.J_row @ qp_dot),
                v_max=iso_speed_limit(iso, ls.S_p, ls.v_h),
                link=ls.geometry.link_index,
            )
        )
    return rows


def solve_scaling(
    rows: list[ScalingRow],
    qp_dot: np.ndarray,
    q_dot_actual: np.ndarray,
    limits: JointLimits,
    T_r: float,
) -> ScalingResult:
    """Maximize alpha in [0, 1] subject to the ISO rows, joint velocity
    bounds on qp_dot * alpha, and acceleration bounds on
    (qp_dot * alpha - q_dot_actual) / T_r.

    Each constraint contributes a half-line in alpha; the maximum of the
    intersection is returned. Only acceleration constraints can produce
    positive lower bounds, so an empty intersection means braking cannot be
    reconciled with a safety or velocity cap; in that case the safety-side
    cap wins (the ISO limit already budgets a full a_max stop): alpha is the
    clamped minimum of the safety/velocity upper bounds, flagged infeasible.
    """
    qp_dot = np.asarray(qp_dot, dtype=float)
    q_dot_actual = np.asarray(q_dot_actual, dtype=float)
    n = qp_dot.shape[0]

    upper = 1.0
    binding = BindingConstraint("unit_cap")

    for row in rows:
        if row.v_max < 0.0:
            raise ValueError("v_max must be >= 0")
        if row.a > 0.0:
            u = row.v_max / row.a
            if u < upper:
                upper = u
                binding = BindingConstraint("velocity_limit", row.link)

    for j in range(n):
        d = qp_dot[j]
        if d > 0.0:
            u = limits.qd_max[j] / d
        elif d < 0.0:
            u = limits.qd_min[j] / d
        else:
            continue
        if u < upper:
            upper = u
            binding = BindingConstraint("joint_velocity", j)

    # Upper bounds so far come only from safety and velocity rows; remember
    # them before acceleration enters, for the infeasible fallback.
    soft_upper = upper
    lower = 0.0
    accel_ok = True
    for j in range(n):
        d = qp_dot[j]
        lo = q_dot_actual[j] + T_r * limits.qdd_min[j]
        hi = q_dot_actual[j] + T_r * limits.qdd_max[j]
        if d > 0.0:
            u, l = hi / d, lo / d
        elif d < 0.0:
            u, l = lo / d, hi / d
        else:
            if lo > 0.0 or hi < 0.0:
                accel_ok = False
            continue
        if u < upper:
            upper = u
            binding = BindingConstraint("joint_acceleration", j)
        lower = max(lower, l)

    if accel_ok and lower <= upper:
        return ScalingResult(alpha=float(upper), binding=binding, feasible=True)
    return ScalingResult(
        alpha=float(min(1.0, max(0.0, soft_upper))),
        binding=BindingConstraint("infeasible_brake"),
        feasible=False,
    )
