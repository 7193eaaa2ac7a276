"""Geometric joint-space paths with path-velocity decomposition.

A trajectory is factored into a geometric path q(s), s in [0, 1], and a
nominal speed law s_dot(s), so the safety layer can scale speed without
altering geometry. Paths are piecewise-linear in joint space: q'(s) is exact
per segment and every downstream constraint row stays analytic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class GeometricPath:
    """Piecewise-linear joint-space path parameterized by arc length."""

    waypoints: np.ndarray  # (m, n)
    knots: np.ndarray  # (m,), 0 = first, 1 = last, strictly increasing
    derivs: np.ndarray  # (m-1, n), dq/ds per segment

    @property
    def n_joints(self) -> int:
        return self.waypoints.shape[1]

    @property
    def n_segments(self) -> int:
        return self.waypoints.shape[0] - 1

    def segment_index(self, s: float) -> int:
        """Segment owning s under the right-hand-derivative convention
        (interior knots belong to the segment they start)."""
        idx = int(np.searchsorted(self.knots, s, side="right")) - 1
        return min(max(idx, 0), self.n_segments - 1)


@dataclass
class SpeedProfile:
    """Piecewise-constant nominal path speed, one value per path segment."""

    segment_speeds: np.ndarray  # (m-1,), each > 0
    s_dot_cap: float

    def s_dot(self, path: GeometricPath, s: float) -> float:
        return float(self.segment_speeds[path.segment_index(s)])


@dataclass
class ParamTrajectory:
    """Path + nominal profile + execution progress.

    s_current is owned by a single executor (the engine tick or one virtual
    rollout); rollouts snapshot with `copy()`.
    """

    path: GeometricPath
    profile: SpeedProfile
    s_current: float = 0.0

    def copy(self) -> "ParamTrajectory":
        return replace(self)


def build_path(waypoints) -> GeometricPath:
    """Build a piecewise-linear path with knots proportional to cumulative
    joint-space arc length."""
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[0] < 2:
        raise ValueError("need at least 2 waypoints")
    seg = np.diff(wp, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    if np.any(lengths < 1e-12):
        raise ValueError("consecutive waypoints must differ")
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    knots = cum / cum[-1]
    knots[0] = 0.0
    knots[-1] = 1.0
    derivs = seg / np.diff(knots)[:, None]
    return GeometricPath(waypoints=wp, knots=knots, derivs=derivs)


def eval_path(path: GeometricPath, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (q(s), dq/ds) with the right-hand derivative at interior
    knots and the left-hand one at s = 1. Knot evaluation reproduces the
    waypoint exactly."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s={s} outside [0, 1]")
    i = path.segment_index(s)
    s0 = path.knots[i]
    s1 = path.knots[i + 1]
    if s == s0:
        q = path.waypoints[i].copy()
    elif s == s1:
        q = path.waypoints[i + 1].copy()
    else:
        w = (s - s0) / (s1 - s0)
        q = (1.0 - w) * path.waypoints[i] + w * path.waypoints[i + 1]
    return q, path.derivs[i].copy()


def nominal_profile(
    path: GeometricPath,
    qd_min: np.ndarray,
    qd_max: np.ndarray,
    s_dot_cap: float,
) -> SpeedProfile:
    """Largest per-segment s_dot that keeps q'(s) * s_dot inside the joint
    velocity bounds, capped at s_dot_cap. Always > 0."""
    if s_dot_cap <= 0.0:
        raise ValueError("s_dot_cap must be > 0")
    qd_min = np.asarray(qd_min, dtype=float)
    qd_max = np.asarray(qd_max, dtype=float)
    speeds = np.empty(path.n_segments)
    for i in range(path.n_segments):
        d = path.derivs[i]
        bound = s_dot_cap
        for j in range(path.n_joints):
            if d[j] > 0.0:
                bound = min(bound, qd_max[j] / d[j])
            elif d[j] < 0.0:
                bound = min(bound, qd_min[j] / d[j])
        speeds[i] = bound
    return SpeedProfile(segment_speeds=speeds, s_dot_cap=float(s_dot_cap))


def remaining_duration(traj: ParamTrajectory, s: float | None = None) -> float:
    """Ideal time to finish the path from s at the nominal profile,
    integrated exactly over the piecewise-constant segments."""
    if s is None:
        s = traj.s_current
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s={s} outside [0, 1]")
    path = traj.path
    speeds = traj.profile.segment_speeds
    if s >= 1.0:
        return 0.0
    i = path.segment_index(s)
    total = (path.knots[i + 1] - s) / speeds[i]
    for j in range(i + 1, path.n_segments):
        total += (path.knots[j + 1] - path.knots[j]) / speeds[j]
    return float(total)


def advance(traj: ParamTrajectory, alpha: float, dt: float) -> bool:
    """One forward-Euler step: s += s_dot(s) * alpha * dt, clamped at 1.

    Mutates traj.s_current (never decreasing) and returns True when the end
    of the path has been reached.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    s = traj.s_current
    s_dot = traj.profile.s_dot(traj.path, s)
    traj.s_current = min(1.0, s + s_dot * alpha * dt)
    return traj.s_current >= 1.0
