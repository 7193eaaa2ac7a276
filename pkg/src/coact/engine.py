"""Closed-loop collaboration episodes.

One simulation couples four pieces at a fixed controller period: a scripted
human, the separation-monitored speed scaling, the path-following robot,
and the budgeted predictive supervisor. The same loop runs in two modes:
"predictive" (supervisor armed, its warning lets the scripted human react)
and "baseline" (supervisor off, everything else identical). Safety scaling
is active in both.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .fusion import (
    CLASS_NAMES,
    CLASS_PATTERNS,
    ChannelEvent,
    FusionWindow,
    InputTensor,
)
from .geom import Capsule, KinematicChain, forward_kinematics, link_position_jacobian
from .predictor import PredictiveSimulator, PredictorConfig
from .safety import (
    IsoParams,
    JointLimits,
    scaling_rows,
    separation_state,
    solve_scaling,
)
from .trajectory import (
    ParamTrajectory,
    advance,
    build_path,
    eval_path,
    nominal_profile,
)

log = logging.getLogger("coact.engine")

MODES = ("predictive", "baseline")


@dataclass
class HumanWaypoint:
    t: float
    position: np.ndarray

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,):
            raise ValueError("waypoint position must be a 3-vector")


@dataclass
class HumanScript:
    """Deterministic human motion: body capsules carried along a piecewise
    linear position schedule, plus an optional retreat reaction that only a
    supervisor warning can trigger.
    """

    waypoints: list[HumanWaypoint]
    capsules: list[Capsule]  # body shape with the reference point at the origin
    comply_delay: float | None = None
    comply_retreat: float | None = None
    comply_speed: float = 1.0
    retreat_direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise ValueError("human script needs at least one waypoint")
        times = [w.t for w in self.waypoints]
        if sorted(times) != times:
            raise ValueError("human waypoints must be sorted by time")
        if not self.capsules:
            raise ValueError("human script needs at least one capsule")
        self.retreat_direction = np.asarray(self.retreat_direction, dtype=float)
        norm = np.linalg.norm(self.retreat_direction)
        if norm == 0.0:
            raise ValueError("retreat_direction must be nonzero")
        self.retreat_direction = self.retreat_direction / norm

    @property
    def can_comply(self) -> bool:
        return self.comply_delay is not None and self.comply_retreat is not None


class SimulatedHuman:
    """Evaluates the script at arbitrary times.

    state_at(t) is used both to move the real human and as the supervisor's
    prediction model, so a triggered retreat is visible to the rollout from
    the moment it is triggered and never before.
    """

    def __init__(self, script: HumanScript) -> None:
        self.script = script
        self.warned_at: float | None = None
        # (position, velocity, timestamp) set by a live operator feed; while
        # present it replaces the script with constant-velocity motion.
        self._override: tuple[np.ndarray, np.ndarray, float] | None = None

    def notify_warning(self, t: float) -> None:
        if self.warned_at is None and self.script.can_comply:
            self.warned_at = t

    def set_override(self, position, velocity, t: float) -> None:
        self._override = (
            np.asarray(position, dtype=float),
            np.asarray(velocity, dtype=float),
            t,
        )

    def clear_override(self) -> None:
        self._override = None

    def _schedule(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        wps = self.script.waypoints
        if t <= wps[0].t or len(wps) == 1:
            return wps[0].position.copy(), np.zeros(3)
        if t >= wps[-1].t:
            return wps[-1].position.copy(), np.zeros(3)
        for a, b in zip(wps[:-1], wps[1:]):
            if t < b.t:
                span = b.t - a.t
                frac = (t - a.t) / span
                vel = (b.position - a.position) / span
                return a.position + frac * (b.position - a.position), vel
        return wps[-1].position.copy(), np.zeros(3)

    def _retreat(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        s = self.script
        if self.warned_at is None or not s.can_comply:
            return np.zeros(3), np.zeros(3)
        ramp_t = t - self.warned_at - s.comply_delay
        if ramp_t <= 0.0:
            return np.zeros(3), np.zeros(3)
        travel = min(s.comply_retreat, ramp_t * s.comply_speed)
        vel = s.retreat_direction * (s.comply_speed if travel < s.comply_retreat else 0.0)
        return s.retreat_direction * travel, vel

    def state_at(self, t: float) -> tuple[list[Capsule], np.ndarray]:
        if self._override is not None:
            pos0, vel, t0 = self._override
            pos = pos0 + vel * max(0.0, t - t0)
            return [c.translated(pos) for c in self.script.capsules], vel.copy()
        pos, vel = self._schedule(t)
        off, off_vel = self._retreat(t)
        offset = pos + off
        capsules = [c.translated(offset) for c in self.script.capsules]
        return capsules, vel + off_vel


@dataclass
class Scenario:
    name: str
    chain: KinematicChain
    iso: IsoParams
    predictor: PredictorConfig
    tasks: list[np.ndarray]  # joint-space waypoint arrays, run in order
    human: HumanScript
    mode: str = "predictive"
    seed: int = 0
    timeout_s: float = 300.0
    s_dot_cap: float = 0.5
    eps_stop: float = 0.01
    channel_events: list[ChannelEvent] = field(default_factory=list)
    component_targets: dict[str, np.ndarray] = field(default_factory=dict)
    pointed_target: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.tasks:
            raise ValueError("scenario needs at least one task")
        self.tasks = [np.asarray(t, dtype=float) for t in self.tasks]


@dataclass
class TickRecord:
    t: float
    task: int
    s: float
    alpha: float
    feasible: bool
    binding: str
    min_distance: float
    v_max: float
    v_rh: float
    q: np.ndarray
    q_dot: np.ndarray


@dataclass
class EpisodeResult:
    mode: str
    records: list[TickRecord]
    events: list[dict]
    completed: bool
    execution_time: float
    downtime: float
    min_separation: float
    warning_times: list[float]
    metrics: dict


@dataclass
class ComparisonResult:
    predictive: EpisodeResult
    baseline: EpisodeResult
    execution_improvement: float  # fraction of baseline execution time saved
    downtime_reduction: float  # fraction of baseline downtime removed


def chain_limits(chain: KinematicChain) -> JointLimits:
    return JointLimits(chain.qd_min, chain.qd_max, chain.qdd_min, chain.qdd_max)


def point_to_config(
    chain: KinematicChain,
    q_seed: np.ndarray,
    target: np.ndarray,
    tol: float = 1e-3,
    max_iter: int = 300,
    damping: float = 0.1,
) -> np.ndarray:
    """Joint configuration whose tool point reaches a workspace target.

    Damped least-squares iteration on the position Jacobian of the tip of
    the last link's capsule. Raises if the target stays out of tolerance.
    """
    target = np.asarray(target, dtype=float)
    q = np.asarray(q_seed, dtype=float).copy()
    last_link = chain.n_joints - 1
    for _ in range(max_iter):
        pose = forward_kinematics(chain, q)
        tip = pose.capsules[-1].b
        err = target - tip
        if np.linalg.norm(err) < tol:
            return q
        J = link_position_jacobian(chain, q, last_link, tip, pose)
        JJt = J @ J.T + (damping**2) * np.eye(3)
        dq = J.T @ np.linalg.solve(JJt, err)
        step = np.linalg.norm(dq)
        if step > 0.5:
            dq *= 0.5 / step
        q = q + dq
    raise ValueError("tool point cannot reach the requested target")


class Simulation:
    """One episode of one scenario."""

    def __init__(self, scenario: Scenario, mode: str | None = None, classifier=None):
        self.scenario = scenario
        self.mode = mode or scenario.mode
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.chain = scenario.chain
        self.iso = scenario.iso
        self.limits = chain_limits(self.chain)
        self.human = SimulatedHuman(scenario.human)
        self.predictor = PredictiveSimulator(
            self.chain,
            self.iso,
            self.limits,
            replace(scenario.predictor, enabled=(self.mode == "predictive")),
        )
        self.classifier = classifier
        self.window = FusionWindow()
        self.pending_events = deque(sorted(scenario.channel_events, key=lambda e: e.timestamp))
        self.pending_tasks = deque(scenario.tasks)
        self.speed_factor = 1.0
        self.hold = False
        self.t = 0.0
        self.task_index = -1
        self.task_started_at = 0.0
        self.traj: ParamTrajectory | None = None
        self.q = np.asarray(scenario.tasks[0][0], dtype=float).copy()
        self.q_dot = np.zeros(self.chain.n_joints)
        self.records: list[TickRecord] = []
        self.events: list[dict] = []
        self.warning_times: list[float] = []

    # -- trajectory management ------------------------------------------

    def _make_traj(self, waypoints: np.ndarray) -> ParamTrajectory:
        wps = np.asarray(waypoints, dtype=float)
        if np.linalg.norm(wps[0] - self.q) > 1e-9:
            wps = np.vstack([self.q[None, :], wps])
        path = build_path(wps)
        profile = nominal_profile(
            path,
            self.chain.qd_min,
            self.chain.qd_max,
            self.scenario.s_dot_cap * self.speed_factor,
        )
        return ParamTrajectory(path=path, profile=profile)

    def _next_task(self) -> bool:
        while self.pending_tasks:
            waypoints = self.pending_tasks.popleft()
            self.task_index += 1
            self.task_started_at = self.t
            try:
                self.traj = self._make_traj(waypoints)
            except ValueError:
                # Degenerate task (already at the goal): done immediately.
                self._emit_task_done()
                continue
            self.predictor.reset()
            return True
        self.traj = None
        return False

    def _emit_task_done(self) -> None:
        self.events.append(
            {
                "t": self.t,
                "type": "task_done",
                "task": self.task_index,
                "duration": self.t - self.task_started_at,
            }
        )

    def _rebuild_profile(self) -> None:
        if self.traj is not None:
            self.traj.profile = nominal_profile(
                self.traj.path,
                self.chain.qd_min,
                self.chain.qd_max,
                self.scenario.s_dot_cap * self.speed_factor,
            )

    def _replan_current(self) -> None:
        if self.traj is None:
            return
        path = self.traj.path
        seg = path.segment_index(self.traj.s_current)
        remaining = path.waypoints[seg + 1 :]
        self.traj = self._make_traj(remaining)
        self.predictor.reset()

    # -- commands ---------------------------------------------------------

    def dispatch_command(self, class_id: int, t: float) -> str:
        """Apply one classified command; returns a short disposition note."""
        name = CLASS_NAMES[class_id]
        note = "dialogue"
        if name in ("pause", "stop"):
            self.hold = True
            note = "hold"
        elif name == "resume":
            self.hold = False
            note = "released"
        elif name == "replan":
            self._replan_current()
            note = "replanned"
        elif name == "faster":
            self.speed_factor = min(2.0, self.speed_factor * 1.25)
            self._rebuild_profile()
            note = f"speed_factor={self.speed_factor:.3f}"
        elif name == "slower":
            self.speed_factor = max(0.25, self.speed_factor * 0.8)
            self._rebuild_profile()
            note = f"speed_factor={self.speed_factor:.3f}"
        elif name in ("place_object_there", "point_there"):
            target = self.scenario.pointed_target
            if target is None:
                note = "no_target"
            else:
                q_goal = point_to_config(self.chain, self.q, target)
                self.pending_tasks.append(np.vstack([self.q[None, :], q_goal[None, :]]))
                note = "queued"
        elif name.startswith("pick_"):
            key = name.removeprefix("pick_")
            target = self.scenario.component_targets.get(key)
            if target is None:
                note = "no_target"
            else:
                q_goal = point_to_config(self.chain, self.q, np.asarray(target, dtype=float))
                self.pending_tasks.append(np.vstack([self.q[None, :], q_goal[None, :]]))
                note = "queued"
        self.events.append(
            {"t": t, "type": "command", "class_id": class_id, "name": name, "note": note}
        )
        log.info("command %s at t=%.2f: %s", name, t, note)
        return note

    def _classify(self, tensor: InputTensor) -> int | None:
        if self.classifier is not None:
            return int(self.classifier(tensor.values))
        return classify_tokens(tensor.tokens)

    def _dispatch_tensor(self, tensor: InputTensor) -> None:
        class_id = self._classify(tensor)
        if class_id is None:
            self.events.append(
                {
                    "t": self.t,
                    "type": "command",
                    "class_id": -1,
                    "name": "unrecognized",
                    "note": "ignored",
                }
            )
        else:
            self.dispatch_command(class_id, self.t)

    def inject_event(self, event: ChannelEvent) -> None:
        """Feed one live channel event through the fusion window."""
        out = self.window.ingest(event)
        if out is not None:
            self._dispatch_tensor(out)

    def _process_inputs(self) -> None:
        while self.pending_events and self.pending_events[0].timestamp <= self.t:
            self.inject_event(self.pending_events.popleft())
        out = self.window.poll(self.t)
        if out is not None:
            self._dispatch_tensor(out)

    # -- main loop --------------------------------------------------------

    def _tick(self) -> None:
        assert self.traj is not None
        T_r = self.iso.T_r
        self._process_inputs()

        capsules, velocity = self.human.state_at(self.t)
        state = separation_state(
            self.chain, self.q, self.q_dot, capsules, velocity
        )
        s = self.traj.s_current
        _, dq_ds = eval_path(self.traj.path, s)
        s_dot = self.traj.profile.s_dot(self.traj.path, s)
        qp_dot = dq_ds * s_dot
        rows = scaling_rows(state, self.iso, qp_dot)
        result = solve_scaling(rows, qp_dot, self.q_dot, self.limits, T_r)
        alpha = 0.0 if self.hold else result.alpha

        done = advance(self.traj, alpha, T_r)
        self.q, _ = eval_path(self.traj.path, self.traj.s_current)
        self.q_dot = qp_dot * alpha

        t_next = self.t + T_r
        outcome = self.predictor.tick(self.traj, self.q_dot, t_next, self.human.state_at)
        if outcome is not None and outcome.warned_now:
            self.warning_times.append(t_next)
            self.human.notify_warning(t_next)
            self.events.append(
                {
                    "t": t_next,
                    "type": "warning",
                    "T_virt": outcome.T_virt,
                    "T_rem": outcome.T_rem,
                    "gamma": self.predictor.config.gamma,
                }
            )
            log.info(
                "completion-time warning at t=%.2f (T_virt=%.2f, T_rem=%.2f)",
                t_next,
                outcome.T_virt,
                outcome.T_rem,
            )

        worst = state.links[state.worst_link]
        self.records.append(
            TickRecord(
                t=self.t,
                task=self.task_index,
                s=s,
                alpha=alpha,
                feasible=result.feasible,
                binding=result.binding.kind,
                min_distance=worst.geometry.distance,
                v_max=rows[state.worst_link].v_max,
                v_rh=worst.v_rh,
                q=self.q.copy(),
                q_dot=self.q_dot.copy(),
            )
        )
        self.events.append(
            {
                "t": self.t,
                "type": "alpha",
                "alpha": alpha,
                "binding": result.binding.kind,
                "index": result.binding.index,
                "feasible": result.feasible,
            }
        )
        self.events.append(
            {
                "t": self.t,
                "type": "separation",
                "distance": worst.geometry.distance,
                "link": worst.geometry.link_index,
                "v_max": rows[state.worst_link].v_max,
                "v_rh": worst.v_rh,
            }
        )

        self.t = t_next
        if done:
            self._emit_task_done()
            self._next_task()

    def run(self) -> EpisodeResult:
        completed = True
        self._next_task()
        while self.traj is not None:
            if self.t >= self.scenario.timeout_s:
                completed = False
                log.warning(
                    "episode timed out at t=%.1f s with task %d unfinished",
                    self.t,
                    self.task_index,
                )
                break
            self._tick()
        return self._finish(completed, self.t)

    def _finish(self, completed: bool, execution_time: float) -> EpisodeResult:
        eps = self.scenario.eps_stop
        T_r = self.iso.T_r
        downtime = sum(T_r for r in self.records if r.alpha <= eps)
        min_sep = min((r.min_distance for r in self.records), default=float("inf"))
        mean_alpha = (
            float(np.mean([r.alpha for r in self.records])) if self.records else 1.0
        )
        metrics = {
            "mode": self.mode,
            "completed": completed,
            "execution_time": execution_time,
            "downtime": downtime,
            "min_separation": min_sep,
            "mean_alpha": mean_alpha,
            "n_warnings": len(self.warning_times),
            "n_ticks": len(self.records),
        }
        return EpisodeResult(
            mode=self.mode,
            records=self.records,
            events=self.events,
            completed=completed,
            execution_time=execution_time,
            downtime=downtime,
            min_separation=min_sep,
            warning_times=self.warning_times,
            metrics=metrics,
        )


def classify_tokens(tokens: list[int]) -> int | None:
    """Rule-based fallback classifier: exact token-multiset lookup."""
    bag = sorted(tokens)
    for class_id, patterns in CLASS_PATTERNS.items():
        for pattern in patterns:
            if sorted(pattern) == bag:
                return class_id
    return None


def run_episode(
    scenario: Scenario, mode: str | None = None, classifier=None
) -> EpisodeResult:
    return Simulation(scenario, mode=mode, classifier=classifier).run()


def compare_runs(scenario: Scenario, classifier=None) -> ComparisonResult:
    """Run the same scenario with the supervisor armed and disarmed."""
    predictive = run_episode(scenario, mode="predictive", classifier=classifier)
    baseline = run_episode(scenario, mode="baseline", classifier=classifier)

    def _fraction_saved(base: float, new: float) -> float:
        if base <= 0.0:
            return 0.0
        return (base - new) / base

    return ComparisonResult(
        predictive=predictive,
        baseline=baseline,
        execution_improvement=_fraction_saved(
            baseline.execution_time, predictive.execution_time
        ),
        downtime_reduction=_fraction_saved(baseline.downtime, predictive.downtime),
    )
