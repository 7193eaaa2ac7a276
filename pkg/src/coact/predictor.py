"""Predictive supervision of the scaled trajectory.

A virtual copy of the robot is rolled forward from the current real state,
against a prediction of the human, using the same safety scaling as the
real controller. The accumulated virtual completion time is compared with
the nominal remaining duration of the trajectory; when it exceeds gamma
times the nominal value, one warning per trajectory is raised so the rest
of the system (and the operator) can react before the slowdown plays out
in real time.

run_rollout performs one bounded rollout to its verdict. The supervisor
spreads the same computation across real ticks on a fixed budget of
virtual steps per tick, so its per-tick cost stays constant; a completed
rollout restarts from the newest real state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import Capsule, KinematicChain
from .safety import IsoParams, JointLimits, scaling_rows, separation_state, solve_scaling
from .trajectory import ParamTrajectory, advance, eval_path, remaining_duration

HUMAN_PREDICTORS = ("frozen", "constant_velocity")


@dataclass
class HumanObservation:
    """Snapshot of the human at one instant: capsules and their velocities."""

    capsules: list[Capsule]
    velocities: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.capsules) != len(self.velocities):
            raise ValueError("one velocity per capsule required")
        self.velocities = [np.asarray(v, dtype=float) for v in self.velocities]

    @classmethod
    def still(cls, capsules: list[Capsule]) -> "HumanObservation":
        return cls(capsules=capsules, velocities=[np.zeros(3)] * len(capsules))


@dataclass
class PredictorConfig:
    gamma: float = 1.5
    human_predictor: str = "frozen"
    rollout_rate_multiplier: int = 50
    max_rollout_steps: int = 20000
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.gamma <= 1.0:
            raise ValueError("gamma must be > 1")
        if self.human_predictor not in HUMAN_PREDICTORS:
            raise ValueError(f"human_predictor must be one of {HUMAN_PREDICTORS}")
        if self.rollout_rate_multiplier < 1:
            raise ValueError("rollout_rate_multiplier must be >= 1")
        if self.max_rollout_steps < 1:
            raise ValueError("max_rollout_steps must be >= 1")


def predict_human(
    observation: HumanObservation, kind: str, horizon: float
) -> HumanObservation:
    """Predicted human state `horizon` seconds past the observation.

    frozen: the state is returned unchanged. constant_velocity: capsule
    positions advance by v * horizon, velocities unchanged.
    """
    if horizon < 0.0:
        raise ValueError("horizon must be >= 0")
    if kind == "frozen":
        return observation
    if kind != "constant_velocity":
        raise ValueError(f"unknown predictor kind {kind!r}")
    capsules = [
        cap.translated(vel * horizon)
        for cap, vel in zip(observation.capsules, observation.velocities)
    ]
    return HumanObservation(capsules=capsules, velocities=list(observation.velocities))


def check_time(T_virt: float, T_rem: float, gamma: float, T_r: float = 0.1) -> bool:
    """Warning predicate: the virtual clock exceeded gamma times the nominal
    remaining duration. Within one controller period of completion the
    comparison is moot (completion dominates), so it reports False there.
    """
    if T_rem <= T_r:
        return False
    return T_virt > gamma * T_rem


@dataclass
class RolloutState:
    traj: ParamTrajectory  # virtual copy, advanced independently of the real one
    q_dot: np.ndarray  # virtual tracked joint velocity
    observation: HumanObservation  # human snapshot at the rollout anchor
    T_virt: float = 0.0  # virtual time since the anchor
    T_rem: float = 0.0  # nominal remaining duration at the anchor
    steps: int = 0
    completed: bool = False
    triggered: bool = False
    alpha_trace: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class PredictorOutcome:
    triggered: bool
    T_virt: float
    T_rem: float
    alpha_trace: list[tuple[float, float]]
    completed: bool
    exhausted: bool = False


def start_rollout(
    traj: ParamTrajectory, q_dot: np.ndarray, observation: HumanObservation
) -> RolloutState:
    return RolloutState(
        traj=traj.copy(),
        q_dot=np.asarray(q_dot, dtype=float).copy(),
        observation=observation,
        T_rem=remaining_duration(traj),
    )


def step_rollout(
    state: RolloutState,
    chain: KinematicChain,
    iso: IsoParams,
    limits: JointLimits,
    config: PredictorConfig,
) -> None:
    """One virtual controller period; updates the rollout flags in place."""
    s = state.traj.s_current
    q, dq_ds = eval_path(state.traj.path, s)
    s_dot = state.traj.profile.s_dot(state.traj.path, s)
    qp_dot = dq_ds * s_dot
    predicted = predict_human(state.observation, config.human_predictor, state.T_virt)
    sep = separation_state(
        chain, q, state.q_dot, predicted.capsules, predicted.velocities
    )
    rows = scaling_rows(sep, iso, qp_dot)
    result = solve_scaling(rows, qp_dot, state.q_dot, limits, iso.T_r)
    state.alpha_trace.append((s, result.alpha))
    done = advance(state.traj, result.alpha, iso.T_r)
    state.q_dot = qp_dot * result.alpha
    state.T_virt += iso.T_r
    state.steps += 1
    if done:
        state.completed = True
    elif check_time(state.T_virt, state.T_rem, config.gamma, iso.T_r):
        state.triggered = True


def run_rollout(
    traj: ParamTrajectory,
    chain: KinematicChain,
    iso: IsoParams,
    observation: HumanObservation,
    config: PredictorConfig,
    q_dot: np.ndarray | None = None,
) -> PredictorOutcome:
    """Roll the virtual robot to a verdict: completion, a trigger, or the
    max_rollout_steps budget (flagged exhausted)."""
    if q_dot is None:
        q_dot = np.zeros(chain.n_joints)
    limits = JointLimits.from_chain(chain)
    state = start_rollout(traj, q_dot, observation)
    exhausted = False
    while not (state.completed or state.triggered):
        if state.steps >= config.max_rollout_steps:
            exhausted = True
            break
        step_rollout(state, chain, iso, limits, config)
    return PredictorOutcome(
        triggered=state.triggered,
        T_virt=state.T_virt,
        T_rem=state.T_rem,
        alpha_trace=state.alpha_trace,
        completed=state.completed,
        exhausted=exhausted,
    )


class PredictiveSimulator:
    """Budgeted incremental supervision with a per-trajectory warning latch."""

    def __init__(
        self,
        chain: KinematicChain,
        iso: IsoParams,
        limits: JointLimits,
        config: PredictorConfig | None = None,
    ) -> None:
        self.chain = chain
        self.iso = iso
        self.limits = limits
        self.config = config or PredictorConfig()
        self.rollout: RolloutState | None = None
        self.warned = False

    def reset(self) -> None:
        """New trajectory: clear the rollout and re-arm the warning."""
        self.rollout = None
        self.warned = False

    def supervise(
        self,
        traj: ParamTrajectory,
        q_dot_real: np.ndarray,
        observation: HumanObservation,
    ) -> PredictorOutcome | None:
        """Spend this tick's virtual-step budget on the rollout.

        Returns the rollout status after the budget, with triggered set
        only on the tick the warning latches; None when there is nothing
        to supervise (predictor disabled, or trajectory finished).
        """
        if not self.config.enabled:
            return None
        warned_now = False
        for _ in range(self.config.rollout_rate_multiplier):
            if self.rollout is None or self.rollout.completed:
                if traj.s_current >= 1.0:
                    break
                self.rollout = start_rollout(traj, q_dot_real, observation)
            state = self.rollout
            if state.steps >= self.config.max_rollout_steps:
                break
            step_rollout(state, self.chain, self.iso, self.limits, self.config)
            if state.triggered:
                if not self.warned:
                    self.warned = True
                    warned_now = True
                # The rollout served its purpose; a fresh one starts from the
                # next real state.
                self.rollout = None
                break
            if state.completed:
                # Restart only on a later tick, from fresher real state.
                break
        if self.rollout is None and not warned_now:
            return None
        if warned_now:
            # Report the trigger even though the rollout was retired.
            return PredictorOutcome(
                triggered=True,
                T_virt=state.T_virt,
                T_rem=state.T_rem,
                alpha_trace=state.alpha_trace,
                completed=False,
            )
        state = self.rollout
        return PredictorOutcome(
            triggered=False,
            T_virt=state.T_virt,
            T_rem=state.T_rem,
            alpha_trace=state.alpha_trace,
            completed=state.completed,
        )
