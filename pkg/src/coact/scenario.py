"""Scenario files.

A scenario is a JSON document describing the robot, the monitoring
parameters, the task list, the scripted human, and the input events. The
loader validates eagerly and reports problems with the dotted path of the
offending field, so a bad file fails before any simulation state exists.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .engine import HumanScript, HumanWaypoint, Scenario
from .fusion import GESTURE_TOKENS, VOICE_TOKENS, ChannelEvent
from .geom import Capsule, CapsuleAttachment, Joint, KinematicChain
from .predictor import PredictorConfig
from .safety import IsoParams


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}" if path else key, "required field is missing")
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _vector(value, path: str, length: int | None = None) -> np.ndarray:
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ScenarioError(path, "expected a list of numbers")
    vec = np.asarray(value, dtype=float)
    if length is not None and vec.shape != (length,):
        raise ScenarioError(path, f"expected {length} entries, got {vec.shape[0]}")
    return vec


def _parse_chain(data: dict) -> KinematicChain:
    joints_data = _require(data, "joints", "robot")
    if not isinstance(joints_data, list) or not joints_data:
        raise ScenarioError("robot.joints", "expected a non-empty list")
    joints = []
    for i, jd in enumerate(joints_data):
        p = f"robot.joints[{i}]"
        axis = _vector(_require(jd, "axis", p), f"{p}.axis", 3)
        offset = _vector(_require(jd, "offset", p), f"{p}.offset", 3)
        try:
            joints.append(Joint(axis=axis, offset=offset))
        except ValueError as e:
            raise ScenarioError(p, str(e)) from None

    caps_data = _require(data, "capsules", "robot")
    if not isinstance(caps_data, list) or not caps_data:
        raise ScenarioError("robot.capsules", "expected a non-empty list")
    capsules = []
    for i, cd in enumerate(caps_data):
        p = f"robot.capsules[{i}]"
        link = _require(cd, "link", p)
        if not isinstance(link, int) or isinstance(link, bool):
            raise ScenarioError(f"{p}.link", "expected an integer link index")
        if not 0 <= link < len(joints):
            raise ScenarioError(f"{p}.link", f"link index out of range 0..{len(joints) - 1}")
        radius = _number(_require(cd, "radius", p), f"{p}.radius")
        if radius <= 0.0:
            raise ScenarioError(f"{p}.radius", "radius must be > 0")
        capsules.append(
            CapsuleAttachment(
                link=link,
                local_a=_vector(_require(cd, "a", p), f"{p}.a", 3),
                local_b=_vector(_require(cd, "b", p), f"{p}.b", 3),
                radius=radius,
            )
        )

    n = len(joints)
    bounds = {}
    for key in ("qd_min", "qd_max", "qdd_min", "qdd_max"):
        bounds[key] = _vector(_require(data, key, "robot"), f"robot.{key}", n)
    try:
        return KinematicChain(joints=joints, capsules=capsules, **bounds)
    except ValueError as e:
        raise ScenarioError("robot", str(e)) from None


def _parse_iso(data: dict) -> IsoParams:
    kwargs = {"a_max": _number(_require(data, "a_max", "iso"), "iso.a_max")}
    for key in ("T_r", "C", "Z_d", "Z_r"):
        if key in data:
            kwargs[key] = _number(data[key], f"iso.{key}")
    try:
        return IsoParams(**kwargs)
    except ValueError as e:
        raise ScenarioError("iso", str(e)) from None


def _parse_predictor(data: dict) -> PredictorConfig:
    kwargs = {}
    if "gamma" in data:
        kwargs["gamma"] = _number(data["gamma"], "predictor.gamma")
    if "rollout_rate_multiplier" in data:
        v = data["rollout_rate_multiplier"]
        if not isinstance(v, int) or isinstance(v, bool):
            raise ScenarioError("predictor.rollout_rate_multiplier", "expected an integer")
        kwargs["rollout_rate_multiplier"] = v
    try:
        return PredictorConfig(**kwargs)
    except ValueError as e:
        raise ScenarioError("predictor", str(e)) from None


def _parse_human(data: dict) -> HumanScript:
    wps_data = _require(data, "waypoints", "human")
    if not isinstance(wps_data, list) or not wps_data:
        raise ScenarioError("human.waypoints", "expected a non-empty list")
    waypoints = []
    for i, wd in enumerate(wps_data):
        p = f"human.waypoints[{i}]"
        waypoints.append(
            HumanWaypoint(
                t=_number(_require(wd, "t", p), f"{p}.t"),
                position=_vector(_require(wd, "position", p), f"{p}.position", 3),
            )
        )

    caps_data = _require(data, "capsules", "human")
    if not isinstance(caps_data, list) or not caps_data:
        raise ScenarioError("human.capsules", "expected a non-empty list")
    capsules = []
    for i, cd in enumerate(caps_data):
        p = f"human.capsules[{i}]"
        radius = _number(_require(cd, "radius", p), f"{p}.radius")
        if radius <= 0.0:
            raise ScenarioError(f"{p}.radius", "radius must be > 0")
        capsules.append(
            Capsule(
                a=_vector(_require(cd, "a", p), f"{p}.a", 3),
                b=_vector(_require(cd, "b", p), f"{p}.b", 3),
                radius=radius,
            )
        )

    kwargs = {}
    comply = data.get("comply")
    if comply is not None:
        if not isinstance(comply, dict):
            raise ScenarioError("human.comply", "expected an object")
        kwargs["comply_delay"] = _number(_require(comply, "delay", "human.comply"), "human.comply.delay")
        kwargs["comply_retreat"] = _number(
            _require(comply, "retreat", "human.comply"), "human.comply.retreat"
        )
        if "speed" in comply:
            kwargs["comply_speed"] = _number(comply["speed"], "human.comply.speed")
        if "direction" in comply:
            kwargs["retreat_direction"] = _vector(
                comply["direction"], "human.comply.direction", 3
            )
    try:
        return HumanScript(waypoints=waypoints, capsules=capsules, **kwargs)
    except ValueError as e:
        raise ScenarioError("human", str(e)) from None


def _parse_events(data: list) -> list[ChannelEvent]:
    events = []
    for i, ed in enumerate(data):
        p = f"channel_events[{i}]"
        channel = _require(ed, "channel", p)
        token = _require(ed, "token", p)
        if isinstance(token, str):
            table = {"voice": VOICE_TOKENS, "gesture": GESTURE_TOKENS}.get(channel)
            if table is None:
                raise ScenarioError(f"{p}.channel", f"unknown channel {channel!r}")
            if token not in table:
                raise ScenarioError(f"{p}.token", f"unknown {channel} token {token!r}")
            token = table[token]
        elif not isinstance(token, int) or isinstance(token, bool):
            raise ScenarioError(f"{p}.token", "expected a token id or name")
        try:
            events.append(
                ChannelEvent(
                    channel=channel,
                    token=token,
                    timestamp=_number(_require(ed, "t", p), f"{p}.t"),
                )
            )
        except ValueError as e:
            raise ScenarioError(p, str(e)) from None
    return events


def load_scenario(source: str | Path | dict) -> Scenario:
    """Build a Scenario from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        data = source
        name = data.get("name", "scenario")
    else:
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ScenarioError("$", f"cannot read {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ScenarioError("$", f"invalid JSON: {e}") from None
        name = data.get("name", path.stem)
    if not isinstance(data, dict):
        raise ScenarioError("$", "top level must be an object")

    chain = _parse_chain(_require(data, "robot", ""))
    iso = _parse_iso(_require(data, "iso", ""))
    predictor = _parse_predictor(data.get("predictor", {}))
    human = _parse_human(_require(data, "human", ""))

    tasks_data = _require(data, "tasks", "")
    if not isinstance(tasks_data, list) or not tasks_data:
        raise ScenarioError("tasks", "expected a non-empty list")
    tasks = []
    n = chain.n_joints
    for i, td in enumerate(tasks_data):
        p = f"tasks[{i}]"
        if not isinstance(td, list) or not td:
            raise ScenarioError(p, "expected a non-empty list of waypoints")
        tasks.append(np.array([_vector(w, f"{p}[{k}]", n) for k, w in enumerate(td)]))

    mode = data.get("mode", "predictive")
    if mode not in ("predictive", "baseline"):
        raise ScenarioError("mode", f"expected 'predictive' or 'baseline', got {mode!r}")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("seed", "expected an integer")

    kwargs = {}
    for key in ("timeout_s", "s_dot_cap", "eps_stop"):
        if key in data:
            kwargs[key] = _number(data[key], key)
            if kwargs[key] <= 0.0:
                raise ScenarioError(key, "must be > 0")

    component_targets = {}
    for key, value in data.get("component_targets", {}).items():
        component_targets[key] = _vector(value, f"component_targets.{key}", 3)
    pointed = data.get("pointed_target")
    if pointed is not None:
        pointed = _vector(pointed, "pointed_target", 3)

    try:
        return Scenario(
            name=name,
            chain=chain,
            iso=iso,
            predictor=predictor,
            tasks=tasks,
            human=human,
            mode=mode,
            seed=seed,
            channel_events=_parse_events(data.get("channel_events", [])),
            component_targets=component_targets,
            pointed_target=pointed,
            **kwargs,
        )
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError("$", str(e)) from None
