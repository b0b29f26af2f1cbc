"""Scene domain model: agents, lane graphs, trajectories and the scenario file format.

A scene is a snapshot of a traffic situation around one target vehicle (TV):
fixed-rate state histories for every agent, a lane graph, and optionally the
TV's ground-truth future positions.  Scenes are plain immutable values; all
I/O goes through :func:`load_scene` / :func:`save_scene`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

# Fixed timing conventions.  dt and the horizon lengths are carried in the
# file format, but every bundled fixture and generator uses these defaults.
DT = 0.1
HISTORY_STEPS = 20          # past steps; a history has HISTORY_STEPS + 1 states
FUTURE_STEPS = 30           # 3 s future at 10 Hz

# Column layout of an agent state row, matching the on-disk order.
T, X, Y, HEADING, SPEED, YAW_RATE, ACCEL = range(7)
STATE_DIM = 7

DEFAULT_LANE_WIDTH = 3.7
MIN_POINT_SPACING = 0.01


class SceneError(Exception):
    """Base error for scene loading and validation."""


class SceneFormatError(SceneError):
    """The file is not a well-formed scenario document."""


class SceneValidationError(SceneError):
    """A structurally valid document violates a scene invariant."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def wrap_angle(theta):
    """Normalize an angle (or array of angles) to the interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class FrameTag:
    """Which coordinate frame a scene's positions live in.

    ``cartesian`` scenes store (x, y, heading); ``frenet`` scenes store
    (s, d, relative heading) w.r.t. the centerline sequence with index
    ``centerline_index``, and lane poses carry curvature instead of heading.
    """

    tag: str = "cartesian"
    centerline_index: Optional[int] = None

    def __post_init__(self):
        if self.tag not in ("cartesian", "frenet"):
            raise ValueError(f"unknown frame tag {self.tag!r}")

    @property
    def is_frenet(self) -> bool:
        return self.tag == "frenet"


CARTESIAN = FrameTag("cartesian")


@dataclass(frozen=True)
class AgentHistory:
    """Timestamped state history of one agent.

    ``states`` is an (n, 7) float array with columns [t, x, y, heading,
    speed, yaw_rate, accel].  Rows are ordered by strictly increasing t at a
    uniform step; the last row is the current state (t = 0).
    """

    agent_id: str
    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        if self.states.ndim != 2 or self.states.shape[1] != STATE_DIM:
            raise ValueError(f"agent {self.agent_id}: states must be (n, {STATE_DIM})")
        self.states.setflags(write=False)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, X:Y + 1]

    @property
    def current(self) -> np.ndarray:
        """The most recent state row (t = 0)."""
        return self.states[-1]


@dataclass(frozen=True)
class Lane:
    """One lane of the graph: a centerline polyline plus connectivity.

    ``centerline`` is an (m, 3) array.  In a Cartesian scene the third
    column is the tangent heading at each pose; in a Frenet scene it holds
    the reference-line curvature instead (never a heading).
    """

    lane_id: str
    centerline: np.ndarray
    width: float = DEFAULT_LANE_WIDTH
    successors: tuple = ()
    predecessors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "centerline", np.asarray(self.centerline, dtype=float))
        object.__setattr__(self, "successors", tuple(self.successors))
        object.__setattr__(self, "predecessors", tuple(self.predecessors))
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 3:
            raise ValueError(f"lane {self.lane_id}: centerline must be (m, 3)")
        self.centerline.setflags(write=False)

    @property
    def points(self) -> np.ndarray:
        return self.centerline[:, :2]


@dataclass(frozen=True)
class Trajectory:
    """One predicted future: FUTURE_STEPS positions plus a probability."""

    waypoints: np.ndarray
    probability: float = 0.0
    source_centerline: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "waypoints", np.asarray(self.waypoints, dtype=float))
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 2:
            raise ValueError("waypoints must be (n, 2)")
        self.waypoints.setflags(write=False)

    @property
    def endpoint(self) -> np.ndarray:
        return self.waypoints[-1]


@dataclass(frozen=True)
class Scene:
    """A full scenario around one target vehicle."""

    scene_id: str
    agents: tuple
    lanes: tuple
    tv_id: str
    dt: float = DT
    gt_future: Optional[np.ndarray] = None
    frame: FrameTag = field(default_factory=FrameTag)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "lanes", tuple(self.lanes))
        if self.gt_future is not None:
            gt = np.asarray(self.gt_future, dtype=float)
            gt.setflags(write=False)
            object.__setattr__(self, "gt_future", gt)

    def agent(self, agent_id: str) -> AgentHistory:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    @property
    def tv(self) -> AgentHistory:
        return self.agent(self.tv_id)

    def lane(self, lane_id: str) -> Lane:
        for l in self.lanes:
            if l.lane_id == lane_id:
                return l
        raise KeyError(lane_id)

    def with_frame(self, frame: FrameTag) -> "Scene":
        return replace(self, frame=frame)


def validate_scene(scene: Scene) -> list:
    """Check every scene invariant; returns a list of human-readable violations.

    An empty list means the scene is valid.  Violations are data, not errors.
    """
    bad = []
    ids = [a.agent_id for a in scene.agents]
    if len(set(ids)) != len(ids):
        bad.append("duplicate agent ids")
    if scene.tv_id not in ids:
        bad.append(f"tv_id {scene.tv_id!r} not among agents")
    if not (scene.dt > 0):
        bad.append("dt must be positive")

    for a in scene.agents:
        st = a.states
        if st.shape[0] < 1:
            bad.append(f"agent {a.agent_id}: empty history")
            continue
        if not np.all(np.isfinite(st)):
            bad.append(f"agent {a.agent_id}: non-finite state values")
            continue
        t = st[:, T]
        dts = np.diff(t)
        if st.shape[0] != HISTORY_STEPS + 1:
            bad.append(
                f"agent {a.agent_id}: history has {st.shape[0]} states, "
                f"expected {HISTORY_STEPS + 1}"
            )
        if np.any(dts <= 0):
            bad.append(f"agent {a.agent_id}: timestamps not strictly increasing")
        elif np.any(np.abs(dts - scene.dt) > 1e-6):
            bad.append(f"agent {a.agent_id}: non-uniform dt")
        if abs(t[-1]) > 1e-9:
            bad.append(f"agent {a.agent_id}: last state must be current (t=0)")
        if not scene.frame.is_frenet:
            h = st[:, HEADING]
            if np.any((h <= -np.pi - 1e-12) | (h > np.pi + 1e-12)):
                bad.append(f"agent {a.agent_id}: heading outside (-pi, pi]")
        if np.any(st[:, SPEED] < 0):
            bad.append(f"agent {a.agent_id}: negative speed")

    lane_ids = [l.lane_id for l in scene.lanes]
    if len(set(lane_ids)) != len(lane_ids):
        bad.append("duplicate lane ids")
    known = set(lane_ids)
    for l in scene.lanes:
        if l.centerline.shape[0] < 2:
            bad.append(f"lane {l.lane_id}: fewer than 2 centerline points")
            continue
        if not np.all(np.isfinite(l.centerline)):
            bad.append(f"lane {l.lane_id}: non-finite centerline values")
            continue
        gaps = np.linalg.norm(np.diff(l.points, axis=0), axis=1)
        if np.any(gaps < MIN_POINT_SPACING):
            bad.append(f"lane {l.lane_id}: consecutive centerline points closer than "
                       f"{MIN_POINT_SPACING} m")
        if not (l.width > 0):
            bad.append(f"lane {l.lane_id}: non-positive width")
        for s in l.successors:
            if s in known and l.lane_id not in scene.lane(s).predecessors:
                bad.append(f"lane {l.lane_id}: successor {s} lacks back-reference")
        for p in l.predecessors:
            if p in known and l.lane_id not in scene.lane(p).successors:
                bad.append(f"lane {l.lane_id}: predecessor {p} lacks back-reference")

    if scene.gt_future is not None:
        gt = scene.gt_future
        if gt.ndim != 2 or gt.shape != (FUTURE_STEPS, 2):
            bad.append(f"gt_future must be ({FUTURE_STEPS}, 2), got {gt.shape}")
        elif not np.all(np.isfinite(gt)):
            bad.append("gt_future has non-finite values")

    if scene.frame.is_frenet and scene.frame.centerline_index is None:
        bad.append("frenet frame without centerline_index")
    return bad


def scene_to_dict(scene: Scene) -> dict:
    """Scene -> plain-JSON dict following the scenario schema."""
    frame = {"tag": scene.frame.tag}
    if scene.frame.centerline_index is not None:
        frame["centerline_index"] = scene.frame.centerline_index
    doc = {
        "scene_id": scene.scene_id,
        "dt": scene.dt,
        "tv_id": scene.tv_id,
        "frame": frame,
        "agents": [
            {"id": a.agent_id, "states": a.states.tolist()} for a in scene.agents
        ],
        "lanes": [
            {
                "id": l.lane_id,
                "width": l.width,
                "centerline": l.centerline.tolist(),
                "successors": list(l.successors),
                "predecessors": list(l.predecessors),
            }
            for l in scene.lanes
        ],
    }
    if scene.gt_future is not None:
        doc["gt_future"] = scene.gt_future.tolist()
    return doc


def scene_from_dict(doc: dict) -> Scene:
    """Plain-JSON dict -> Scene.  Raises SceneFormatError on shape problems."""
    try:
        frame_doc = doc.get("frame", {"tag": "cartesian"})
        frame = FrameTag(frame_doc.get("tag", "cartesian"),
                         frame_doc.get("centerline_index"))
        agents = tuple(
            AgentHistory(str(a["id"]), np.asarray(a["states"], dtype=float))
            for a in doc["agents"]
        )
        lanes = tuple(
            Lane(
                str(l["id"]),
                np.asarray(l["centerline"], dtype=float),
                float(l.get("width", DEFAULT_LANE_WIDTH)),
                tuple(str(s) for s in l.get("successors", ())),
                tuple(str(p) for p in l.get("predecessors", ())),
            )
            for l in doc["lanes"]
        )
        gt = doc.get("gt_future")
        return Scene(
            scene_id=str(doc["scene_id"]),
            dt=float(doc.get("dt", DT)),
            tv_id=str(doc["tv_id"]),
            frame=frame,
            agents=agents,
            lanes=lanes,
            gt_future=None if gt is None else np.asarray(gt, dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed scenario document: {exc}") from exc


def load_scene(path) -> Scene:
    """Read and validate one scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: not valid JSON: {exc}") from exc
    scene = scene_from_dict(doc)
    violations = validate_scene(scene)
    if violations:
        raise SceneValidationError([f"{path}: {v}" for v in violations])
    return scene


def save_scene(scene: Scene, path) -> None:
    """Write one scenario file with full double precision."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh)
        fh.write("\n")


def heading_from_points(points: np.ndarray) -> np.ndarray:
    """Per-point headings of a polyline from finite differences.

    Interior points use the central difference, endpoints their single
    neighbouring segment.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 2:
        raise ValueError("need at least 2 points")
    d = np.empty((n, 2))
    d[1:-1] = points[2:] - points[:-2]
    d[0] = points[1] - points[0]
    d[-1] = points[-1] - points[-2]
    return np.arctan2(d[:, 1], d[:, 0])
