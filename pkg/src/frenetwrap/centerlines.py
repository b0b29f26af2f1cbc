"""Candidate reference-path enumeration over the lane graph.

Starting from the lane the target vehicle currently occupies, successor
lanes are chained depth-first until each branch extends at least
``AHEAD_HORIZON`` metres beyond the TV (or the graph ends), yielding one
candidate centerline sequence per leaf.  Sequences that share a long common
prefix are kept; duplicates are dealt with later at the trajectory level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ParamPolyline, build_polyline, project, project_points, tangent_heading
from .scene import HEADING, X, Y, Scene, wrap_angle

AHEAD_HORIZON = 110.0       # metres of reference kept ahead of the TV
BEHIND_MARGIN = 10.0        # metres kept behind, for history projection
MAX_JUNCTION_GAP = 0.5      # larger gaps terminate a branch
ORIENTATION_GATE = np.pi / 4


class NoAssignableLaneError(RuntimeError):
    """No lane passes the orientation gate for the target vehicle."""


class MissingGroundTruthError(RuntimeError):
    """The operation needs gt_future but the scene has none."""


@dataclass(frozen=True)
class CenterlineSequence:
    """One candidate reference path: traversed lanes plus its polyline.

    ``start_s_tv`` is the TV's projected arc-length on the polyline, i.e.
    the s value that maps to the TV's current position.
    """

    index: int
    lane_ids: tuple
    polyline: ParamPolyline
    start_s_tv: float


def assign_current_lane(scene: Scene, max_heading_offset: float = ORIENTATION_GATE) -> str:
    """Pick the TV's current lane.

    Among lanes whose tangent heading at the TV's projection differs from
    the TV heading by less than the gate, the one with smallest |d| wins;
    ties go to the smaller lane id.
    """
    if scene.frame.is_frenet:
        raise ValueError("expects a Cartesian scene")
    tv = scene.tv.current
    pos = tv[X:Y + 1]
    best_id, best_d = None, np.inf
    for lane in sorted(scene.lanes, key=lambda l: l.lane_id):
        poly = build_polyline(lane.points)
        (s, d), over = project(poly, pos)
        offset = abs(float(wrap_angle(tv[HEADING] - tangent_heading(poly, s)[0])))
        if offset >= max_heading_offset:
            continue
        # distance to the lane proper: overshoot means the TV is off its end
        dist = float(np.hypot(d, over))
        if dist < best_d:
            best_id, best_d = lane.lane_id, dist
    if best_id is None:
        raise NoAssignableLaneError(
            f"scene {scene.scene_id}: no lane within {max_heading_offset:.3f} rad "
            "of the TV heading"
        )
    return best_id


def _chain_points(prefix: np.ndarray, nxt: np.ndarray):
    """Concatenate a successor's points onto a chain; None if the gap is too big."""
    gap = float(np.linalg.norm(nxt[0] - prefix[-1]))
    if gap > MAX_JUNCTION_GAP:
        return None
    if gap < 1e-9:
        nxt = nxt[1:]
    return np.vstack([prefix, nxt])


def enumerate_sequences(scene: Scene, horizon: float = AHEAD_HORIZON,
                        behind: float = BEHIND_MARGIN) -> list:
    """All candidate centerline sequences for the TV, in deterministic order.

    Depth-first over successors (sorted by lane id), one sequence per leaf.
    A lane id may appear at most once per sequence; junction gaps above
    MAX_JUNCTION_GAP terminate the branch.
    """
    current_id = assign_current_lane(scene)
    lanes = {l.lane_id: l for l in scene.lanes}
    tv_pos = scene.tv.current[X:Y + 1]

    first = lanes[current_id].points
    (s_tv0, _), _ = project(build_polyline(first), tv_pos)

    leaves = []

    def ahead_length(points: np.ndarray) -> float:
        chord = np.concatenate(([0.0], np.cumsum(
            np.linalg.norm(np.diff(points, axis=0), axis=1))))
        return float(chord[-1]) - s_tv0

    def expand(points: np.ndarray, visited: tuple):
        if ahead_length(points) >= horizon:
            leaves.append((points, visited))
            return
        extended = False
        for succ in sorted(lanes[visited[-1]].successors):
            if succ not in lanes or succ in visited:
                continue
            chained = _chain_points(points, lanes[succ].points)
            if chained is None:
                continue
            extended = True
            expand(chained, visited + (succ,))
        if not extended:
            leaves.append((points, visited))

    expand(first, (current_id,))

    seqs = []
    for idx, (points, lane_ids) in enumerate(leaves):
        trimmed = _trim_ahead(points, s_tv0, horizon)
        trimmed = _trim_behind(trimmed, s_tv0, behind)
        poly = build_polyline(trimmed)
        (s_tv, _), _ = project(poly, tv_pos)
        seqs.append(CenterlineSequence(idx, lane_ids, poly, float(s_tv)))
    return seqs


def _trim_ahead(points: np.ndarray, s_tv: float, horizon: float) -> np.ndarray:
    """Cut chain points beyond ``horizon`` metres ahead of the TV projection."""
    cut = s_tv + horizon
    chord = np.concatenate(([0.0], np.cumsum(
        np.linalg.norm(np.diff(points, axis=0), axis=1))))
    if cut >= chord[-1]:
        return points
    j = int(np.searchsorted(chord, cut, side="left"))
    frac = (cut - chord[j - 1]) / (chord[j] - chord[j - 1])
    end = points[j - 1] + frac * (points[j] - points[j - 1])
    if np.linalg.norm(end - points[j - 1]) < 1e-9:
        return points[:j] if j >= 2 else points[:2]
    return np.vstack([points[:j], end])


def _trim_behind(points: np.ndarray, s_tv: float, behind: float) -> np.ndarray:
    """Drop chain points more than ``behind`` metres behind the TV projection."""
    cut = s_tv - behind
    if cut <= 0:
        return points
    chord = np.concatenate(([0.0], np.cumsum(
        np.linalg.norm(np.diff(points, axis=0), axis=1))))
    j = int(np.searchsorted(chord, cut, side="right"))
    if j >= len(points):
        return points[-2:]
    frac = (cut - chord[j - 1]) / (chord[j] - chord[j - 1])
    start = points[j - 1] + frac * (points[j] - points[j - 1])
    if np.linalg.norm(points[j] - start) < 1e-9:
        return points[j:] if len(points) - j >= 2 else points[j - 1:]
    return np.vstack([start, points[j:]])


def assign_gt_centerline(scene: Scene, seqs) -> int:
    """Index of the sequence with minimal mean |d| over the gt waypoints.

    This is the reference frame the ground truth is best explained by,
    used both for training labels and for the privileged prior.
    """
    if scene.gt_future is None:
        raise MissingGroundTruthError(f"scene {scene.scene_id} has no gt_future")
    if not seqs:
        raise ValueError("no centerline sequences given")
    costs = []
    for seq in seqs:
        _, d, _ = project_points(seq.polyline, scene.gt_future)
        costs.append(float(np.mean(np.abs(d))))
    return int(np.argmin(costs))
