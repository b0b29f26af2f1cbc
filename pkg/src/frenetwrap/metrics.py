"""Evaluation metrics: displacement errors, off-road probability, miss rate,
and endpoint diversity.

The road extent is approximated as the union of lane corridors: each
centerline buffered by half the lane width, with a small longitudinal
tolerance at the corridor ends so endpoint rounding is not penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import build_polyline, project_points

END_OVERSHOOT_TOLERANCE = 0.5
MISS_DISTANCE = 2.0


@dataclass
class RoadCorridor:
    """Cached lane polylines for repeated off-road queries on one scene."""

    lanes: tuple

    def __post_init__(self):
        self._polys = [(build_polyline(l.points), l.width / 2.0)
                       for l in self.lanes]

    def waypoints_on_road(self, waypoints: np.ndarray) -> np.ndarray:
        """Per-waypoint boolean: inside at least one lane corridor."""
        on = np.zeros(len(waypoints), dtype=bool)
        for poly, half_width in self._polys:
            _, d, over = project_points(poly, waypoints)
            on |= (np.abs(d) <= half_width) & (over <= END_OVERSHOOT_TOLERANCE)
        return on


def off_road(trajectory, lanes_or_corridor) -> bool:
    """True iff any waypoint leaves every lane corridor (or the map ends)."""
    corridor = (lanes_or_corridor if isinstance(lanes_or_corridor, RoadCorridor)
                else RoadCorridor(tuple(lanes_or_corridor)))
    if not corridor.lanes:
        return True
    return not bool(np.all(corridor.waypoints_on_road(trajectory.waypoints)))


def orp(prediction_set, lanes_or_corridor) -> float:
    """Cumulative probability of trajectories with any off-road waypoint."""
    probs = prediction_set.probs
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {total:.8f}, not normalized")
    corridor = (lanes_or_corridor if isinstance(lanes_or_corridor, RoadCorridor)
                else RoadCorridor(tuple(lanes_or_corridor)))
    return float(sum(p for t, p in zip(prediction_set.trajectories, probs)
                     if off_road(t, corridor)))


def _displacements(prediction_set, gt: np.ndarray) -> np.ndarray:
    gt = np.asarray(gt, dtype=float)
    out = []
    for t in prediction_set.trajectories:
        if t.waypoints.shape != gt.shape:
            raise ValueError(
                f"waypoint count mismatch: {t.waypoints.shape} vs {gt.shape}")
        out.append(np.linalg.norm(t.waypoints - gt, axis=1))
    return np.stack(out)


def min_ade(prediction_set, gt) -> float:
    """Minimum over trajectories of the mean distance to the ground truth."""
    return float(_displacements(prediction_set, gt).mean(axis=1).min())


def min_fde(prediction_set, gt) -> float:
    """Minimum over trajectories of the final-point distance to the ground truth."""
    return float(_displacements(prediction_set, gt)[:, -1].min())


def mr1(prediction_set, gt) -> int:
    """1 iff the top-probability endpoint is more than 2 m from the gt endpoint.

    Ties on the maximum probability go to the first trajectory.
    """
    if not prediction_set.trajectories:
        raise ValueError("empty prediction set")
    top = int(np.argmax(prediction_set.probs))
    gap = float(np.linalg.norm(
        prediction_set.trajectories[top].endpoint - np.asarray(gt, dtype=float)[-1]))
    return int(gap > MISS_DISTANCE)


def mied(prediction_set) -> float:
    """Mean distance of all predicted endpoints to their centroid (unweighted)."""
    endpoints = prediction_set.endpoints
    centroid = endpoints.mean(axis=0)
    return float(np.linalg.norm(endpoints - centroid, axis=1).mean())


def evaluate_scene(prediction_set, gt, lanes, **extra) -> dict:
    """All per-scene metrics as one report row."""
    corridor = RoadCorridor(tuple(lanes))
    row = {
        "min_ade": min_ade(prediction_set, gt),
        "min_fde": min_fde(prediction_set, gt),
        "orp": orp(prediction_set, corridor),
        "mr1": mr1(prediction_set, gt),
        "mied": mied(prediction_set),
    }
    row.update(extra)
    return row


METRIC_KEYS = ("min_ade", "min_fde", "orp", "mr1", "mied")


def aggregate_rows(rows) -> dict:
    """Corpus aggregate: arithmetic mean per metric (MR1 becomes a rate)."""
    if not rows:
        raise ValueError("no rows to aggregate")
    agg = {key: float(np.mean([r[key] for r in rows])) for key in METRIC_KEYS}
    agg["orp_percent"] = 100.0 * agg["orp"]
    agg["n_scenes"] = len(rows)
    return agg
