"""Dependency-free SVG rendering of scenes and predictions.

Styling convention: lane corridors light grey, centerlines green, agent
histories yellow (TV in orange), predictions blue, ground truth red.
Output is deterministic for identical input.
"""

from __future__ import annotations

import numpy as np

from .scene import Scene, X, Y

MARGIN = 10.0
TARGET_WIDTH = 800.0

STYLE = {
    "corridor": ("#d9d9d9", None),
    "centerline": (None, "#2ca02c"),
    "history": (None, "#e6c229"),
    "tv_history": (None, "#e07b00"),
    "prediction": (None, "#1f77b4"),
    "gt": (None, "#d62728"),
}


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _polyline(points, stroke, width, dash=None, opacity=None) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    if opacity is not None:
        extra += f' stroke-opacity="{opacity}"'
    return (f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"{extra}/>')


def render_svg(scene: Scene, prediction_set=None) -> str:
    """Render one scene (and optionally its predictions) as an SVG string."""
    pts = [l.points for l in scene.lanes]
    pts += [a.positions for a in scene.agents]
    if scene.gt_future is not None:
        pts.append(scene.gt_future)
    if prediction_set is not None:
        pts += [t.waypoints for t in prediction_set.trajectories]
    allp = np.vstack(pts) if pts else np.zeros((1, 2))
    lo = allp.min(axis=0) - MARGIN
    hi = allp.max(axis=0) + MARGIN
    span = np.maximum(hi - lo, 1e-6)
    scale = TARGET_WIDTH / span[0]
    height = span[1] * scale

    def tx(points):
        p = np.atleast_2d(points)
        # flip y so that "up" in the scene is up in the image
        return np.stack([(p[:, 0] - lo[0]) * scale,
                         (hi[1] - p[:, 1]) * scale], axis=1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{_fmt(TARGET_WIDTH)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(TARGET_WIDTH)} {_fmt(height)}">',
        f'<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<!-- scene {scene.scene_id} -->',
    ]
    for lane in scene.lanes:
        parts.append(_polyline(tx(lane.points), STYLE["corridor"][0],
                               lane.width * scale, opacity="0.8"))
    for lane in scene.lanes:
        parts.append(_polyline(tx(lane.points), STYLE["centerline"][1],
                               1.5, dash="6,4"))
    if prediction_set is not None:
        for traj in prediction_set.trajectories:
            parts.append(_polyline(tx(traj.waypoints), STYLE["prediction"][1], 1.5))
    for agent in scene.agents:
        key = "tv_history" if agent.agent_id == scene.tv_id else "history"
        parts.append(_polyline(tx(agent.positions), STYLE[key][1], 2.0))
    if scene.gt_future is not None:
        parts.append(_polyline(tx(scene.gt_future), STYLE["gt"][1], 2.0))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
