"""Polyline geometry and curvilinear (Frenet) coordinate transforms.

A reference path is an arc-length parameterized polyline.  Points map into
its frame as (s, d): s is progress along the path, d the signed lateral
offset with d > 0 to the LEFT of the travel direction.  Beyond either
endpoint, s is clamped and the lateral offset is measured against the
extended end tangent; the longitudinal excess is reported as overshoot.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .scene import (
    HEADING, SPEED, X, Y,
    AgentHistory, FrameTag, Lane, Scene, heading_from_points, wrap_angle,
)

DEFAULT_RESAMPLE_STEP = 0.5


class DegenerateInputError(ValueError):
    """Raised when a polyline cannot be built from the given points."""


class FrenetPoint(NamedTuple):
    s: float
    d: float


@dataclass(frozen=True)
class ParamPolyline:
    """Arc-length parameterized polyline with cached segment data."""

    points: np.ndarray            # (n, 2)
    cum_arclength: np.ndarray     # (n,), starts at 0, strictly increasing
    segment_tangents: np.ndarray  # (n-1, 2) unit vectors
    segment_lengths: np.ndarray   # (n-1,)
    resample_step: float

    @property
    def length(self) -> float:
        return float(self.cum_arclength[-1])


def build_polyline(points, resample_step: float = DEFAULT_RESAMPLE_STEP) -> ParamPolyline:
    """Build a ParamPolyline, deduplicating repeats and resampling long segments.

    Each original segment longer than ``resample_step`` is subdivided into
    equal pieces, so vertex positions and the total length are preserved
    exactly while the spacing never exceeds the step.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInputError("points must be an (n, 2) array")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInputError("non-finite input point")
    if len(pts) >= 2:
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-12
        pts = pts[keep]
    if len(pts) < 2:
        raise DegenerateInputError("need at least 2 distinct points")
    if not (resample_step > 0):
        raise DegenerateInputError("resample_step must be positive")

    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    out = [pts[0]]
    for i, L in enumerate(seg_len):
        n_sub = max(1, int(np.ceil(L / resample_step - 1e-12)))
        for k in range(1, n_sub):
            out.append(pts[i] + (k / n_sub) * (pts[i + 1] - pts[i]))
        out.append(pts[i + 1])
    p = np.asarray(out)

    d = np.diff(p, axis=0)
    lengths = np.linalg.norm(d, axis=1)
    tangents = d / lengths[:, None]
    cum = np.concatenate(([0.0], np.cumsum(lengths)))
    for arr in (p, cum, tangents, lengths):
        arr.setflags(write=False)
    return ParamPolyline(p, cum, tangents, lengths, float(resample_step))


def project_points(poly: ParamPolyline, points) -> tuple:
    """Project many points at once; returns (s, d, overshoot) arrays.

    For each point the globally nearest polyline location wins, ties across
    segments resolved towards the smallest s.  d is signed, positive left of
    the travel direction.  Points beyond either endpoint get s clamped to
    [0, L], d measured against the extended end tangent, and the
    longitudinal excess reported in overshoot.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = poly.points[:-1]                       # (S, 2)
    u = poly.segment_tangents                  # (S, 2)
    seg_len = poly.segment_lengths             # (S,)

    w = pts[:, None, :] - a[None, :, :]        # (P, S, 2)
    t_raw = w[..., 0] * u[:, 0] + w[..., 1] * u[:, 1]
    t = np.clip(t_raw, 0.0, seg_len)
    closest = a[None, :, :] + t[..., None] * u[None, :, :]
    diff = pts[:, None, :] - closest
    d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    i = np.argmin(d2, axis=1)                  # first minimum -> smallest s
    rows = np.arange(len(pts))

    ti = t[rows, i]
    s = poly.cum_arclength[i] + ti
    ui = u[i]
    cross = ui[:, 0] * diff[rows, i, 1] - ui[:, 1] * diff[rows, i, 0]
    d = np.where(np.abs(cross) > 0, np.copysign(np.sqrt(d2[rows, i]), cross), 0.0)
    overshoot = np.zeros(len(pts))

    # Before the start: lateral vs the extended first tangent.
    first = (i == 0) & (t_raw[:, 0] < 0.0)
    if np.any(first):
        w0 = pts[first] - poly.points[0]
        u0 = poly.segment_tangents[0]
        overshoot[first] = -(w0 @ u0)
        d[first] = u0[0] * w0[:, 1] - u0[1] * w0[:, 0]
        s[first] = 0.0
    # Past the end: lateral vs the extended last tangent.
    last_i = len(seg_len) - 1
    last = (i == last_i) & (t_raw[:, -1] > seg_len[-1])
    if np.any(last):
        wl = pts[last] - poly.points[-1]
        ul = poly.segment_tangents[-1]
        overshoot[last] = wl @ ul
        d[last] = ul[0] * wl[:, 1] - ul[1] * wl[:, 0]
        s[last] = poly.length
    return s, d, overshoot


def project(poly: ParamPolyline, point) -> tuple:
    """Project one point; returns (FrenetPoint, overshoot)."""
    s, d, over = project_points(poly, np.asarray(point, dtype=float)[None, :])
    return FrenetPoint(float(s[0]), float(d[0])), float(over[0])


def _segment_index(poly: ParamPolyline, s: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(poly.cum_arclength, s, side="right") - 1
    return np.clip(idx, 0, len(poly.segment_lengths) - 1)


def to_cartesian_points(poly: ParamPolyline, s, d) -> np.ndarray:
    """Map (s, d) arrays back to Cartesian points.

    s outside [0, length] extrapolates along the corresponding end tangent
    (flagged by the caller via s itself; not fatal).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    idx = _segment_index(poly, s)
    u = poly.segment_tangents[idx]
    base = poly.points[:-1][idx] + (s - poly.cum_arclength[idx])[:, None] * u
    normal = np.stack([-u[:, 1], u[:, 0]], axis=1)
    return base + d[:, None] * normal


def to_cartesian(poly: ParamPolyline, fp: FrenetPoint) -> np.ndarray:
    """Map one FrenetPoint back to a Cartesian (x, y) point."""
    return to_cartesian_points(poly, [fp.s], [fp.d])[0]


def tangent_heading(poly: ParamPolyline, s) -> np.ndarray:
    """Tangent heading (radians) of the segment containing each arc-length."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u = poly.segment_tangents[_segment_index(poly, s)]
    return np.arctan2(u[:, 1], u[:, 0])


def curvature_profile(poly: ParamPolyline) -> np.ndarray:
    """Signed per-point curvature (1/m), positive when turning left.

    Uses the circle circumscribed through each point and its two neighbours
    (Menger curvature with an orientation sign); endpoints copy their
    neighbour's value.  Exact for circles.
    """
    p = poly.points
    n = len(p)
    kappa = np.zeros(n)
    if n < 3:
        return kappa
    a = p[1:-1] - p[:-2]
    b = p[2:] - p[1:-1]
    c = p[2:] - p[:-2]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
             * np.linalg.norm(c, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa[1:-1] = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    return kappa


def curvature_at(poly: ParamPolyline, s) -> np.ndarray:
    """Curvature linearly interpolated at the given arc-lengths."""
    prof = curvature_profile(poly)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.interp(s, poly.cum_arclength, prof)


def path_curvature_max(points) -> float:
    """Largest |curvature| of a vertex path, by three-point circumcircles.

    Operates on the vertices as given (no resampling): for points sampled
    from a circle this recovers 1/R exactly, whereas measuring on a
    subdivided polyline would concentrate each vertex turn into a short
    chord and overestimate.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 3:
        return 0.0
    a = points[1:-1] - points[:-2]
    b = points[2:] - points[1:-1]
    c = points[2:] - points[:-2]
    denom = (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
             * np.linalg.norm(c, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(denom > 1e-12,
                         np.abs(2.0 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) / denom,
                         0.0)
    return float(np.max(kappa))


def sample_path(vertices: np.ndarray, arclengths) -> tuple:
    """Positions and tangent headings at given arc-lengths along a vertex path.

    Arc-lengths are clamped to the path extent; headings come from the
    containing segment.
    """
    vertices = np.asarray(vertices, dtype=float)
    chord = np.concatenate(([0.0], np.cumsum(
        np.linalg.norm(np.diff(vertices, axis=0), axis=1))))
    s = np.clip(np.atleast_1d(np.asarray(arclengths, dtype=float)), 0.0, chord[-1])
    x = np.interp(s, chord, vertices[:, 0])
    y = np.interp(s, chord, vertices[:, 1])
    seg = np.clip(np.searchsorted(chord, s, side="right") - 1, 0, len(vertices) - 2)
    d = vertices[seg + 1] - vertices[seg]
    return np.stack([x, y], axis=1), np.arctan2(d[:, 1], d[:, 0])


@dataclass(frozen=True)
class FrenetScene:
    """A Scene re-expressed in one reference polyline's (s, d) frame.

    The wrapped scene stores s relative to the TV's current position
    (TV at s = 0); ``s_origin`` is the TV's absolute arc-length on the
    reference, needed to undo the shift.
    """

    scene: Scene
    reference: ParamPolyline
    s_origin: float
    centerline_index: int


def _states_to_frenet(states: np.ndarray, poly: ParamPolyline, s0: float) -> np.ndarray:
    out = states.copy()
    s, d, _ = project_points(poly, states[:, X:Y + 1])
    out[:, X] = s - s0
    out[:, Y] = d
    out[:, HEADING] = wrap_angle(states[:, HEADING] - tangent_heading(poly, s))
    return out


def scene_to_frenet(scene: Scene, reference: ParamPolyline,
                    centerline_index: int = 0) -> FrenetScene:
    """Transform a Cartesian scene into the frame of one reference polyline.

    Agent positions become (s - s_TV, d), headings become offsets from the
    local tangent, lane poses get the reference curvature as their third
    channel, and speed / yaw rate / acceleration are copied unchanged.
    """
    if scene.frame.is_frenet:
        raise ValueError("scene is already in a Frenet frame")
    if reference.length <= 0:
        raise DegenerateInputError("degenerate reference polyline")
    tv_pos = scene.tv.current[X:Y + 1]
    (s_tv, _), _ = project(reference, tv_pos)

    kappa = curvature_profile(reference)
    agents = tuple(
        replace(a, states=_states_to_frenet(a.states, reference, s_tv))
        for a in scene.agents
    )
    lanes = []
    for lane in scene.lanes:
        s, d, _ = project_points(reference, lane.points)
        cl = np.stack(
            [s - s_tv, d, np.interp(s, reference.cum_arclength, kappa)], axis=1)
        lanes.append(replace(lane, centerline=cl))
    gt = None
    if scene.gt_future is not None:
        s, d, _ = project_points(reference, scene.gt_future)
        gt = np.stack([s - s_tv, d], axis=1)

    out = replace(
        scene,
        agents=agents,
        lanes=tuple(lanes),
        gt_future=gt,
        frame=FrameTag("frenet", centerline_index),
    )
    return FrenetScene(out, reference, float(s_tv), centerline_index)


def _states_to_cartesian(states: np.ndarray, poly: ParamPolyline, s0: float) -> np.ndarray:
    out = states.copy()
    s_abs = states[:, X] + s0
    out[:, X:Y + 1] = to_cartesian_points(poly, s_abs, states[:, Y])
    out[:, HEADING] = wrap_angle(states[:, HEADING] + tangent_heading(poly, s_abs))
    return out


def scene_to_cartesian(fscene: FrenetScene) -> Scene:
    """Invert :func:`scene_to_frenet`.

    Exact (within float noise) wherever |d| stays below the local radius of
    curvature of the reference; larger offsets are reported via a warning.
    Lane-pose headings are re-derived from the reconstructed points.
    """
    if fscene.reference is None:
        raise ValueError("missing reference polyline")
    scene = fscene.scene
    poly = fscene.reference
    s0 = fscene.s_origin

    kappa = curvature_profile(poly)
    k_at = lambda s: np.interp(s, poly.cum_arclength, kappa)

    def check_radius(s_abs, d, what):
        bad = np.abs(d * k_at(s_abs)) >= 1.0
        if np.any(bad):
            warnings.warn(
                f"{what}: {int(bad.sum())} point(s) with |d| beyond the local "
                "radius of curvature; round-trip not guaranteed",
                stacklevel=3,
            )

    agents = []
    for a in scene.agents:
        check_radius(a.states[:, X] + s0, a.states[:, Y], f"agent {a.agent_id}")
        agents.append(replace(a, states=_states_to_cartesian(a.states, poly, s0)))

    lanes = []
    for lane in scene.lanes:
        s_abs = lane.centerline[:, 0] + s0
        d = lane.centerline[:, 1]
        check_radius(s_abs, d, f"lane {lane.lane_id}")
        pts = to_cartesian_points(poly, s_abs, d)
        cl = np.column_stack([pts, heading_from_points(pts)])
        lanes.append(replace(lane, centerline=cl))

    gt = None
    if scene.gt_future is not None:
        gt = to_cartesian_points(poly, scene.gt_future[:, 0] + s0,
                                 scene.gt_future[:, 1])

    return replace(
        scene,
        agents=tuple(agents),
        lanes=tuple(lanes),
        gt_future=gt,
        frame=FrameTag("cartesian"),
    )
