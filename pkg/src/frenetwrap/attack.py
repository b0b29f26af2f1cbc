"""Map-perturbation benchmark: inject turns ahead of the target vehicle.

All scene points (agent histories, lane centerlines, the TV's future)
beyond a fixed onset distance ahead of the TV are shifted laterally by one
of three offset profiles; the TV history and future are then slowed down
so the perturbed path stays below a lateral-acceleration budget.  Points at
or before the onset keep their original bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import path_curvature_max, sample_path
from .scene import (
    ACCEL, HEADING, SPEED, X, Y, YAW_RATE,
    Scene, heading_from_points, wrap_angle,
)

GRAVITY = 9.81
LATERAL_ACCEL_FRACTION = 0.7

FAMILIES = ("smooth", "double", "ripple")
DIRECTIONS = ("left", "right")

# Default shape parameters per family.
DEFAULTS = {
    "smooth": {"c": 0.008, "u_sat": 50.0},
    "double": {"amplitude": 10.0, "wavelength": 60.0},
    "ripple": {"amplitude": 3.0, "wavelength": 30.0},
}


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """One perturbation: family, direction, onset distance and shape params."""

    family: str
    direction: str
    b: float = 15.0
    c: Optional[float] = None            # smooth: quadratic coefficient (1/m)
    u_sat: Optional[float] = None        # smooth: end of the quadratic ramp (m)
    amplitude: Optional[float] = None    # double / ripple (m)
    wavelength: Optional[float] = None   # double / ripple (m)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise AttackError(f"unknown attack family {self.family!r}")
        if self.direction not in DIRECTIONS:
            raise AttackError(f"unknown direction {self.direction!r}")
        if not (self.b > 0):
            raise AttackError("onset distance b must be positive")
        for name in ("c", "u_sat", "amplitude", "wavelength"):
            if getattr(self, name) is None and name in DEFAULTS[self.family]:
                object.__setattr__(self, name, DEFAULTS[self.family][name])
        if self.family == "smooth":
            if not (self.c >= 0 and self.u_sat > 0):
                raise AttackError("smooth attack needs c >= 0 and u_sat > 0")
        else:
            if self.amplitude is None or self.amplitude < 0:
                raise AttackError(f"{self.family} attack needs amplitude >= 0")
            if not (self.wavelength and self.wavelength > 0):
                raise AttackError(f"{self.family} attack needs wavelength > 0")

    def to_dict(self) -> dict:
        out = {"family": self.family, "direction": self.direction, "b": self.b}
        for name in DEFAULTS[self.family]:
            out[name] = getattr(self, name)
        return out


@dataclass(frozen=True)
class PerturbedScene:
    scene: Scene
    speed_scale: float
    spec: AttackSpec


def lateral_offset(spec: AttackSpec, u) -> np.ndarray:
    """Lateral shift (m) as a function of distance u past the onset.

    smooth: quadratic bend saturating into its tangent line at u_sat;
    double: one raised-cosine excursion out and back over one wavelength;
    ripple: a periodic sinusoid.  Zero for u <= 0.
    """
    u = np.asarray(u, dtype=float)
    sigma = 1.0 if spec.direction == "left" else -1.0
    if spec.family == "smooth":
        ramp = spec.c * np.minimum(u, spec.u_sat) ** 2
        linear = 2.0 * spec.c * spec.u_sat * np.maximum(u - spec.u_sat, 0.0)
        g = ramp + linear
    elif spec.family == "double":
        lam = spec.wavelength
        g = np.where(u < lam,
                     spec.amplitude * (1.0 - np.cos(2.0 * np.pi * np.minimum(u, lam) / lam)) / 2.0,
                     0.0)
    else:  # ripple
        g = spec.amplitude * np.sin(2.0 * np.pi * u / spec.wavelength)
    return np.where(u > 0.0, sigma * g, 0.0)


def _working_x(points: np.ndarray, origin: np.ndarray, heading: float) -> np.ndarray:
    """Longitudinal coordinate of points in the TV-centered, heading-aligned frame."""
    rel = np.atleast_2d(points) - origin
    return rel[:, 0] * np.cos(heading) + rel[:, 1] * np.sin(heading)


def _shift_points(points: np.ndarray, spec: AttackSpec,
                  origin: np.ndarray, heading: float) -> tuple:
    """Apply the lateral offset in the world frame; untouched points keep
    their exact bits (the added shift is exactly zero at or before onset)."""
    x = _working_x(points, origin, heading)
    g = lateral_offset(spec, x - spec.b)
    left = np.array([-np.sin(heading), np.cos(heading)])
    shifted = x > spec.b
    out = np.array(points, dtype=float, copy=True)
    out[shifted] += g[shifted, None] * left
    return out, shifted


def lateral_accel_profile(positions: np.ndarray, dt: float) -> np.ndarray:
    """Per-waypoint v^2 * |kappa| from finite-difference speeds and the
    three-point circumcircle curvature of the waypoint polyline."""
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    if n < 3:
        return np.zeros(n)
    steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    v = np.empty(n)
    v[1:-1] = (steps[:-1] + steps[1:]) / (2.0 * dt)
    v[0] = steps[0] / dt
    v[-1] = steps[-1] / dt

    kappa = np.zeros(n)
    a = positions[1:-1] - positions[:-2]
    b = positions[2:] - positions[1:-1]
    c = positions[2:] - positions[:-2]
    denom = (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
             * np.linalg.norm(c, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa[1:-1] = np.where(denom > 1e-12,
                               np.abs(2.0 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) / denom,
                               0.0)
    return v * v * kappa


def feasibility_rescale(history: np.ndarray, pseudo_gt: np.ndarray,
                        dt: float) -> tuple:
    """Slow the TV down so the perturbed path ahead is drivable.

    Returns (history', pseudo_gt', speed_scale).  Speeds are scaled by a
    single factor and waypoints slide back along the same geometric path,
    anchored at the current TV position.  The factor is refined until the
    rescaled future satisfies v^2 * kappa <= 0.7 g (small iteration guard
    against discretisation differences in the curvature estimate).
    """
    history = np.asarray(history, dtype=float)
    pseudo_gt = np.asarray(pseudo_gt, dtype=float)
    a_max = LATERAL_ACCEL_FRACTION * GRAVITY

    current = history[-1, X:Y + 1]
    fwd_path = np.vstack([current, pseudo_gt])
    if np.linalg.norm(np.diff(fwd_path, axis=0), axis=1).sum() < 1e-9:
        return history.copy(), pseudo_gt.copy(), 1.0

    kappa_max = path_curvature_max(fwd_path)
    gt_steps = np.linalg.norm(np.diff(fwd_path, axis=0), axis=1)
    v_peak = max(float(history[:, SPEED].max()), float(gt_steps.max() / dt))
    if v_peak <= 1e-9:
        return history.copy(), pseudo_gt.copy(), 1.0

    scale = 1.0
    if kappa_max > 1e-12:
        scale = min(1.0, np.sqrt(a_max / kappa_max) / v_peak)

    full_path = np.vstack([history[:, X:Y + 1], pseudo_gt])
    chord = np.concatenate(([0.0], np.cumsum(
        np.linalg.norm(np.diff(full_path, axis=0), axis=1))))
    anchor = chord[len(history) - 1]

    for _ in range(25):
        new_s = anchor + scale * (chord - anchor)
        pos, headings = sample_path(full_path, new_s)
        new_gt = pos[len(history):]
        worst = float(np.max(lateral_accel_profile(new_gt, dt))) if len(new_gt) >= 3 else 0.0
        if worst <= a_max + 1e-6 or scale <= 1e-6:
            break
        scale *= np.sqrt(a_max / worst) * (1.0 - 1e-9)

    if scale >= 1.0:
        return history.copy(), pseudo_gt.copy(), 1.0

    new_history = history.copy()
    new_history[:, X:Y + 1] = pos[:len(history)]
    new_history[:, HEADING] = wrap_angle(headings[:len(history)])
    new_history[:, SPEED] *= scale
    new_history[:, [YAW_RATE, ACCEL]] *= scale   # both scale linearly with the retiming
    return new_history, new_gt, float(scale)


def apply_attack(scene: Scene, spec: AttackSpec) -> PerturbedScene:
    """Perturb one scene and make it feasible again.

    Lane points, all agents' states and the TV future beyond the onset are
    shifted; headings of shifted poses are re-derived from their shifted
    neighbours; finally the TV history and pseudo ground truth are slowed
    down to respect the lateral-acceleration budget.
    """
    if scene.frame.is_frenet:
        raise AttackError("attacks operate on Cartesian scenes")
    if scene.gt_future is None:
        raise AttackError(f"scene {scene.scene_id} has no gt_future")
    tv_cur = scene.tv.current
    if not np.isfinite(tv_cur[HEADING]):
        raise AttackError("degenerate TV heading")
    origin = np.array(tv_cur[X:Y + 1])
    heading = float(tv_cur[HEADING])

    lanes = []
    for lane in scene.lanes:
        pts, shifted = _shift_points(lane.points, spec, origin, heading)
        cl = np.array(lane.centerline, copy=True)
        cl[:, :2] = pts
        if np.any(shifted):
            cl[shifted, 2] = heading_from_points(pts)[shifted]
        lanes.append(replace(lane, centerline=cl))

    agents = []
    for agent in scene.agents:
        pts, shifted = _shift_points(agent.positions, spec, origin, heading)
        st = np.array(agent.states, copy=True)
        st[:, X:Y + 1] = pts
        if np.any(shifted):
            st[shifted, HEADING] = wrap_angle(heading_from_points(pts))[shifted]
        agents.append(replace(agent, states=st))

    pseudo_gt, _ = _shift_points(scene.gt_future, spec, origin, heading)

    tv_idx = next(i for i, a in enumerate(agents)
                  if a.agent_id == scene.tv_id)
    new_hist, new_gt, scale = feasibility_rescale(
        agents[tv_idx].states, pseudo_gt, scene.dt)
    agents[tv_idx] = replace(agents[tv_idx], states=new_hist)

    perturbed = replace(scene, agents=tuple(agents), lanes=tuple(lanes),
                        gt_future=new_gt)
    return PerturbedScene(perturbed, scale, spec)


def worst_of_directions(scene: Scene, family: str, evaluator, b: float = 15.0,
                        **shape_params) -> dict:
    """Apply one attack family in both directions; report the worse metrics.

    ``evaluator`` maps a PerturbedScene to a metric dict.  Higher is worse
    for every metric except diversity (``mied``), where lower is worse.
    """
    results = {}
    for direction in DIRECTIONS:
        spec = AttackSpec(family=family, direction=direction, b=b, **shape_params)
        results[direction] = evaluator(apply_attack(scene, spec))
    left, right = results["left"], results["right"]
    out = {}
    for key in left:
        if key == "mied":
            out[key] = min(left[key], right[key])
        else:
            out[key] = max(left[key], right[key])
    return out
