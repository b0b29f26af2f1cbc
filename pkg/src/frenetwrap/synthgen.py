"""Deterministic synthetic scene generator.

Produces desk-scale corpora of straight roads, constant-radius curves,
S-curves, Y-forks and crossings, each with a kinematically consistent TV
history, a lead vehicle, and a lane-following ground-truth future.  Every
scene is a pure function of (topology, seed, params).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import path_curvature_max, sample_path
from .scene import (
    DT, FUTURE_STEPS, HISTORY_STEPS,
    AgentHistory, Lane, Scene, heading_from_points, save_scene, wrap_angle,
)

TOPOLOGIES = ("straight", "curve", "s_curve", "fork", "crossing")
A_LAT_BUDGET = 0.7 * 9.81
FEASIBILITY_MARGIN = 0.95


@dataclass(frozen=True)
class GenParams:
    speed: float = 12.0          # requested TV speed, m/s
    noise: float = 0.05          # lateral position noise sigma, m
    radius: float = 40.0         # curve / fork arc radius, m
    fork_angle_deg: float = 30.0
    crossing_radius: float = 20.0
    lane_width: float = 3.7
    spacing: float = 2.0         # centerline point spacing, m
    drift: float = 0.8           # pre-fork lateral commit cue, m

    def __post_init__(self):
        if self.radius < 10.0:
            raise ValueError("radius must be >= 10 m")
        if not (10.0 <= self.fork_angle_deg <= 60.0):
            raise ValueError("fork angle must be in [10, 60] degrees")


def _straight_path(start, heading, length, spacing):
    n = max(2, int(np.ceil(length / spacing)) + 1)
    s = np.linspace(0.0, length, n)
    direction = np.array([np.cos(heading), np.sin(heading)])
    return np.asarray(start) + s[:, None] * direction, heading


def _arc_path(start, heading, radius, sweep, spacing):
    """Arc from start along heading; sweep > 0 turns left."""
    arc_len = abs(sweep) * radius
    n = max(2, int(np.ceil(arc_len / spacing)) + 1)
    t = np.linspace(0.0, sweep, n)
    side = np.sign(sweep)
    center = np.asarray(start) + side * radius * np.array(
        [-np.sin(heading), np.cos(heading)])
    # angle of the start point as seen from the center
    a0 = np.arctan2(start[1] - center[1], start[0] - center[0])
    angles = a0 + t
    pts = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return pts, heading + sweep


def _join(*paths):
    out = [np.atleast_2d(paths[0])]
    for p in paths[1:]:
        p = np.atleast_2d(p)
        if np.linalg.norm(p[0] - out[-1][-1]) < 1e-9:
            p = p[1:]
        out.append(p)
    return np.vstack(out)


def _path_length(points) -> float:
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def _make_lane(lane_id, points, width, successors=(), predecessors=()):
    cl = np.column_stack([points, heading_from_points(points)])
    return Lane(lane_id, cl, width, successors, predecessors)


def _build_topology(topology, rng, p: GenParams):
    """Returns (lanes, tv_path, branch_paths, s_tv, branch_lane_ids)."""
    sp = p.spacing
    if topology == "straight":
        pts, _ = _straight_path((-40.0, 0.0), 0.0, 280.0, sp)
        lanes = [_make_lane("lane0", pts, p.lane_width)]
        return lanes, pts, {"lane0": pts}, 40.0

    if topology in ("curve", "s_curve"):
        side = 1.0 if rng.random() < 0.5 else -1.0
        entry, h = _straight_path((-80.0, 0.0), 0.0, 80.0, sp)
        if topology == "curve":
            arc, h = _arc_path(entry[-1], h, p.radius, side * np.pi / 2, sp)
            tail, _ = _straight_path(arc[-1], h, 60.0, sp)
            pts = _join(entry, arc, tail)
        else:
            arc1, h = _arc_path(entry[-1], h, p.radius, side * np.pi / 3, sp)
            arc2, h = _arc_path(arc1[-1], h, p.radius, -side * np.pi / 3, sp)
            tail, _ = _straight_path(arc2[-1], h, 60.0, sp)
            pts = _join(entry, arc1, arc2, tail)
        pre_curve = rng.random() < 0.5
        s_tv = 68.0 if pre_curve else 80.0 + 0.4 * p.radius * np.pi / 2
        lanes = [_make_lane("lane0", pts, p.lane_width)]
        return lanes, pts, {"lane0": pts}, s_tv

    # fork / crossing: a stem with two successor branches
    if topology == "fork":
        angle = np.deg2rad(p.fork_angle_deg)
        radius = p.radius
    else:
        angle = np.pi / 2
        radius = p.crossing_radius
    side = 1.0 if rng.random() < 0.5 else -1.0
    stem, h = _straight_path((-80.0, 0.0), 0.0, 80.0, sp)
    straight, _ = _straight_path(stem[-1], h, 180.0, sp)
    arc, h_turn = _arc_path(stem[-1], h, radius, side * angle, sp)
    turn_tail, _ = _straight_path(arc[-1], h_turn,
                                  max(20.0, 180.0 - _path_length(arc)), sp)
    turn = _join(arc, turn_tail)
    lanes = [
        _make_lane("stem", stem, p.lane_width,
                   successors=("branch_straight", "branch_turn")),
        _make_lane("branch_straight", straight, p.lane_width,
                   predecessors=("stem",)),
        _make_lane("branch_turn", turn, p.lane_width, predecessors=("stem",)),
    ]
    branches = {
        "branch_straight": _join(stem, straight),
        "branch_turn": _join(stem, turn),
    }
    return lanes, _join(stem, straight), branches, 60.0


def _smooth_noise(rng, n, sigma):
    raw = rng.normal(0.0, sigma, n + 6)
    kernel = np.ones(7) / 7.0
    return np.convolve(raw, kernel, mode="valid")


def _history_states(path, s_tv, speed, lateral, dt):
    """Integrate the TV history along a path with a lateral offset profile."""
    n = HISTORY_STEPS + 1
    s = s_tv + speed * dt * (np.arange(n) - HISTORY_STEPS)
    base, headings = sample_path(path, s)
    normals = np.stack([-np.sin(headings), np.cos(headings)], axis=1)
    pos = base + lateral[:, None] * normals
    slope = np.gradient(lateral, np.maximum(speed * dt, 1e-9))
    heading = wrap_angle(headings + np.arctan(slope))
    yaw_rate = np.gradient(np.unwrap(heading)) / dt
    t = (np.arange(n) - HISTORY_STEPS) * dt
    # store the speed actually realized by the sampled positions so the
    # stored channel agrees with finite differences of (x, y)
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    v = np.empty(n)
    v[1:-1] = (steps[:-1] + steps[1:]) / (2.0 * dt)
    v[0] = steps[0] / dt
    v[-1] = steps[-1] / dt
    return np.stack([
        t, pos[:, 0], pos[:, 1], heading, v, yaw_rate, np.zeros(n),
    ], axis=1)


def generate_with_info(topology, seed, params: GenParams = GenParams()):
    """Build one scene; returns (scene, info) with generator metadata."""
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}")
    rng = np.random.default_rng(seed)
    lanes, tv_path, branches, s_tv = _build_topology(topology, rng, params)

    branch_ids = sorted(branches)
    gt_branch = branch_ids[int(rng.integers(len(branch_ids)))]
    gt_path = branches[gt_branch]

    # feasible speed over everything the TV will traverse
    lo = s_tv - (HISTORY_STEPS + 1) * params.speed * DT
    hi = s_tv + (FUTURE_STEPS + 5) * params.speed * DT
    chord = np.concatenate(([0.0], np.cumsum(
        np.linalg.norm(np.diff(gt_path, axis=0), axis=1))))
    mask = (chord >= max(0.0, lo)) & (chord <= min(chord[-1], hi))
    kappa_max = path_curvature_max(gt_path[mask]) if mask.sum() >= 3 else 0.0
    speed = params.speed
    reduced = False
    if kappa_max > 1e-9:
        v_allow = FEASIBILITY_MARGIN * np.sqrt(A_LAT_BUDGET / kappa_max)
        if speed > v_allow:
            speed, reduced = float(v_allow), True

    # lateral profile: smooth noise plus, before a fork, a commit drift
    # towards the chosen branch (the cue that makes branch choice learnable)
    n = HISTORY_STEPS + 1
    lateral = _smooth_noise(rng, n, params.noise)
    if topology in ("fork", "crossing"):
        turn_pts = branches["branch_turn"]
        probe, _ = sample_path(turn_pts, np.array([_path_length(branches["branch_turn"]) * 0.6]))
        side = np.sign(probe[0, 1]) if abs(probe[0, 1]) > 1e-9 else 1.0
        target = params.drift * (side if gt_branch == "branch_turn" else -0.3 * side)
        lateral = lateral + target * np.linspace(0.0, 1.0, n) ** 1.5

    hist = _history_states(gt_path, s_tv, speed, lateral, DT)

    # ground truth: follow the branch, merging back to the centerline
    s_future = s_tv + speed * DT * np.arange(1, FUTURE_STEPS + 1)
    base, headings = sample_path(gt_path, s_future)
    merge = np.concatenate([np.linspace(1.0, 0.0, 15), np.zeros(FUTURE_STEPS - 15)])
    normals = np.stack([-np.sin(headings), np.cos(headings)], axis=1)
    gt = base + (lateral[-1] * merge)[:, None] * normals

    # a lead vehicle some distance ahead on the same branch
    lead_gap = 18.0 + 10.0 * rng.random()
    lead_speed = speed * (0.9 + 0.2 * rng.random())
    lead_kappa = path_curvature_max(gt_path)
    if lead_kappa > 1e-9:
        lead_speed = min(lead_speed,
                         FEASIBILITY_MARGIN * np.sqrt(A_LAT_BUDGET / lead_kappa))
    lead_lateral = _smooth_noise(rng, n, params.noise)
    lead = _history_states(gt_path, s_tv + lead_gap, lead_speed, lead_lateral, DT)

    scene = Scene(
        scene_id=f"{topology}_{seed}",
        agents=(AgentHistory("tv", hist), AgentHistory("lead", lead)),
        lanes=tuple(lanes),
        tv_id="tv",
        dt=DT,
        gt_future=gt,
    )
    info = {
        "topology": topology,
        "seed": int(seed) if isinstance(seed, (int, np.integer)) else None,
        "gt_branch_lane_id": gt_branch,
        "speed": float(speed),
        "speed_reduced": reduced,
    }
    return scene, info


def generate(topology, seed, params: GenParams = GenParams()) -> Scene:
    """One deterministic synthetic scene."""
    return generate_with_info(topology, seed, params)[0]


def generate_corpus(mix: dict, count: int, seed: int, out_dir,
                    params: GenParams = GenParams()) -> dict:
    """Write ``count`` scenes drawn from a topology mixture, plus a manifest.

    Re-running with the same arguments reproduces the corpus byte for byte.
    """
    total = sum(mix.values())
    if count < 1 or total <= 0:
        raise ValueError("need count >= 1 and a non-empty mixture")
    for topo in mix:
        if topo not in TOPOLOGIES:
            raise ValueError(f"unknown topology {topo!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    topos = sorted(mix)
    weights = np.array([mix[t] for t in topos], dtype=float) / total
    master = np.random.default_rng(np.random.SeedSequence(seed))
    scene_seeds = np.random.SeedSequence(seed).spawn(count)

    entries = []
    for i in range(count):
        topology = topos[int(master.choice(len(topos), p=weights))]
        scene, info = generate_with_info(topology, scene_seeds[i], params)
        scene_id = f"{topology}_{i:06d}"
        scene = replace(scene, scene_id=scene_id)
        fname = f"{scene_id}.json"
        save_scene(scene, out_dir / fname)
        info["seed"] = i
        entries.append({"file": fname, "scene_id": scene_id, **info})

    manifest = {
        "kind": "corpus",
        "seed": int(seed),
        "count": int(count),
        "mix": {t: mix[t] for t in topos},
        "params": asdict(params),
        "scenes": entries,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
