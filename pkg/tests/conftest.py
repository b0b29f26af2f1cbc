import numpy as np
import pytest

from frenetwrap.scene import (
    DT, FUTURE_STEPS, HISTORY_STEPS,
    AgentHistory, Lane, Scene,
)

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def straight_history(agent_id="tv", speed=10.0, start=(-20.0, 0.0),
                     heading=0.0, lateral=0.0):
    """Constant-speed straight-line history ending at t=0."""
    n = HISTORY_STEPS + 1
    t = (np.arange(n) - HISTORY_STEPS) * DT
    direction = np.array([np.cos(heading), np.sin(heading)])
    normal = np.array([-np.sin(heading), np.cos(heading)])
    pos = (np.asarray(start) + (speed * (t + 2.0))[:, None] * direction
           + lateral * normal)
    states = np.stack([
        t, pos[:, 0], pos[:, 1], np.full(n, heading), np.full(n, speed),
        np.zeros(n), np.zeros(n),
    ], axis=1)
    return AgentHistory(agent_id, states)


def straight_lane(lane_id="lane0", length=300.0, y=0.0, width=3.7,
                  spacing=2.0, x0=-50.0):
    n = int(length / spacing) + 1
    x = x0 + np.linspace(0.0, length, n)
    cl = np.stack([x, np.full(n, y), np.zeros(n)], axis=1)
    return Lane(lane_id, cl, width)


def straight_scene(speed=10.0, gt=True, lateral=0.0, scene_id="straight_test"):
    """TV driving along a single straight x-axis lane."""
    tv = straight_history(speed=speed, lateral=lateral)
    x0 = tv.current[1]
    if gt:
        s = speed * DT * np.arange(1, FUTURE_STEPS + 1)
        gt_arr = np.stack([x0 + s, np.full(FUTURE_STEPS, lateral)], axis=1)
    else:
        gt_arr = None
    return Scene(scene_id, (tv,), (straight_lane(),), "tv", DT, gt_arr)


def quarter_circle_points(radius=10.0, step_deg=1.0, ccw=True):
    """CCW quarter circle from (R, 0) to (0, R) around the origin."""
    ang = np.deg2rad(np.arange(0.0, 90.0 + step_deg / 2, step_deg))
    if not ccw:
        ang = -ang
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def arc_lane_scene(radius=30.0, speed=10.0, scene_id="arc_test"):
    """TV at the start of a quarter-circle lane, tangent-aligned.

    The lane begins with a 30 m straight lead-in along -x ending at (0, -R)
    ... actually: arc from (0,0) heading +x curving left with radius R,
    preceded by a straight section so the TV history lies on the lane.
    """
    n_lead = 16
    lead = np.stack([np.linspace(-30.0, 0.0, n_lead),
                     np.zeros(n_lead)], axis=1)
    ang = np.linspace(0.0, np.pi / 2, 91)
    arc = np.stack([radius * np.sin(ang), radius * (1.0 - np.cos(ang))], axis=1)
    pts = np.vstack([lead[:-1], arc])
    headings = np.concatenate([np.zeros(n_lead - 1), ang])
    cl = np.column_stack([pts, headings])
    lane = Lane("arc0", cl, 3.7)
    tv = straight_history(speed=speed, start=(-20.0, 0.0))
    gt_s = speed * DT * np.arange(1, FUTURE_STEPS + 1)
    gt = np.stack([radius * np.sin(gt_s / radius),
                   radius * (1.0 - np.cos(gt_s / radius))], axis=1)
    return Scene(scene_id, (tv,), (lane,), "tv", DT, gt)


@pytest.fixture
def fork_scene():
    from frenetwrap import synthgen
    return synthgen.generate("fork", 123)
