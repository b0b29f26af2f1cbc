import json

import numpy as np
import pytest

from frenetwrap.scene import (
    DT, FUTURE_STEPS, HISTORY_STEPS,
    AgentHistory, FrameTag, Lane, Scene, SceneFormatError,
    SceneValidationError, load_scene, save_scene, scene_from_dict,
    scene_to_dict, validate_scene, wrap_angle,
)
from conftest import FIXTURES, straight_history, straight_lane, straight_scene


def test_wrap_angle_range_and_values():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)  # (-pi, pi] convention
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    grid = np.linspace(-20.0, 20.0, 4001)
    w = wrap_angle(grid)
    assert np.all((w > -np.pi - 1e-12) & (w <= np.pi + 1e-12))
    np.testing.assert_allclose(np.cos(w), np.cos(grid), atol=1e-12)
    np.testing.assert_allclose(np.sin(w), np.sin(grid), atol=1e-12)


def test_bundled_fixture_loads():
    scene = load_scene(FIXTURES / "straight_1.json")
    assert len(scene.lanes) == 1
    assert len(scene.agents) == 2
    assert scene.tv.states.shape == (HISTORY_STEPS + 1, 7)
    assert scene.gt_future.shape == (FUTURE_STEPS, 2)
    assert validate_scene(scene) == []


def test_save_load_round_trip(tmp_path):
    scene = load_scene(FIXTURES / "straight_1.json")
    path = tmp_path / "rt.json"
    save_scene(scene, path)
    back = load_scene(path)
    assert back.scene_id == scene.scene_id
    assert back.tv_id == scene.tv_id
    assert back.dt == scene.dt
    for a, b in zip(scene.agents, back.agents):
        assert a.agent_id == b.agent_id
        np.testing.assert_allclose(a.states, b.states, atol=1e-9)
    for a, b in zip(scene.lanes, back.lanes):
        assert a.lane_id == b.lane_id
        assert a.width == b.width
        assert a.successors == b.successors
        np.testing.assert_allclose(a.centerline, b.centerline, atol=1e-9)
    np.testing.assert_allclose(scene.gt_future, back.gt_future, atol=1e-9)


def test_round_trip_exact_doubles(tmp_path):
    # full double precision survives the JSON round trip bit-for-bit
    scene = load_scene(FIXTURES / "straight_1.json")
    path = tmp_path / "rt.json"
    save_scene(scene, path)
    back = load_scene(path)
    assert np.array_equal(scene.tv.states, back.tv.states)


def test_frenet_frame_tag_round_trip(tmp_path):
    scene = straight_scene()
    tagged = scene.with_frame(FrameTag("frenet", 3))
    path = tmp_path / "fr.json"
    save_scene(tagged, path)
    doc = json.loads(path.read_text())
    assert doc["frame"] == {"tag": "frenet", "centerline_index": 3}
    back = load_scene(path)
    assert back.frame.is_frenet and back.frame.centerline_index == 3


def test_missing_tv_is_validation_error(tmp_path):
    scene = straight_scene()
    doc = scene_to_dict(scene)
    doc["tv_id"] = "ghost"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SceneValidationError, match="ghost"):
        load_scene(path)


def test_malformed_json_is_format_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SceneFormatError):
        load_scene(path)


def test_missing_key_is_format_error():
    with pytest.raises(SceneFormatError):
        scene_from_dict({"scene_id": "x"})


def test_empty_lane_list_loads(tmp_path):
    scene = Scene("nolanes", (straight_history(),), (), "tv", DT,
                  straight_scene().gt_future)
    path = tmp_path / "nl.json"
    save_scene(scene, path)
    assert load_scene(path).lanes == ()


def test_validate_duplicate_consecutive_lane_points():
    pts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    scene = Scene("dup", (straight_history(),), (Lane("laneX", pts),), "tv")
    bad = validate_scene(scene)
    assert any("laneX" in v for v in bad)


def test_validate_dt_jump():
    tv = straight_history()
    states = np.array(tv.states, copy=True)
    states[5, 0] += 0.1  # one 0.2 s gap
    scene = Scene("jump", (AgentHistory("tv", states),),
                  (straight_lane(),), "tv")
    bad = validate_scene(scene)
    assert len([v for v in bad if "tv" in v]) >= 1


def test_validate_heading_out_of_range():
    tv = straight_history()
    states = np.array(tv.states, copy=True)
    states[0, 3] = 4.0  # > pi
    scene = Scene("head", (AgentHistory("tv", states),),
                  (straight_lane(),), "tv")
    assert any("heading" in v for v in validate_scene(scene))


def test_validate_negative_speed():
    tv = straight_history()
    states = np.array(tv.states, copy=True)
    states[0, 4] = -1.0
    scene = Scene("spd", (AgentHistory("tv", states),),
                  (straight_lane(),), "tv")
    assert any("speed" in v for v in validate_scene(scene))


def test_validate_asymmetric_lane_graph():
    a = straight_lane("a")
    a = Lane("a", a.centerline, a.width, successors=("b",))
    b = straight_lane("b", y=3.7)
    scene = Scene("graph", (straight_history(),), (a, b), "tv")
    assert any("back-reference" in v for v in validate_scene(scene))


def test_validate_gt_shape():
    scene = Scene("gt", (straight_history(),), (straight_lane(),), "tv",
                  DT, np.zeros((10, 2)))
    assert any("gt_future" in v for v in validate_scene(scene))


def test_states_are_immutable():
    scene = straight_scene()
    with pytest.raises(ValueError):
        scene.tv.states[0, 0] = 1.0
    with pytest.raises(ValueError):
        scene.lanes[0].centerline[0, 0] = 1.0
