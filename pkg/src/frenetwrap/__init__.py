"""Frenet-frame wrapper toolkit for trajectory predictors, with a
road-perturbation robustness benchmark, evaluation metrics and a
deterministic synthetic scene generator."""

from .scene import (
    DT, FUTURE_STEPS, HISTORY_STEPS,
    AgentHistory, FrameTag, Lane, Scene, SceneFormatError,
    SceneValidationError, Trajectory,
    load_scene, save_scene, scene_from_dict, scene_to_dict,
    validate_scene, wrap_angle,
)
from .geometry import (
    FrenetPoint, FrenetScene, ParamPolyline,
    build_polyline, curvature_at, curvature_profile,
    project, project_points, scene_to_cartesian, scene_to_frenet,
    tangent_heading, to_cartesian, to_cartesian_points,
)
from .centerlines import (
    CenterlineSequence, NoAssignableLaneError,
    assign_current_lane, assign_gt_centerline, enumerate_sequences,
)
from .predictors import (
    CAPredictor, ExternalPredictor, PredictorResponse, ProtocolError,
    predict_ca, predict_cartesian, wrap_frenet,
)
from .scorer import CenterlineScorer, ScorerSample, build_training_set
from .aggregation import (
    AggregationConfig, PredictionSet,
    aggregate, greedy_select, kmeans_select, marginalize, top_k_select,
)
from .metrics import (
    RoadCorridor, aggregate_rows, evaluate_scene,
    mied, min_ade, min_fde, mr1, off_road, orp,
)
from .attack import (
    AttackSpec, PerturbedScene,
    apply_attack, feasibility_rescale, lateral_offset, worst_of_directions,
)
from .synthgen import GenParams, generate, generate_corpus
from .plot import render_svg

__version__ = "0.1.0"
