"""Action tube detection: linking, trimming, transition matrices and tube metrics."""

from .anchors import (AnchorGrid, GtMicroTube, TransitionMatrix, augment, compose, estimate_transitions,
                      generate_grids, identity_transitions, match_gt, threshold_transitions)
from .evaluation import EvalConfig, avg_map, class_ap, completion_map, prediction_map, st_iou, video_map
from .fusion import FusionParams, fuse
from .future import HorizonParams, assemble_future, complete_linker_tubes, complete_tube
from .geometry import Box, DetectionFrame, ScoredBox, iou, nms_order
from .labelling import OnlineLabeller, potts_labels
from .offline import PathParams, TrimParams, build_offline_tubes, build_paths, viterbi_trim
from .online import OnlineLinker, OnlineParams, run_online
from .simulate import NoiseModel, ScenarioConfig, generate_scenario, render
from .tubes import ActionTube, GtTube, MicroTube, MicroTubeSet, PredictionSet

__version__ = "0.1.0"

__all__ = [
    "AnchorGrid",
    "GtMicroTube",
    "TransitionMatrix",
    "augment",
    "compose",
    "estimate_transitions",
    "generate_grids",
    "identity_transitions",
    "match_gt",
    "threshold_transitions",
    "EvalConfig",
    "avg_map",
    "class_ap",
    "completion_map",
    "prediction_map",
    "st_iou",
    "video_map",
    "FusionParams",
    "fuse",
    "HorizonParams",
    "assemble_future",
    "complete_linker_tubes",
    "complete_tube",
    "Box",
    "DetectionFrame",
    "ScoredBox",
    "iou",
    "nms_order",
    "OnlineLabeller",
    "potts_labels",
    "PathParams",
    "TrimParams",
    "build_offline_tubes",
    "build_paths",
    "viterbi_trim",
    "OnlineLinker",
    "OnlineParams",
    "run_online",
    "NoiseModel",
    "ScenarioConfig",
    "generate_scenario",
    "render",
    "ActionTube",
    "GtTube",
    "MicroTube",
    "MicroTubeSet",
    "PredictionSet",
]
