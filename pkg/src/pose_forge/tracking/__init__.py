"""Frame-to-frame 6D pose tracking."""

from .canonical import DEFAULT_UP, CanonicalFrame, canonical_frame, look_at_basis, perspective_normalize
from .filtering import FilterParams, colorpair_match_scores, filter_by_colorpair
from .flow import (FlowParams, Matches, edge_seeds, flow_correspondences, flow_from_field, lk_track,
                   read_flo2, sample_flow_field, write_flo2)
from .motion import (FEATURE_DIM, MotionFeatures, build_motion_features, camera_relative_rotation,
                     estimate_relative_rotation, estimate_relative_translation, mad_weights,
                     robust_rotation, virtual_projection, weighted_median)
from .tracker import (StepDiagnostics, TrackParams, TrackState, estimate_motion, estimate_motion_lsq, init_track,
                      lifted_matches, propagate_mask, track_step, track_step_detailed)
from .training import TrainingPairParams, make_training_pair, procedural_training_pairs

__all__ = [
    "DEFAULT_UP", "CanonicalFrame", "canonical_frame", "look_at_basis", "perspective_normalize",
    "FilterParams", "colorpair_match_scores", "filter_by_colorpair",
    "FlowParams", "Matches", "edge_seeds", "flow_correspondences", "flow_from_field", "lk_track",
    "read_flo2", "sample_flow_field", "write_flo2",
    "FEATURE_DIM", "MotionFeatures", "build_motion_features", "camera_relative_rotation",
    "estimate_relative_rotation", "estimate_relative_translation", "mad_weights", "robust_rotation",
    "virtual_projection", "weighted_median",
    "StepDiagnostics", "TrackParams", "TrackState", "estimate_motion", "estimate_motion_lsq", "init_track",
    "lifted_matches", "propagate_mask", "track_step", "track_step_detailed",
    "TrainingPairParams", "make_training_pair", "procedural_training_pairs",
]
