"""Classified clouds, semantic-triangle hashing, hypotheses and Hough voting."""

from .cloud import ClassifiedCloud, classify_scene, depth_normals
from .hashdb import HashDbParams, PpfParams, TriangleHashDb, build_hash_db, point_pair_features
from .hypotheses import (HypothesisParams, PoseHypothesis, center_aligned_indices,
                         generate_hypotheses)
from .kabsch import kabsch, kabsch_batch, weighted_sq_residual
from .triangles import (SemanticTriangle, TriangleParams, TriangleSet, select_semantic_triangles,
                        triangle_feature_key)
from .voting import COARSE_BINS, FINE_BINS, HoughBins, VoteParams, hough_vote, weighted_quaternion_mean

__all__ = [
    "ClassifiedCloud", "classify_scene", "depth_normals",
    "HashDbParams", "PpfParams", "TriangleHashDb", "build_hash_db", "point_pair_features",
    "HypothesisParams", "PoseHypothesis", "center_aligned_indices", "generate_hypotheses",
    "kabsch", "kabsch_batch", "weighted_sq_residual",
    "SemanticTriangle", "TriangleParams", "TriangleSet", "select_semantic_triangles",
    "triangle_feature_key",
    "COARSE_BINS", "FINE_BINS", "HoughBins", "VoteParams", "hough_vote", "weighted_quaternion_mean",
]
