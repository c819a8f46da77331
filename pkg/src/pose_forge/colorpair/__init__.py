"""Lighting-invariant color-pair features."""

from .classdb import ClassDb, build_class_db, classify_pair_list, classify_pairs
from .edges import EdgeMap, GradientField, edge_nms_thickness, unified_gradient
from .features import (ColorPair, Extraction, ExtractionParams, PairArray, SamplingParams,
                       colorpair_similarity, edges_in_box, extract_color_pairs, mask_box, rowwise_similarity,
                       sample_color_pairs, similarity_matrix)
from .lab import bilateral_prefilter, rgb_to_lab

__all__ = [
    "ClassDb", "build_class_db", "classify_pairs", "classify_pair_list",
    "EdgeMap", "GradientField", "edge_nms_thickness", "unified_gradient",
    "ColorPair", "Extraction", "ExtractionParams", "PairArray", "SamplingParams",
    "colorpair_similarity", "edges_in_box", "extract_color_pairs", "mask_box", "rowwise_similarity", "sample_color_pairs", "similarity_matrix",
    "bilateral_prefilter", "rgb_to_lab",
]
