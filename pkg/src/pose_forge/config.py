"""Flat, JSON-serializable pipeline configuration mapped onto the module parameter objects."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .ablation import AblationParams
from .colorpair import ExtractionParams
from .errors import DataError, FormatError
from .pipeline import EstimateParams
from .refine import IcpParams
from .registration import HashDbParams, HoughBins, HypothesisParams, PpfParams, TriangleParams
from .synth import ModelParams, SequenceParams, ShapeParams
from .tracking import FilterParams, FlowParams, TrackParams

SEED_ENV = "POSE_FORGE_SEED"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    # color pairs and class database
    lightness_weight: float = 0.3
    similarity_threshold: float = 0.85  # clustering of reference pairs into classes
    merge_threshold: float = 0.97  # classes whose prototypes agree this well are merged
    classify_threshold: float = 0.7  # minimum similarity to assign a scene pair to a class
    min_class_fraction: float = 0.004
    spatial_sigma: float = 1.5
    range_sigma: float = 8.0
    mag_threshold: float = 4.0
    mask_erosion: int = 3
    model_views: int = 12
    model_voxel: float = 0.002
    model_image_fill: float = 0.55
    # triangle hash and point-pair fallback
    side_step: float = 0.005
    area_step: float = 25e-6
    min_side: float = 0.01
    max_side: float = 0.06
    ppf_dist_step: float = 0.0025
    ppf_angle_step_deg: float = 10.0
    # hypotheses and voting
    max_hypotheses: int = 4000
    coarse_rotation_deg: float = 30.0
    coarse_translation: float = 0.05
    fine_rotation_deg: float = 7.5
    fine_translation: float = 0.01
    top_k: int = 5
    # multiclass refinement
    icp_max_iters: int = 20
    icp_kernel_scale: float = 0.005
    icp_aggregate_weight: float = 0.5
    # tracking
    flow_levels: int = 4
    flow_window: int = 21
    flow_fb_threshold: float = 1.0
    flow_passes: int = 3
    filter_threshold: float = 0.7
    snap_radius: float = 2.0
    use_filter: bool = True
    min_matches: int = 12
    search_margin: int = 48
    track_icp_iters: int = 5
    track_icp_max_distance: float = 0.01
    # ablation
    ablation_stride: int = 5
    ablation_corruption: float = 0.2
    ablation_estimator: str = "raw"
    # synthetic data
    n_frames: int = 60
    max_deg_per_frame: float = 2.0
    max_mm_per_frame: float = 4.0
    image_fill: float = 0.5
    depth_noise_mm: float = 0.0
    min_classes: int = 3

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            want = {"int": int, "float": (int, float), "bool": bool, "str": str}[f.type]
            if isinstance(v, bool) and f.type != "bool" or not isinstance(v, want):
                raise DataError(f"config key {f.name!r} must be {f.type}, got {type(v).__name__}")
            if f.type == "float":
                object.__setattr__(self, f.name, float(v))
        unit = ("lightness_weight", "similarity_threshold", "merge_threshold", "classify_threshold",
                "filter_threshold")
        for k in unit:
            if not 0.0 < getattr(self, k) <= 1.0:
                raise DataError(f"{k} must lie in (0, 1]")
        positive = ("spatial_sigma", "range_sigma", "mag_threshold", "model_voxel", "side_step", "area_step",
                    "ppf_dist_step", "ppf_angle_step_deg", "coarse_rotation_deg", "coarse_translation",
                    "fine_rotation_deg", "fine_translation", "icp_kernel_scale", "flow_fb_threshold",
                    "snap_radius", "track_icp_max_distance", "model_image_fill", "image_fill")
        for k in positive:
            if not getattr(self, k) > 0:
                raise DataError(f"{k} must be positive")
        at_least_one = ("model_views", "max_hypotheses", "top_k", "icp_max_iters", "flow_levels", "flow_passes",
                        "ablation_stride", "n_frames", "min_classes")
        for k in at_least_one:
            if getattr(self, k) < 1:
                raise DataError(f"{k} must be >= 1")
        non_negative = ("min_class_fraction", "mask_erosion", "icp_aggregate_weight", "search_margin",
                        "track_icp_iters", "max_deg_per_frame", "max_mm_per_frame", "depth_noise_mm")
        for k in non_negative:
            if getattr(self, k) < 0:
                raise DataError(f"{k} must be non-negative")
        if self.classify_threshold >= 1.0 or self.similarity_threshold >= 1.0:
            raise DataError("class thresholds must be below 1")
        if self.fine_rotation_deg > self.coarse_rotation_deg or self.fine_translation > self.coarse_translation:
            raise DataError("fine Hough bins must not exceed the coarse bins")
        if not self.min_side < self.max_side:
            raise DataError("min_side must be below max_side")
        if self.flow_window < 3 or self.flow_window % 2 == 0:
            raise DataError("flow_window must be an odd number >= 3")
        if self.min_matches < 3:
            raise DataError("min_matches must be >= 3")
        if not 0.0 <= self.ablation_corruption < 1.0:
            raise DataError("ablation_corruption must lie in [0, 1)")
        if self.ablation_estimator not in ("raw", "robust"):
            raise DataError("ablation_estimator must be 'raw' or 'robust'")

    # ---- serialization -----------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**dict(d))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        p = Path(path)
        try:
            d = json.loads(p.read_text())
        except OSError as e:
            raise FormatError(f"cannot read config {p}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise FormatError(f"config {p} is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise FormatError(f"config {p} must be a JSON object")
        return cls.from_dict(d)

    def with_overrides(self, **kw: Any) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # ---- module parameters -------------------------------------------------------

    def extraction(self) -> ExtractionParams:
        return ExtractionParams(spatial_sigma=self.spatial_sigma, range_sigma=self.range_sigma,
                                mag_threshold=self.mag_threshold, lightness_weight=self.lightness_weight,
                                mask_erosion=self.mask_erosion)

    def model(self) -> ModelParams:
        return ModelParams(similarity_threshold=self.similarity_threshold, merge_threshold=self.merge_threshold,
                           classify_threshold=self.classify_threshold, min_class_fraction=self.min_class_fraction,
                           lightness_weight=self.lightness_weight, voxel=self.model_voxel,
                           image_fill=self.model_image_fill, extraction=self.extraction())

    def hash_db(self) -> HashDbParams:
        tp = TriangleParams(side_step=self.side_step, area_step=self.area_step, min_side=self.min_side,
                            max_side=self.max_side)
        return HashDbParams(triangle=tp, ppf=PpfParams(dist_step=self.ppf_dist_step,
                                                       angle_step_deg=self.ppf_angle_step_deg))

    def icp(self) -> IcpParams:
        return IcpParams(max_iters_per_level=self.icp_max_iters, robust_kernel_scale=self.icp_kernel_scale,
                         aggregate_weight=self.icp_aggregate_weight, seed=self.seed)

    def estimate(self) -> EstimateParams:
        return EstimateParams(extraction=self.extraction(), hypotheses=HypothesisParams(),
                              max_hypotheses=self.max_hypotheses,
                              coarse_bins=HoughBins(self.coarse_rotation_deg, self.coarse_translation),
                              fine_bins=HoughBins(self.fine_rotation_deg, self.fine_translation),
                              top_k=self.top_k, icp=self.icp())

    def track(self) -> TrackParams:
        flow = FlowParams(levels=self.flow_levels, window=self.flow_window, fb_threshold=self.flow_fb_threshold)
        filt = FilterParams(threshold=self.filter_threshold, snap_radius=self.snap_radius,
                            lightness_weight=self.lightness_weight)
        return TrackParams(flow=flow, filter=filt, extraction=self.extraction(), use_filter=self.use_filter,
                           flow_passes=self.flow_passes, min_matches=self.min_matches,
                           search_margin=self.search_margin, icp_iters=self.track_icp_iters,
                           icp_max_distance=self.track_icp_max_distance)

    def ablation(self) -> AblationParams:
        return AblationParams(stride=self.ablation_stride, corruption=self.ablation_corruption,
                              estimator=self.ablation_estimator, track=self.track())

    def shape(self) -> ShapeParams:
        return ShapeParams(min_classes=self.min_classes)

    def sequence(self) -> SequenceParams:
        return SequenceParams(n_frames=self.n_frames, max_deg_per_frame=self.max_deg_per_frame,
                              max_mm_per_frame=self.max_mm_per_frame, image_fill=self.image_fill,
                              depth_noise_mm=self.depth_noise_mm)


def load_config(path: Optional[str] = None, env: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    """Config from ``path`` (or defaults); the POSE_FORGE_SEED variable overrides the seed."""
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw is not None and raw.strip():
        try:
            seed = int(raw)
        except ValueError as e:
            raise DataError(f"{SEED_ENV} must be an integer, got {raw!r}") from e
        cfg = replace(cfg, seed=seed)
    return cfg
