"""Procedural textured shapes, rendering, model clouds and motion sequences."""

from .model import (ModelParams, build_model_cloud, icosahedron_directions, look_at_pose,
                    sphere_directions, surface_cloud, viewing_distance)
from .render import Light, Raster, default_intrinsics, rasterize, render_rgbd
from .sequence import MotionScript, SequenceParams, generate_sequence, scripted_poses
from .shapes import ShapeParams, TexturedMesh, ellipsoid_residual, generate_shape, mesh_diameter

__all__ = [
    "ModelParams", "build_model_cloud", "icosahedron_directions", "look_at_pose",
    "sphere_directions", "surface_cloud", "viewing_distance",
    "Light", "Raster", "default_intrinsics", "rasterize", "render_rgbd",
    "MotionScript", "SequenceParams", "generate_sequence", "scripted_poses",
    "ShapeParams", "TexturedMesh", "ellipsoid_residual", "generate_shape", "mesh_diameter",
]
