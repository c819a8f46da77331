"""Color-pair based 6D pose estimation and tracking for textured objects in RGB-D."""

__version__ = "0.1.0"
