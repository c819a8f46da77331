"""Text file formats: netpbm images, PLY meshes, pose text, intrinsics and frame directories."""

from .netpbm import (decode_netpbm, encode_netpbm, read_depth_pgm, read_mask_pgm, read_netpbm, read_pgm,
                     read_ppm, write_depth_pgm, write_mask_pgm, write_netpbm)
from .ply import PlyMesh, decode_ply, encode_ply, read_ply, write_ply
from .poses import (format_pose, parse_pose, read_intrinsics, read_pose, read_trajectory, write_intrinsics,
                    write_pose, write_trajectory)
from .sequence import (INTRINSICS, frame_indices, frame_paths, read_frame, read_frame_files, read_sequence,
                       write_frame, write_sequence)

__all__ = [
    "decode_netpbm", "encode_netpbm", "read_depth_pgm", "read_mask_pgm", "read_netpbm", "read_pgm",
    "read_ppm", "write_depth_pgm", "write_mask_pgm", "write_netpbm",
    "PlyMesh", "decode_ply", "encode_ply", "read_ply", "write_ply",
    "format_pose", "parse_pose", "read_intrinsics", "read_pose", "read_trajectory", "write_intrinsics",
    "write_pose", "write_trajectory",
    "INTRINSICS", "frame_indices", "frame_paths", "read_frame", "read_frame_files", "read_sequence",
    "write_frame", "write_sequence",
]
