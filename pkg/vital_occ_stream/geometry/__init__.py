"""
SE(3) poses, frame composition, oriented boxes and voxel-lattice ↔ metric mapping.
"""

from vital_occ_stream.geometry.boxes import Box3D, bev_iou, box_cells, ray_box_entry
from vital_occ_stream.geometry.grid import GridFrame, GridSpec, cell_centers, cell_index_centers
from vital_occ_stream.geometry.transforms import (
    EgoPose,
    RigidTransform,
    compose,
    conjugate,
    relative_transform,
    rotation_z,
)

__all__ = [
    "Box3D",
    "EgoPose",
    "GridFrame",
    "GridSpec",
    "RigidTransform",
    "bev_iou",
    "box_cells",
    "cell_centers",
    "cell_index_centers",
    "compose",
    "conjugate",
    "ray_box_entry",
    "relative_transform",
    "rotation_z",
]
