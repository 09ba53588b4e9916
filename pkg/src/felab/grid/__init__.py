from .generators import create_hyper_cube, create_hyper_shell_2d
from .io import read_coarse_mesh, triangulation_from_dict
from .triangulation import (
    CellAccessor,
    FaceAccessor,
    NeighborInfo,
    RefinementReport,
    Triangulation,
    corner_bits,
    face_corners,
)

__all__ = [
    "CellAccessor",
    "FaceAccessor",
    "NeighborInfo",
    "RefinementReport",
    "Triangulation",
    "corner_bits",
    "create_hyper_cube",
    "create_hyper_shell_2d",
    "face_corners",
    "read_coarse_mesh",
    "triangulation_from_dict",
]
