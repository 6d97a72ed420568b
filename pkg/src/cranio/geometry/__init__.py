"""Mesh geometry: containers, sampling, distance oracles, isosurfacing,
and evaluation metrics."""

from .isosurface import (
    evaluate_grid,
    evaluate_grid_banded,
    marching_cubes,
    marching_cubes_volume,
)
from .mesh import (
    CANONICAL_BOUNDS,
    NORMALIZED_EXTENT,
    REGION_LABELS,
    TriangleMesh,
    UnitTransform,
    drop_degenerate_faces,
    empty_mesh,
    face_areas,
    face_normals,
    is_watertight,
    load_obj,
    normalize,
    save_obj,
    vertex_normals,
)
from .meshsdf import MeshDistanceField, mesh_sdf
from .metrics import chamfer, point_to_plane, regional_metrics
from .sampling import SampleBatch, sample_offsurface, sample_surface

__all__ = [
    "CANONICAL_BOUNDS",
    "NORMALIZED_EXTENT",
    "REGION_LABELS",
    "TriangleMesh",
    "UnitTransform",
    "MeshDistanceField",
    "SampleBatch",
    "chamfer",
    "drop_degenerate_faces",
    "empty_mesh",
    "evaluate_grid",
    "evaluate_grid_banded",
    "face_areas",
    "face_normals",
    "is_watertight",
    "load_obj",
    "marching_cubes",
    "marching_cubes_volume",
    "mesh_sdf",
    "normalize",
    "point_to_plane",
    "regional_metrics",
    "sample_offsurface",
    "sample_surface",
    "save_obj",
    "vertex_normals",
]
