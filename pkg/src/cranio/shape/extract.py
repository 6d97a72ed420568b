"""Mesh extraction from trained decoders: marching cubes over the blended
SDF, optionally mapped back to millimeters."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..geometry import (
    CANONICAL_BOUNDS,
    TriangleMesh,
    UnitTransform,
    evaluate_grid_banded,
    marching_cubes_volume,
)
from .decoder import ShapeDecoder, ShapeLatent


def extract_region_mesh(
    decoder: ShapeDecoder,
    latent: ShapeLatent,
    resolution: int,
    transform: UnitTransform | None = None,
    landmarks: np.ndarray | None = None,
) -> TriangleMesh:
    """Zero level set of the decoder at the given grid resolution.

    Evaluation is narrow-band (coarse pass plus exact refinement near the
    surface). With a transform the mesh comes back in millimeters.
    """
    from .decoder import sdf_eval  # local import to keep module load light

    if landmarks is None:
        landmarks = decoder.predict_landmarks(latent.z_glob)

    def field(pts):
        return sdf_eval(decoder, latent, np.asarray(pts, dtype=np.float32), landmarks=landmarks)

    vol = evaluate_grid_banded(field, CANONICAL_BOUNDS, int(resolution), coarse_factor=4)
    mesh = marching_cubes_volume(vol, CANONICAL_BOUNDS)
    if mesh.is_empty:
        raise DataError(
            f"empty level set for region {decoder.region.name} at resolution {resolution}"
        )
    if transform is not None:
        mesh = transform.invert_mesh(mesh)
    return mesh
