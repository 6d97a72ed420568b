import numpy as np
import pytest

from cranio.errors import DataError
from cranio.geometry import (
    chamfer,
    evaluate_grid_banded,
    marching_cubes,
    marching_cubes_volume,
    face_normals,
)

BOUNDS = (np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]))


def sphere_sdf(p):
    return np.linalg.norm(p, axis=1) - 0.5


def test_sphere_vertices_on_radius():
    res = 64
    mesh = marching_cubes(sphere_sdf, BOUNDS, res)
    h = 2.0 / (res - 1)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert r.min() > 0.5 - 2 * h
    assert r.max() < 0.5 + 2 * h


def test_constant_positive_field_gives_empty_mesh():
    mesh = marching_cubes(lambda p: np.ones(p.shape[0]), BOUNDS, 16)
    assert mesh.is_empty


def test_linear_plane_field_exact():
    mesh = marching_cubes(lambda p: p[:, 2] - 0.25, BOUNDS, 17)
    assert not mesh.is_empty
    assert np.abs(mesh.vertices[:, 2] - 0.25).max() < 1e-6


def test_nonfinite_field_rejected():
    def bad(p):
        v = sphere_sdf(p)
        v[0] = np.nan
        return v

    with pytest.raises(DataError, match="non-finite"):
        marching_cubes(bad, BOUNDS, 8)


def test_winding_points_outward():
    mesh = marching_cubes(sphere_sdf, BOUNDS, 48)
    fn = face_normals(mesh)
    centers = mesh.vertices[mesh.faces].mean(axis=1)
    radial = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    assert (np.einsum("ij,ij->i", fn, radial) > 0).mean() > 0.99


def test_resolution_must_be_at_least_two():
    with pytest.raises(DataError, match="resolution"):
        marching_cubes(sphere_sdf, BOUNDS, 1)


def test_banded_volume_matches_dense_extraction():
    res = 48
    dense = marching_cubes(sphere_sdf, BOUNDS, res)
    vol = evaluate_grid_banded(sphere_sdf, BOUNDS, res, coarse_factor=4)
    banded = marching_cubes_volume(vol, BOUNDS)
    assert chamfer(dense.vertices, banded.vertices) < 1e-5
