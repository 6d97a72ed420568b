import numpy as np
import pytest

from cranio.errors import DataError
from cranio.geometry import (
    MeshDistanceField,
    TriangleMesh,
    is_watertight,
    load_obj,
    mesh_sdf,
    normalize,
    sample_offsurface,
    sample_surface,
    save_obj,
    vertex_normals,
)
from meshes import icosphere, square_patch


class TestNormalize:
    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-40, 60, size=(500, 3))
        normed, tf = normalize(pts)
        back = tf.invert(normed)
        assert np.abs(back - pts).max() < 1e-5
        assert np.abs(normed).max() <= 0.9 + 1e-12

    def test_head_sized_mesh_scale(self):
        # 100 mm extent -> scale = 1.8 / 100
        pts = np.array([[0.0, 0, 0], [100.0, 20, 30]])
        _, tf = normalize(pts)
        assert tf.scale == pytest.approx(0.018, rel=1e-6)

    def test_already_normalized_is_near_identity(self):
        pts = np.array([[-0.9, -0.9, -0.9], [0.9, 0.9, 0.9]])
        normed, tf = normalize(pts)
        assert tf.scale == pytest.approx(1.0)
        assert np.abs(tf.translation).max() < 1e-12
        assert np.abs(normed - pts).max() < 1e-12

    def test_zero_extent_rejected(self):
        with pytest.raises(DataError, match="zero extent"):
            normalize(np.zeros((5, 3)))


class TestObjIO:
    def test_round_trip_with_normals_and_labels(self, tmp_path):
        mesh = icosphere(radius=2.0, subdivisions=1)
        labels = np.full(mesh.n_vertices, "", dtype="<U1")
        labels[:10] = "C"
        mesh.labels = labels
        path = tmp_path / "s.obj"
        save_obj(path, mesh)
        back = load_obj(path)
        assert back.n_vertices == mesh.n_vertices
        assert back.n_faces == mesh.n_faces
        assert np.abs(back.vertices - mesh.vertices).max() < 1e-5
        assert np.abs(back.normals - mesh.normals).max() < 1e-4
        assert np.array_equal(back.labels, labels)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_obj(tmp_path / "nope.obj")

    def test_degenerate_faces_dropped_on_load(self, tmp_path):
        path = tmp_path / "d.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\nf 1 2 2\n"
        )
        mesh = load_obj(path)
        assert mesh.n_faces == 1


class TestWatertight:
    def test_sphere_is_watertight(self):
        assert is_watertight(icosphere(subdivisions=1))

    def test_open_patch_is_not(self):
        assert not is_watertight(square_patch())


class TestSampleSurface:
    def test_square_sample_mean_near_centroid(self):
        mesh = square_patch(side=1.0, grid=1)
        batch = sample_surface(mesh, 10_000, np.random.default_rng(0))
        assert np.abs(batch.points.mean(axis=0)[:2] - 0.5).max() < 0.02
        assert np.all(batch.gt_sdf == 0.0)

    def test_single_triangle_inside_plane(self):
        mesh = TriangleMesh(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]]),
            np.array([[0, 1, 2]]),
        )
        batch = sample_surface(mesh, 500, np.random.default_rng(1))
        assert np.abs(batch.points[:, 2]).max() < 1e-6
        s = batch.points[:, 0] + batch.points[:, 1]
        assert np.all(batch.points[:, :2] >= -1e-9)
        assert np.all(s <= 1 + 1e-9)

    def test_sphere_normals_radial(self):
        mesh = icosphere(radius=1.0, subdivisions=3)
        mesh.normals = None
        batch = sample_surface(mesh, 2_000, np.random.default_rng(2))
        radial = batch.points / np.linalg.norm(batch.points, axis=1, keepdims=True)
        cosang = np.einsum("ij,ij->i", radial, batch.gt_normal)
        assert np.degrees(np.arccos(np.clip(cosang, -1, 1))).max() < 2.0

    def test_empty_mesh_rejected(self):
        with pytest.raises(DataError, match="empty"):
            sample_surface(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64)), 10, np.random.default_rng(0))


class TestSampleOffsurface:
    BOUNDS = (np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]))

    def test_zero_margin_uniform_in_bounds(self):
        batch = sample_offsurface(self.BOUNDS, 1_000, np.random.default_rng(0))
        assert len(batch) == 1_000
        assert batch.points.min() >= -1 and batch.points.max() <= 1

    def test_margin_respected_for_sphere(self):
        dist = lambda p: np.linalg.norm(p, axis=1) - 0.5
        batch = sample_offsurface(
            self.BOUNDS, 2_000, np.random.default_rng(1), distance_fn=dist, margin=0.1
        )
        assert np.abs(dist(batch.points)).min() >= 0.1

    def test_count_zero(self):
        batch = sample_offsurface(self.BOUNDS, 0, np.random.default_rng(2))
        assert len(batch) == 0

    def test_retry_budget_exhaustion(self):
        dist = lambda p: np.zeros(p.shape[0])  # everything rejected
        with pytest.raises(DataError, match="retry|rounds"):
            sample_offsurface(
                self.BOUNDS, 10, np.random.default_rng(3), distance_fn=dist, margin=0.5, max_tries=3
            )


class TestMeshSdf:
    def test_icosphere_center_and_outside(self):
        mesh = icosphere(radius=0.5, subdivisions=3)
        d = mesh_sdf(mesh, np.array([[0.0, 0, 0], [0.0, 0, 1.0]]))
        # faceting makes the polyhedron slightly smaller than the sphere
        assert d[0] == pytest.approx(-0.5, abs=0.01)
        assert d[1] == pytest.approx(0.5, abs=0.01)

    def test_point_on_vertex_is_zero(self):
        mesh = icosphere(radius=0.5, subdivisions=2)
        d = mesh_sdf(mesh, mesh.vertices[[0, 7, 33]])
        assert np.abs(d).max() < 1e-6

    def test_sign_against_analytic_sphere(self):
        mesh = icosphere(radius=0.5, subdivisions=3)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.8, 0.8, size=(500, 3))
        analytic = np.linalg.norm(pts, axis=1) - 0.5
        d = mesh_sdf(mesh, pts)
        keep = np.abs(analytic) > 0.01  # skip the faceting shell
        assert np.all(np.sign(d[keep]) == np.sign(analytic[keep]))
        assert np.abs(d[keep] - analytic[keep]).max() < 0.01

    def test_non_watertight_warns_and_unsigned(self):
        field = MeshDistanceField(square_patch(z=0.0, side=1.0, grid=2))
        assert not field.watertight
        with pytest.warns(UserWarning, match="watertight"):
            d = field.query(np.array([[0.5, 0.5, -0.3], [0.5, 0.5, 0.3]]))
        assert np.all(d > 0)
        assert np.allclose(d, 0.3, atol=1e-9)


def test_vertex_normals_radial_on_sphere():
    mesh = icosphere(radius=1.0, subdivisions=2)
    mesh.normals = None
    n = vertex_normals(mesh)
    cosang = np.einsum("ij,ij->i", n, mesh.vertices)
    assert cosang.min() > np.cos(np.radians(2.0))
