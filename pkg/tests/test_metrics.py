import numpy as np
import pytest

from cranio.errors import DataError
from cranio.geometry import chamfer, point_to_plane, regional_metrics
from meshes import icosphere, square_patch


class TestChamfer:
    def test_identical_point_sets_zero(self):
        pts = np.random.default_rng(0).normal(size=(100, 3))
        assert chamfer(pts, pts.copy()) == 0.0

    def test_two_points_one_mm_apart(self):
        a = np.array([[0.0, 0, 0]])
        b = np.array([[1.0, 0, 0]])
        assert chamfer(a, b) == pytest.approx(2.0)

    def test_concentric_spheres(self):
        # dense-sampling oracle: spheres of radius 10 and 11 mm are 1 mm
        # apart everywhere, so each directional mean is ~1 and CD ~2
        a = icosphere(radius=10.0, subdivisions=3)
        b = icosphere(radius=11.0, subdivisions=3)
        cd = chamfer(a, b, samples=20_000, seed=1)
        assert cd == pytest.approx(2.0, rel=0.05)

    def test_empty_input_rejected(self):
        with pytest.raises(DataError, match="empty"):
            chamfer(np.zeros((0, 3)), np.zeros((1, 3)))

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(70, 3))
        assert chamfer(a, b) == pytest.approx(chamfer(b, a))


class TestPointToPlane:
    def test_identical_meshes_zero(self):
        m = icosphere(radius=5.0, subdivisions=2)
        assert point_to_plane(m, m, samples=5_000) < 1e-9

    def test_offset_planes(self):
        a = square_patch(z=0.0, side=10.0, grid=4)
        b = square_patch(z=1.0, side=10.0, grid=4)
        assert point_to_plane(a, b, samples=20_000) == pytest.approx(1.0, abs=1e-3)

    def test_translated_sphere_bounded_by_half_chamfer(self):
        a = icosphere(radius=10.0, subdivisions=3)
        b = a.copy()
        b.vertices = b.vertices + np.array([1.0, 0.0, 0.0])
        p2pl = point_to_plane(a, b, samples=20_000, seed=3)
        cd = chamfer(a, b, samples=20_000, seed=3)
        assert 0.0 < p2pl <= 1.0
        assert p2pl <= cd / 2 + 1e-9


class TestRegional:
    def _labeled_sphere(self):
        mesh = icosphere(radius=10.0, subdivisions=3)
        labels = np.full(mesh.n_vertices, "", dtype="<U1")
        labels[mesh.vertices[:, 2] > 5.0] = "C"
        labels[mesh.vertices[:, 2] < -5.0] = "A"
        mesh.labels = labels
        return mesh

    def test_single_region_equals_global(self):
        mesh = icosphere(radius=10.0, subdivisions=2)
        mesh.labels = np.full(mesh.n_vertices, "B", dtype="<U1")
        pred = mesh.copy()
        pred.vertices = pred.vertices * 1.01
        res = regional_metrics(pred, mesh, samples=10_000)
        assert res["B"]["cd"] == pytest.approx(res["entire"]["cd"], rel=0.02)
        assert res["B"]["p2pl"] == pytest.approx(res["entire"]["p2pl"], rel=0.02)

    def test_local_perturbation_shows_in_its_region(self):
        gt = self._labeled_sphere()
        pred = gt.copy()
        move = pred.vertices[:, 2] > 5.0
        pred.vertices[move] += np.array([0.0, 0.0, 2.0])
        res = regional_metrics(pred, gt, samples=20_000)
        assert res["C"]["cd"] > 3 * res["A"]["cd"]
        assert res["C"]["p2pl"] > 3 * res["A"]["p2pl"]

    def test_no_labels_gives_entire_only(self):
        mesh = icosphere(radius=4.0, subdivisions=2)
        res = regional_metrics(mesh, mesh.copy(), samples=2_000)
        assert list(res.keys()) == ["entire"]

    def test_absent_label_warns_and_omitted(self):
        gt = self._labeled_sphere()
        with pytest.warns(UserWarning, match="absent"):
            res = regional_metrics(gt.copy(), gt, labels=("C", "F"), samples=5_000)
        assert "F" not in res
        assert "C" in res
