import numpy as np
import pytest

from cranio.nets import Mlp, MlpGrads
from cranio.shape.decoder import (
    RegionConfig,
    ShapeDecoder,
    init_decoder,
    init_latent,
)
from cranio.shape.loss import (
    RegionBatch,
    ShapeLossWeights,
    global_code_penalty,
    landmark_loss,
    region_sdf_loss,
)
from fdcheck import assert_grads_match
from test_shape_decoder import constant_decoder, small_region


def plane_decoder(region, normal, offset, sigma=0.15):
    """Rig every net to the exact plane SDF x . n - offset.

    Landmarks are placed inside the plane (lmk . n = 0) so every shifted
    net agrees and the blend is the exact field.
    """
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    d_in = 3 + region.d_glob + region.d_loc
    nets = []
    for _ in range(region.n_landmarks + 1):
        w = np.zeros((d_in, 1), np.float32)
        w[:3, 0] = n
        nets.append(Mlp(weights=[w], biases=[np.array([-offset], np.float32)]))
    pos = Mlp(
        weights=[np.zeros((region.d_glob, 3 * region.n_landmarks), np.float32)],
        biases=[np.zeros(3 * region.n_landmarks, np.float32)],
    )
    return ShapeDecoder(region=region, nets=nets, pos_net=pos, sigma=sigma), n


def in_plane_landmarks(region, normal, rng):
    # random points orthogonal to the normal
    raw = rng.uniform(-0.5, 0.5, (region.n_landmarks, 3))
    return raw - np.outer(raw @ normal, normal)


def single_subject_args(region, latent, landmarks):
    return (
        latent.z_glob[None].astype(np.float32),
        latent.z_loc[None].astype(np.float32),
        landmarks[None],
    )


def batch_from(rng, surf_x, surf_n, far_x, eik_x, n_grad=None):
    n_surf = surf_x.shape[0]
    n_grad = n_surf if n_grad is None else n_grad
    z = np.zeros
    return RegionBatch(
        surf_x=surf_x,
        surf_n=surf_n,
        surf_subj=z(n_surf, dtype=np.int64),
        grad_idx=np.arange(n_grad),
        eik_x=eik_x,
        eik_subj=z(eik_x.shape[0], dtype=np.int64),
        far_x=far_x,
        far_subj=z(far_x.shape[0], dtype=np.int64),
    )


class TestLossValues:
    def test_far_term_is_lambda_far_for_zero_field(self):
        region = small_region()
        dec = constant_decoder(region, 0.0)
        latent = init_latent(region, np.random.default_rng(0))
        lmk = dec.predict_landmarks(latent.z_glob)
        rng = np.random.default_rng(1)
        batch = batch_from(
            rng,
            surf_x=np.zeros((0, 3)),
            surf_n=np.zeros((0, 3)),
            far_x=rng.uniform(-1, 1, (50, 3)),
            eik_x=np.zeros((0, 3)),
            n_grad=0,
        )
        weights = ShapeLossWeights(far=0.25)
        terms = region_sdf_loss(dec, *single_subject_args(region, latent, lmk), batch, weights)
        assert terms["far"] == pytest.approx(0.25, rel=1e-12)  # exp(0) = 1 per point

    def test_perfect_sdf_gives_near_zero_surface_terms(self):
        # plane rig: an exact unit-gradient field through the real eval path
        region = small_region()
        rng = np.random.default_rng(2)
        dec, n = plane_decoder(region, normal=[0.3, -0.5, 0.8], offset=0.1)
        latent = init_latent(region, rng)
        lmk = in_plane_landmarks(region, n, rng)
        # surface points: x with x.n = offset
        raw = rng.uniform(-0.6, 0.6, (64, 3))
        surf = raw - np.outer(raw @ n - 0.1, n)
        normals = np.tile(n, (64, 1))
        far = surf + np.outer(rng.uniform(0.3, 0.8, 64), n)  # |F| >= 0.3
        eik = rng.uniform(-0.8, 0.8, (32, 3))
        batch = batch_from(rng, surf, normals, far, eik)
        weights = ShapeLossWeights(alpha=100.0)
        terms = region_sdf_loss(dec, *single_subject_args(region, latent, lmk), batch, weights)
        assert terms["surf"] < 1e-3
        assert terms["normal"] < 1e-3
        assert terms["eik"] < 1e-3
        assert terms["far"] < 1e-3  # exp(-100 * 0.3)

    def test_landmark_loss_zero_for_exact_prediction(self):
        region = small_region()
        dec = constant_decoder(region, 0.0)
        z = np.zeros((2, region.d_glob), np.float32)
        gt = np.zeros((2, region.n_landmarks, 3))
        assert landmark_loss(dec, z, gt, weight=0.1) == 0.0

    def test_global_penalty(self):
        z = np.ones((4, 8), np.float32)
        grad = np.zeros((4, 8))
        val = global_code_penalty(z, weight=0.5, z_glob_grad=grad)
        assert val == pytest.approx(0.5 * 8.0)
        assert np.allclose(grad, 2 * 0.5 / 4)


class TestLossGradients:
    def _setup(self, seed):
        region = RegionConfig("face", 4, 5, 6)
        rng = np.random.default_rng(seed)
        dec = init_decoder(region, rng, sigma=0.2, hidden=[12, 12], pos_hidden=[8])
        latent = init_latent(region, rng, std=0.3)
        lmk = rng.uniform(-0.4, 0.4, (region.n_landmarks, 3))
        surf = rng.uniform(-0.5, 0.5, (12, 3))
        normals = rng.standard_normal((12, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        batch = batch_from(
            rng, surf, normals,
            far_x=rng.uniform(-1, 1, (6, 3)),
            eik_x=rng.uniform(-0.8, 0.8, (5, 3)),
            n_grad=6,
        )
        return region, dec, latent, lmk, batch

    @pytest.mark.parametrize("seed", range(3))
    def test_code_and_param_grads_match_fd(self, seed):
        region, dec, latent, lmk, batch = self._setup(seed)
        weights = ShapeLossWeights(alpha=20.0)
        zg = latent.z_glob[None].astype(np.float32)
        zl = latent.z_loc[None].astype(np.float32)

        def total():
            terms = region_sdf_loss(dec, zg, zl, lmk[None], batch, weights)
            return sum(terms.values())

        net_grads = [MlpGrads.zeros_like(net) for net in dec.nets]
        zg_grad = np.zeros_like(zg, dtype=np.float64)
        zl_grad = np.zeros_like(zl, dtype=np.float64)
        region_sdf_loss(
            dec, zg, zl, lmk[None], batch, weights,
            net_grads=net_grads, z_glob_grad=zg_grad, z_loc_grad=zl_grad,
        )
        rng = np.random.default_rng(100 + seed)
        pairs = [(zg, zg_grad), (zl, zl_grad)]
        pairs += [(dec.nets[1].weights[0], net_grads[1].weights[0])]
        pairs += [(dec.nets[0].biases[0], net_grads[0].biases[0])]
        assert_grads_match(total, pairs, rng, rel_tol=1e-3, samples_per_array=10)

    @pytest.mark.parametrize("seed", range(2))
    def test_landmark_loss_grads_match_fd(self, seed):
        region, dec, latent, lmk, _ = self._setup(seed)
        rng = np.random.default_rng(7 + seed)
        zg = (0.3 * rng.standard_normal((2, region.d_glob))).astype(np.float32)
        gt = rng.uniform(-0.5, 0.5, (2, region.n_landmarks, 3))

        def total():
            return landmark_loss(dec, zg, gt, weight=0.1)

        pos_grads = MlpGrads.zeros_like(dec.pos_net)
        zg_grad = np.zeros_like(zg, dtype=np.float64)
        landmark_loss(dec, zg, gt, weight=0.1, pos_grads=pos_grads, z_glob_grad=zg_grad)
        pairs = [(zg, zg_grad), (dec.pos_net.weights[0], pos_grads.weights[0])]
        assert_grads_match(total, pairs, rng, rel_tol=1e-3, samples_per_array=10)
