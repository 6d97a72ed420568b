import numpy as np
import pytest

from cranio.nets import Mlp, init_mlp
from cranio.shape.decoder import (
    RegionConfig,
    ShapeDecoder,
    ShapeLatent,
    decoder_from_bytes,
    decoder_to_bytes,
    init_decoder,
    init_latent,
    kernel_weights,
    sdf_eval,
    sdf_grad,
)


def small_region(k=5, d_loc=6, d_glob=8):
    return RegionConfig("face", k, d_loc, d_glob)


def make_decoder(rng, region=None, sigma=0.15, hidden=(24, 24)):
    region = region or small_region()
    return init_decoder(region, rng, sigma=sigma, hidden=list(hidden), pos_hidden=[16])


def constant_decoder(region, value: float, sigma=0.15):
    """Every net outputs exactly ``value`` regardless of input."""
    d_in = 3 + region.d_glob + region.d_loc
    nets = []
    for _ in range(region.n_landmarks + 1):
        net = Mlp(
            weights=[np.zeros((d_in, 1), np.float32)],
            biases=[np.array([value], np.float32)],
        )
        nets.append(net)
    pos = Mlp(
        weights=[np.zeros((region.d_glob, 3 * region.n_landmarks), np.float32)],
        biases=[np.zeros(3 * region.n_landmarks, np.float32)],
    )
    return ShapeDecoder(region=region, nets=nets, pos_net=pos, sigma=sigma)


class TestKernelWeights:
    def test_partition_of_unity(self):
        rng = np.random.default_rng(0)
        lmk = rng.uniform(-0.8, 0.8, (12, 3))
        x = rng.uniform(-1, 1, (5000, 3))
        w = kernel_weights(x, lmk, sigma=0.2, c0=0.011)
        assert np.abs(w.sum(axis=1) - 1.0).max() < 1e-6
        assert w.min() >= 0

    def test_weight_maximal_at_its_landmark(self):
        sigma = 0.1
        lmk = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1.0, 0]])  # others >= 5 sigma
        w = kernel_weights(np.array([[0.0, 0, 0]]), lmk, sigma=sigma, c0=0.011)
        assert np.argmax(w[0]) == 1
        # u1 = 1, u0 = c0, others ~ exp(-50): w1 = 1/(1 + c0) up to tiny terms
        assert w[0, 1] == pytest.approx(1.0 / (1.0 + 0.011), abs=1e-6)

    def test_far_field_dominates_beyond_six_sigma(self):
        sigma = 0.1
        rng = np.random.default_rng(1)
        lmk = rng.uniform(-0.2, 0.2, (40, 3))
        x = np.array([[0.9, 0.9, 0.9]])  # > 6 sigma from every landmark
        d = np.linalg.norm(x - lmk, axis=1).min()
        assert d > 6 * sigma
        w = kernel_weights(x, lmk, sigma=sigma, c0=np.exp(-4.5))
        assert w[0, 0] > 0.99


class TestSdfEval:
    def test_constant_rig_blends_to_exact_constant(self):
        region = small_region()
        dec = constant_decoder(region, value=0.37)
        latent = init_latent(region, np.random.default_rng(0))
        x = np.random.default_rng(1).uniform(-1, 1, (200, 3))
        vals = sdf_eval(dec, latent, x)
        assert np.abs(vals - 0.37).max() < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        dec = make_decoder(rng)
        latent = init_latent(dec.region, rng)
        x = rng.uniform(-1, 1, (50, 3)).astype(np.float32)
        assert np.array_equal(sdf_eval(dec, latent, x), sdf_eval(dec, latent, x))

    def test_locality_of_local_codes(self):
        # zeroing a local code must not move the field beyond 6 sigma away
        rng = np.random.default_rng(3)
        dec = make_decoder(rng, sigma=0.08)
        latent = init_latent(dec.region, rng, std=0.5)
        lmk = dec.predict_landmarks(latent.z_glob)
        k = 2
        far_dir = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
        x = lmk[k - 1] + far_dir * (6.5 * dec.sigma) + rng.uniform(-0.01, 0.01, (40, 3))
        before = sdf_eval(dec, latent, x, landmarks=lmk)
        mutated = ShapeLatent(latent.z_glob, latent.z_loc.copy())
        mutated.z_loc[k] = 0.0
        after = sdf_eval(dec, mutated, x, landmarks=lmk)
        assert np.abs(after - before).max() < 1e-3

    def test_shared_global_code_feeds_all_regions(self):
        rng = np.random.default_rng(4)
        decs = {
            name: init_decoder(RegionConfig(name, 4, 6, 8), rng, sigma=0.2, hidden=[16], pos_hidden=[8])
            for name in ("face", "maxilla", "mandible")
        }
        z_glob = (0.3 * rng.standard_normal(8)).astype(np.float32)
        latents = {
            name: init_latent(dec.region, rng, z_glob=z_glob) for name, dec in decs.items()
        }
        x = rng.uniform(-0.5, 0.5, (30, 3))
        before = {n: sdf_eval(decs[n], latents[n], x) for n in decs}
        z_glob += 0.5  # mutate the shared storage
        after = {n: sdf_eval(decs[n], latents[n], x) for n in decs}
        for name in decs:
            assert np.abs(after[name] - before[name]).max() > 1e-6, name

    def test_rejects_nonfinite_query(self):
        rng = np.random.default_rng(5)
        dec = make_decoder(rng)
        latent = init_latent(dec.region, rng)
        with pytest.raises(Exception, match="non-finite"):
            sdf_eval(dec, latent, np.array([[np.nan, 0, 0]]))


class TestSdfGrad:
    def test_analytic_matches_stencil(self):
        rng = np.random.default_rng(6)
        dec = make_decoder(rng, sigma=0.12, hidden=(32, 32))
        latent = init_latent(dec.region, rng, std=0.3)
        x = rng.uniform(-0.6, 0.6, (80, 3))
        ga = sdf_grad(dec, latent, x, mode="analytic")
        gs = sdf_grad(dec, latent, x, mode="stencil")
        denom = np.maximum(np.linalg.norm(gs, axis=1, keepdims=True), 1e-3)
        assert (np.linalg.norm(ga - gs, axis=1, keepdims=True) / denom).max() < 1e-2

    def test_constant_rig_stencil_gradient_zero(self):
        region = small_region()
        dec = constant_decoder(region, value=1.3)
        latent = init_latent(region, np.random.default_rng(0))
        g = sdf_grad(dec, latent, np.random.default_rng(1).uniform(-1, 1, (20, 3)), mode="stencil")
        assert np.abs(g).max() < 1e-9


class TestLandmarks:
    def test_zero_pos_net_predicts_origin(self):
        region = small_region()
        dec = constant_decoder(region, 0.0)
        lmk = dec.predict_landmarks(np.ones(region.d_glob, np.float32))
        assert np.abs(lmk).max() == 0.0

    def test_clamped_to_bounds(self):
        region = small_region()
        dec = constant_decoder(region, 0.0)
        dec.pos_net.biases[0][:] = 5.0
        lmk = dec.predict_landmarks(np.zeros(region.d_glob, np.float32))
        assert np.abs(lmk).max() <= 1.0


def test_decoder_serialization_round_trip():
    rng = np.random.default_rng(7)
    dec = make_decoder(rng)
    blob = decoder_to_bytes(dec)
    back = decoder_from_bytes(blob)
    assert back.region == dec.region
    assert back.sigma == pytest.approx(dec.sigma)
    rng2 = np.random.default_rng(8)
    latent = init_latent(dec.region, rng2, std=0.2)
    x = rng2.uniform(-0.5, 0.5, (40, 3)).astype(np.float32)
    assert np.array_equal(sdf_eval(dec, latent, x), sdf_eval(back, latent, x))
