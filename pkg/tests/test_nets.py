import numpy as np
import pytest

from cranio.errors import DataError, NumericsError
from cranio.nets import (
    AdamState,
    Mlp,
    MlpGrads,
    adam_step,
    init_mlp,
    load_mlp,
    mlp_from_bytes,
    mlp_to_bytes,
    save_mlp,
)


def naive_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Independent oracle: per-sample loops and explicit dot products."""
    x = np.atleast_2d(x).astype(np.float64)
    out = np.zeros((x.shape[0], mlp.output_dim))
    for p in range(x.shape[0]):
        h = x[p]
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            z = np.array(
                [np.dot(h, w[:, j].astype(np.float64)) + b[j] for j in range(w.shape[1])]
            )
            if i < len(mlp.weights) - 1:
                h = np.log1p(np.exp(-np.abs(mlp.beta * z))) / mlp.beta + np.maximum(z, 0.0)
            else:
                h = z
        out[p] = h
    return out


from fdcheck import FD_STEP, assert_grads_match, fd_grad_entries


def test_zero_network_maps_to_zero():
    mlp = Mlp(
        weights=[np.zeros((3, 4), np.float32), np.zeros((4, 2), np.float32)],
        biases=[np.zeros(4, np.float32), np.zeros(2, np.float32)],
    )
    out = mlp.forward(np.array([1.0, -2.0, 3.0], np.float32))
    assert np.all(out == 0.0)


def test_single_linear_layer():
    mlp = Mlp(
        weights=[np.array([[2.0]], np.float32)],
        biases=[np.array([1.0], np.float32)],
    )
    out = mlp.forward(np.array([3.0], np.float32))
    assert out.shape == (1,)
    assert out[0] == pytest.approx(7.0)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(0)
    mlp = init_mlp(rng, [3, 200, 200, 200, 200, 1])
    x = rng.uniform(-1, 1, size=(100, 3))
    got = mlp.forward(x)
    want = naive_forward(mlp, x)
    rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-8)
    assert rel.max() < 1e-6


def test_forward_is_deterministic():
    rng = np.random.default_rng(1)
    mlp = init_mlp(rng, [5, 32, 32, 2])
    x = rng.uniform(-1, 1, size=(17, 5)).astype(np.float32)
    a = mlp.forward(x)
    b = mlp.forward(x)
    assert np.array_equal(a, b)


def test_forward_rejects_dimension_mismatch():
    mlp = init_mlp(np.random.default_rng(2), [3, 8, 1])
    with pytest.raises(DataError, match="features"):
        mlp.forward(np.zeros((4, 5), np.float32))


def test_backward_linear_layer_chain_rule():
    mlp = Mlp(
        weights=[np.array([[2.0]], np.float32)],
        biases=[np.array([1.0], np.float32)],
    )
    grads, gx = mlp.backward(np.array([3.0]), np.array([1.0]))
    assert grads.weights[0][0, 0] == pytest.approx(3.0)
    assert grads.biases[0][0] == pytest.approx(1.0)
    assert gx[0] == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(3))
def test_backward_param_grads_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mlp = init_mlp(rng, [3, 64, 64, 1])
    x = rng.uniform(-1, 1, size=(4, 3))
    upstream = rng.uniform(-1, 1, size=(4, 1))
    got, _ = mlp.backward(x, upstream)

    def loss():
        return np.sum(upstream * mlp.forward(x.astype(np.float64)))

    assert_grads_match(
        loss,
        zip(mlp.param_arrays(), got.arrays()),
        rng,
        rel_tol=1e-4,
        samples_per_array=20,
    )


@pytest.mark.parametrize("seed", range(3))
def test_backward_input_grad_matches_finite_differences(seed):
    rng = np.random.default_rng(10 + seed)
    mlp = init_mlp(rng, [3, 64, 64, 1])
    x = rng.uniform(-1, 1, size=(4, 3))
    upstream = rng.uniform(-1, 1, size=(4, 1))
    _, gx = mlp.backward(x, upstream)

    def loss():
        return np.sum(upstream * mlp.forward(x))

    fd = fd_grad_entries(loss, x, list(range(x.size)), h=FD_STEP)
    rel = np.abs(gx.reshape(-1) - fd) / np.maximum(np.abs(fd), 1e-4)
    assert rel.max() < 1e-4


def test_backward_without_param_grads():
    rng = np.random.default_rng(3)
    mlp = init_mlp(rng, [4, 16, 2])
    x = rng.uniform(-1, 1, size=(5, 4))
    up = rng.uniform(-1, 1, size=(5, 2))
    grads, gx = mlp.backward(x, up, need_param_grads=False)
    assert grads is None
    assert gx.shape == (5, 4)


def test_adam_zero_gradient_keeps_params():
    rng = np.random.default_rng(4)
    mlp = init_mlp(rng, [2, 8, 1])
    params = mlp.param_arrays()
    before = [p.copy() for p in params]
    state = AdamState.for_params(params)
    adam_step(params, [np.zeros_like(p) for p in params], state, lr=0.1)
    assert state.t == 1
    for p, b in zip(params, before):
        assert np.array_equal(p, b)


def test_adam_first_step_closed_form():
    # m_hat = g, v_hat = g^2 on the first step, so the update is
    # -lr * g / (|g| + eps'), i.e. about -lr in magnitude.
    p = np.array([0.0], np.float32)
    g = np.array([0.5], np.float32)
    state = AdamState.for_params([p])
    adam_step([p], [g], state, lr=0.1)
    assert p[0] == pytest.approx(-0.1, abs=1e-4)


def test_adam_lr_zero_leaves_params_unchanged():
    rng = np.random.default_rng(5)
    p = rng.normal(size=(3, 3)).astype(np.float32)
    before = p.copy()
    state = AdamState.for_params([p])
    adam_step([p], [rng.normal(size=(3, 3))], state, lr=0.0)
    assert np.array_equal(p, before)


def test_adam_optimizes_scalar_quadratic():
    # 200 steps on f(x) = (x - 3)^2 from x = 0.
    x = np.array([0.0], np.float32)
    state = AdamState.for_params([x])
    for _ in range(200):
        g = 2.0 * (x - 3.0)
        adam_step([x], [g], state, lr=0.1)
    assert abs(x[0] - 3.0) < 0.05


def test_adam_rejects_nonfinite_gradient():
    p = np.zeros(2, np.float32)
    state = AdamState.for_params([p])
    with pytest.raises(NumericsError, match="entry 0"):
        adam_step([p], [np.array([np.nan, 0.0])], state, lr=0.1)


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    mlp = init_mlp(rng, [7, 20, 20, 3], final_scale=0.1)
    path = tmp_path / "net.bin"
    save_mlp(path, mlp)
    back = load_mlp(path)
    assert back.dims == mlp.dims
    assert back.beta == pytest.approx(mlp.beta)
    for a, b in zip(back.param_arrays(), mlp.param_arrays()):
        assert np.array_equal(a, b)


def test_serialization_rejects_bad_magic():
    rng = np.random.default_rng(7)
    blob = bytearray(mlp_to_bytes(init_mlp(rng, [2, 4, 1])))
    blob[0] ^= 0xFF
    with pytest.raises(DataError, match="magic"):
        mlp_from_bytes(bytes(blob))


def test_grads_accumulate():
    rng = np.random.default_rng(8)
    mlp = init_mlp(rng, [3, 8, 1])
    x = rng.uniform(-1, 1, size=(6, 3))
    up = rng.uniform(-1, 1, size=(6, 1))
    whole, _ = mlp.backward(x, up)
    acc = MlpGrads.zeros_like(mlp)
    for i in range(6):
        g, _ = mlp.backward(x[i], up[i])
        acc.add(g)
    for a, b in zip(acc.arrays(), whole.arrays()):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)
