"""Minimal differentiable MLP engine on numpy.

Dense feed-forward networks with a sharp softplus nonlinearity, reverse-mode
gradients for parameters and inputs, and an Adam optimizer. Parameters are
stored in float32; compute dtype follows the query dtype, so float64 inputs
give float64 arithmetic on the same parameter values (used by the
finite-difference checks). Loss reductions elsewhere accumulate in float64.

Binary serialization format (little-endian):

    bytes 0..8   magic ``CRMLP001``
    uint32       layer count L
    float32      softplus sharpness beta (0 encodes a purely linear net)
    uint32[L+1]  layer widths d0..dL
    per layer:   weights, row-major float32 of shape (d_in, d_out), then
                 biases, float32 of shape (d_out,)

The forward map is ``x @ W + b`` per layer with the activation applied to
every layer except the last.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericsError

MAGIC = b"CRMLP001"

# Sharp softplus approximates ReLU while keeping the network C^1, which the
# analytic input gradients rely on.
DEFAULT_BETA = 100.0


def softplus(z: np.ndarray, beta: float) -> np.ndarray:
    return np.logaddexp(0.0, beta * z) / np.asarray(beta, dtype=z.dtype)


def softplus_deriv(z: np.ndarray, beta: float) -> np.ndarray:
    # sigmoid(beta * z), stable for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-beta * z[pos]))
    e = np.exp(beta * z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class Mlp:
    """Feed-forward network; ``weights[i]``/``biases[i]`` define layer i."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    beta: float = DEFAULT_BETA

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def check(self) -> None:
        for i in range(len(self.weights) - 1):
            if self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise DataError(
                    f"layer {i} output dim {self.weights[i].shape[1]} != "
                    f"layer {i + 1} input dim {self.weights[i + 1].shape[0]}"
                )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise DataError(f"layer {i} bias shape {b.shape} != ({w.shape[1]},)")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the network on ``x`` of shape (input_dim,) or (P, input_dim)."""
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.input_dim:
            raise DataError(
                f"input has {h.shape[1]} features, network expects {self.input_dim}"
            )
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < n_layers - 1:
                h = softplus(h, self.beta)
        return h[0] if single else h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping pre-activations for a later backward pass."""
        h = np.atleast_2d(x)
        if h.shape[1] != self.input_dim:
            raise DataError(
                f"input has {h.shape[1]} features, network expects {self.input_dim}"
            )
        cache = [h]
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < n_layers - 1:
                cache.append(z)
                h = softplus(z, self.beta)
            else:
                h = z
        return h, cache

    def backward(
        self,
        x: np.ndarray,
        upstream: np.ndarray,
        *,
        need_param_grads: bool = True,
    ) -> tuple["MlpGrads | None", np.ndarray]:
        """Reverse-mode gradients for a loss with d(loss)/d(output) = upstream.

        Returns parameter gradients (or None when ``need_param_grads`` is
        False) and d(loss)/d(input), matching the shape of ``x``.
        """
        single = x.ndim == 1
        up = np.atleast_2d(upstream)
        if up.shape[-1] != self.output_dim:
            raise DataError(
                f"upstream has {up.shape[-1]} features, network outputs {self.output_dim}"
            )
        _, cache = self.forward_cached(x)
        grads, gx = self._backward_from_cache(cache, up, need_param_grads)
        return grads, (gx[0] if single else gx)

    def _backward_from_cache(
        self,
        cache: list[np.ndarray],
        upstream: np.ndarray,
        need_param_grads: bool,
    ) -> tuple["MlpGrads | None", np.ndarray]:
        n_layers = len(self.weights)
        grads = MlpGrads.zeros_like(self, dtype=upstream.dtype) if need_param_grads else None
        g = upstream
        for i in range(n_layers - 1, -1, -1):
            if i == 0:
                layer_in = cache[0]
            else:
                layer_in = softplus(cache[i], self.beta)
            if grads is not None:
                grads.weights[i] += layer_in.T @ g
                grads.biases[i] += g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * softplus_deriv(cache[i], self.beta)
        return grads, g


@dataclass
class MlpGrads:
    """Parameter gradients shaped like the owning Mlp."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, mlp: Mlp, dtype=np.float64) -> "MlpGrads":
        return cls(
            weights=[np.zeros(w.shape, dtype=dtype) for w in mlp.weights],
            biases=[np.zeros(b.shape, dtype=dtype) for b in mlp.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def add(self, other: "MlpGrads") -> None:
        for a, b in zip(self.arrays(), other.arrays()):
            a += b

    def scale(self, factor: float) -> None:
        for a in self.arrays():
            a *= factor


def init_mlp(
    rng: np.random.Generator,
    dims: list[int],
    beta: float = DEFAULT_BETA,
    final_scale: float = 1.0,
) -> Mlp:
    """Uniform +-sqrt(6/(fan_in+fan_out)) init; final layer optionally scaled.

    SDF heads use final_scale=0.1 so freshly initialized fields start close
    to the zero level set.
    """
    weights = []
    biases = []
    for i in range(len(dims) - 1):
        limit = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        w = rng.uniform(-limit, limit, size=(dims[i], dims[i + 1]))
        if i == len(dims) - 2:
            w *= final_scale
        weights.append(w.astype(np.float32))
        biases.append(np.zeros(dims[i + 1], dtype=np.float32))
    return Mlp(weights=weights, biases=biases, beta=beta)


@dataclass
class AdamState:
    """First/second moment buffers plus step counter for one parameter set."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p, dtype=np.float32) for p in params],
            v=[np.zeros_like(p, dtype=np.float32) for p in params],
            **kwargs,
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """Standard bias-corrected Adam update, in place.

    Rejects non-finite gradients up front so a diverged loss cannot poison
    the moment buffers.
    """
    if lr < 0:
        raise NumericsError(f"learning rate must be >= 0, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DataError(
            f"parameter/gradient/state count mismatch: "
            f"{len(params)}/{len(grads)}/{len(state.m)}"
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DataError(f"entry {i}: param shape {p.shape} != grad shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in parameter entry {i}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g32 = g.astype(np.float32, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g32
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g32)
        if lr == 0.0:
            continue
        step = (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        p -= step.astype(p.dtype, copy=False)


def save_mlp(path, mlp: Mlp) -> None:
    with open(path, "wb") as fh:
        fh.write(mlp_to_bytes(mlp))


def load_mlp(path) -> Mlp:
    with open(path, "rb") as fh:
        data = fh.read()
    mlp, used = mlp_from_bytes(data)
    if used != len(data):
        raise DataError(f"{path}: {len(data) - used} trailing bytes")
    return mlp


def mlp_to_bytes(mlp: Mlp) -> bytes:
    mlp.check()
    dims = mlp.dims
    parts = [MAGIC, struct.pack("<I", len(mlp.weights)), struct.pack("<f", mlp.beta)]
    parts.append(struct.pack(f"<{len(dims)}I", *dims))
    for w, b in zip(mlp.weights, mlp.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def mlp_from_bytes(data: bytes, offset: int = 0) -> tuple[Mlp, int]:
    """Parse one serialized network; returns (mlp, offset after the blob)."""
    if data[offset : offset + 8] != MAGIC:
        raise DataError("bad MLP magic; not a serialized network")
    offset += 8
    (n_layers,) = struct.unpack_from("<I", data, offset)
    offset += 4
    (beta,) = struct.unpack_from("<f", data, offset)
    offset += 4
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", data, offset))
    offset += 4 * (n_layers + 1)
    weights = []
    biases = []
    for i in range(n_layers):
        n_w = dims[i] * dims[i + 1]
        w = np.frombuffer(data, dtype="<f4", count=n_w, offset=offset).reshape(
            dims[i], dims[i + 1]
        )
        offset += 4 * n_w
        b = np.frombuffer(data, dtype="<f4", count=dims[i + 1], offset=offset)
        offset += 4 * dims[i + 1]
        weights.append(w.copy())
        biases.append(b.copy())
    return Mlp(weights=weights, biases=biases, beta=float(beta)), offset
