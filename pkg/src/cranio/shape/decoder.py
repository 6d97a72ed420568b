"""Landmark-anchored ensemble SDF decoders.

A region decoder blends K+1 small MLPs with Gaussian kernel weights
centered on K landmarks (slot 0 is the landmark-free far-field net with a
constant base weight c0):

    F(x) = sum_k w_k(x) f_k(input_k),
    input_k = (x - lmk_k, [z_glob, z_loc_k]),  input_0 = (x, [z_glob, z_loc_0])

Landmarks come from a compact position net applied to the global code and
are treated as constants by the gradient machinery (the position net is
supervised directly by landmark regression).

Evaluation uses an active set: components whose normalized kernel weight
falls below ``cutoff`` are dropped and the rest renormalized, which keeps
the partition of unity exact on the active set and changes the blend by at
most ~K*cutoff*max|f|. kernel_weights() itself always returns the exact
full normalization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..nets import Mlp, init_mlp, mlp_from_bytes, mlp_to_bytes

ENSEMBLE_MAGIC = b"CRENS001"

# canonical region table: landmark count, local code width, global code width
CANONICAL_REGIONS: dict[str, tuple[int, int, int]] = {
    "face": (39, 32, 64),
    "maxilla": (43, 64, 64),
    "mandible": (16, 32, 64),
}

# landmark predictions clamp to the canonical query cube
POS_CLAMP = 1.0

# c0 such that w0 = 0.5 at 3 sigma from the nearest (isolated) landmark
DEFAULT_C0 = float(np.exp(-(3.0**2) / 2.0))


@dataclass
class RegionConfig:
    name: str
    n_landmarks: int
    d_loc: int
    d_glob: int

    @classmethod
    def canonical(cls, name: str, d_loc: int | None = None, d_glob: int | None = None) -> "RegionConfig":
        if name not in CANONICAL_REGIONS:
            raise DataError(f"unknown region {name!r}")
        k, dl, dg = CANONICAL_REGIONS[name]
        return cls(name, k, d_loc if d_loc is not None else dl, d_glob if d_glob is not None else dg)

    def validate(self) -> None:
        if self.n_landmarks < 1 or self.d_loc < 1 or self.d_glob < 1:
            raise DataError(f"invalid region config {self}")


@dataclass
class ShapeLatent:
    """Per-subject codes for one region; z_glob is shared storage across the
    subject's regions, z_loc has K+1 rows (row 0 feeds the far-field net)."""

    z_glob: np.ndarray
    z_loc: np.ndarray

    def validate(self, region: RegionConfig) -> None:
        if self.z_glob.shape != (region.d_glob,):
            raise DataError(f"z_glob shape {self.z_glob.shape} != ({region.d_glob},)")
        if self.z_loc.shape != (region.n_landmarks + 1, region.d_loc):
            raise DataError(
                f"z_loc shape {self.z_loc.shape} != ({region.n_landmarks + 1}, {region.d_loc})"
            )
        if not (np.all(np.isfinite(self.z_glob)) and np.all(np.isfinite(self.z_loc))):
            raise DataError("non-finite latent code")


def init_latent(region: RegionConfig, rng: np.random.Generator, std: float = 0.01,
                z_glob: np.ndarray | None = None) -> ShapeLatent:
    if z_glob is None:
        z_glob = (std * rng.standard_normal(region.d_glob)).astype(np.float32)
    z_loc = (std * rng.standard_normal((region.n_landmarks + 1, region.d_loc))).astype(np.float32)
    return ShapeLatent(z_glob=z_glob, z_loc=z_loc)


@dataclass
class ShapeDecoder:
    """K+1 small SDF nets plus the landmark position net for one region."""

    region: RegionConfig
    nets: list[Mlp]
    pos_net: Mlp
    sigma: float
    c0: float = DEFAULT_C0
    cutoff: float = 1e-5

    def __post_init__(self):
        if len(self.nets) != self.region.n_landmarks + 1:
            raise DataError(
                f"{self.region.name}: expected {self.region.n_landmarks + 1} nets, got {len(self.nets)}"
            )
        d_in = 3 + self.region.d_glob + self.region.d_loc
        dims0 = self.nets[0].dims
        for i, net in enumerate(self.nets):
            if net.input_dim != d_in or net.output_dim != 1:
                raise DataError(f"net {i} dims {net.dims} incompatible with region {self.region}")
            if net.dims != dims0:
                raise DataError("ensemble nets must share one architecture")
        if self.pos_net.input_dim != self.region.d_glob or self.pos_net.output_dim != 3 * self.region.n_landmarks:
            raise DataError("position net dims incompatible with region")
        if self.sigma <= 0 or self.c0 <= 0:
            raise DataError("sigma and c0 must be positive")

    @property
    def input_dim(self) -> int:
        return 3 + self.region.d_glob + self.region.d_loc

    def predict_landmarks(self, z_glob: np.ndarray, clamp: bool = True) -> np.ndarray:
        """Landmark positions (K,3) in normalized coordinates."""
        if not np.all(np.isfinite(z_glob)):
            raise DataError("non-finite global code")
        out = self.pos_net.forward(z_glob.astype(np.float32)).reshape(self.region.n_landmarks, 3)
        if clamp:
            out = np.clip(out, -POS_CLAMP, POS_CLAMP)
        return out


def init_decoder(
    region: RegionConfig,
    rng: np.random.Generator,
    sigma: float,
    hidden: list[int],
    pos_hidden: list[int],
    c0: float = DEFAULT_C0,
    cutoff: float = 1e-5,
    beta: float = 100.0,
    nets: list[Mlp] | None = None,
) -> ShapeDecoder:
    """Fresh decoder; pass ``nets`` to alias a shared ensemble (ablations)."""
    d_in = 3 + region.d_glob + region.d_loc
    if nets is None:
        nets = [
            init_mlp(rng, [d_in] + list(hidden) + [1], beta=beta, final_scale=0.1)
            for _ in range(region.n_landmarks + 1)
        ]
    pos_net = init_mlp(
        rng, [region.d_glob] + list(pos_hidden) + [3 * region.n_landmarks], beta=beta
    )
    return ShapeDecoder(region=region, nets=nets, pos_net=pos_net, sigma=sigma, c0=c0, cutoff=cutoff)


def kernel_weights(x: np.ndarray, landmarks: np.ndarray, sigma: float, c0: float) -> np.ndarray:
    """Exact normalized blend weights, shape (P, K+1); column 0 is the
    far-field base weight. Sums to 1 by construction."""
    if sigma <= 0 or c0 <= 0:
        raise DataError("sigma and c0 must be positive")
    x = np.atleast_2d(x)
    diff = x[:, None, :] - landmarks[None, :, :]
    d2 = np.einsum("pkd,pkd->pk", diff, diff)
    u = np.empty((x.shape[0], landmarks.shape[0] + 1), dtype=np.float64)
    u[:, 0] = c0
    u[:, 1:] = np.exp(-d2 / (2.0 * sigma * sigma))
    return u / u.sum(axis=1, keepdims=True)


def _active_mask(u: np.ndarray, cutoff: float) -> np.ndarray:
    total = u.sum(axis=1, keepdims=True)
    mask = u >= cutoff * total
    mask[np.arange(u.shape[0]), np.argmax(u, axis=1)] = True
    return mask


@dataclass
class EvalContext:
    """Everything backward needs to redo the per-net passes."""

    points: np.ndarray  # (P,3) f32
    subj: np.ndarray  # (P,) local subject index
    w: np.ndarray  # (P,K+1) renormalized active weights, f64
    active: np.ndarray  # (P,K+1) bool
    rows: list[np.ndarray]  # per-net row indices
    inputs: list[np.ndarray | None]  # per-net input matrices (f32)


def eval_batch(
    decoder: ShapeDecoder,
    x: np.ndarray,
    subj: np.ndarray,
    z_glob: np.ndarray,
    z_loc: np.ndarray,
    landmarks: np.ndarray,
    active_override: np.ndarray | None = None,
    want_context: bool = False,
):
    """Blended SDF values for a mixed-subject batch.

    z_glob (S,dg), z_loc (S,K+1,dl), landmarks (S,K,3); subj maps each point
    to its row. Returns (values (P,), EvalContext | None).
    """
    region = decoder.region
    x = np.ascontiguousarray(x)
    dtype = x.dtype if x.dtype in (np.float32, np.float64) else np.dtype(np.float32)
    x = x.astype(dtype, copy=False)
    subj = np.asarray(subj, dtype=np.int64)
    n = x.shape[0]
    k1 = region.n_landmarks + 1
    lm = landmarks[subj].astype(dtype)  # (P,K,3)
    diff = x[:, None, :].astype(np.float64) - lm
    d2 = np.einsum("pkd,pkd->pk", diff, diff)
    u = np.empty((n, k1), dtype=np.float64)
    u[:, 0] = decoder.c0
    u[:, 1:] = np.exp(-d2 / (2.0 * decoder.sigma**2))
    active = _active_mask(u, decoder.cutoff) if active_override is None else active_override
    w = np.where(active, u, 0.0)
    w /= w.sum(axis=1, keepdims=True)

    values = np.zeros(n, dtype=np.float64)
    rows_per_net: list[np.ndarray] = []
    inputs_per_net: list[np.ndarray | None] = []
    for k in range(k1):
        rows = np.nonzero(active[:, k])[0]
        rows_per_net.append(rows)
        if rows.size == 0:
            inputs_per_net.append(None)
            continue
        xin = np.empty((rows.size, decoder.input_dim), dtype=dtype)
        if k == 0:
            xin[:, :3] = x[rows]
        else:
            xin[:, :3] = x[rows] - lm[rows, k - 1]
        xin[:, 3 : 3 + region.d_glob] = z_glob[subj[rows]]
        xin[:, 3 + region.d_glob :] = z_loc[subj[rows], k]
        f = decoder.nets[k].forward(xin)[:, 0]
        values[rows] += w[rows, k] * f
        inputs_per_net.append(xin if want_context else None)
    ctx = (
        EvalContext(points=x, subj=subj, w=w, active=active, rows=rows_per_net, inputs=inputs_per_net)
        if want_context
        else None
    )
    return values, ctx


def backward_batch(
    decoder: ShapeDecoder,
    ctx: EvalContext,
    upstream: np.ndarray,
    net_grads: list | None,
    z_glob_grad: np.ndarray | None,
    z_loc_grad: np.ndarray | None,
) -> None:
    """Accumulate d(loss)/d(net params) and d(loss)/d(codes) given
    d(loss)/d(F) per point. Pass None to skip a gradient target."""
    region = decoder.region
    dg = region.d_glob
    n_subj = int(ctx.subj.max()) + 1 if ctx.subj.size else 0
    for k, rows in enumerate(ctx.rows):
        if rows.size == 0:
            continue
        xin = ctx.inputs[k]
        up = (ctx.w[rows, k] * upstream[rows]).astype(xin.dtype)[:, None]
        grads, gx = decoder.nets[k].backward(xin, up, need_param_grads=net_grads is not None)
        if net_grads is not None:
            net_grads[k].add(grads)
        if z_glob_grad is None and z_loc_grad is None:
            continue
        onehot = np.zeros((n_subj, rows.size), dtype=np.float32)
        onehot[ctx.subj[rows], np.arange(rows.size)] = 1.0
        if z_glob_grad is not None:
            z_glob_grad += onehot @ gx[:, 3 : 3 + dg]
        if z_loc_grad is not None:
            z_loc_grad[:, k, :] += onehot @ gx[:, 3 + dg :]


def sdf_eval(decoder: ShapeDecoder, latent: ShapeLatent, x: np.ndarray,
             landmarks: np.ndarray | None = None) -> np.ndarray:
    """Blended SDF for one subject; landmarks default to the position net's
    prediction from the subject's global code."""
    latent.validate(decoder.region)
    x = np.atleast_2d(np.asarray(x))
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite query point")
    if landmarks is None:
        landmarks = decoder.predict_landmarks(latent.z_glob)
    values, _ = eval_batch(
        decoder,
        x,
        np.zeros(x.shape[0], dtype=np.int64),
        latent.z_glob[None].astype(np.float32),
        latent.z_loc[None].astype(np.float32),
        landmarks[None],
    )
    return values


def sdf_grad(
    decoder: ShapeDecoder,
    latent: ShapeLatent,
    x: np.ndarray,
    mode: str = "analytic",
    landmarks: np.ndarray | None = None,
    h: float = 1e-3,
) -> np.ndarray:
    """Spatial gradient of the blended SDF, (P,3).

    analytic: kernel-weight gradients plus per-net input gradients;
    stencil: 6-point central differences of sdf_eval.
    """
    latent.validate(decoder.region)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if landmarks is None:
        landmarks = decoder.predict_landmarks(latent.z_glob)
    if mode == "stencil":
        out = np.zeros_like(x)
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            hi = sdf_eval(decoder, latent, x + e, landmarks)
            lo = sdf_eval(decoder, latent, x - e, landmarks)
            out[:, axis] = (hi - lo) / (2.0 * h)
        return out
    if mode != "analytic":
        raise DataError(f"unknown gradient mode {mode!r}")

    region = decoder.region
    n = x.shape[0]
    k1 = region.n_landmarks + 1
    subj = np.zeros(n, dtype=np.int64)
    _, ctx = eval_batch(
        decoder,
        x,
        subj,
        latent.z_glob[None].astype(np.float32),
        latent.z_loc[None].astype(np.float32),
        landmarks[None],
        want_context=True,
    )
    w = ctx.w  # (P,K+1), renormalized over active set
    diff = x[:, None, :] - landmarks[None, :, :]  # (P,K,3)
    du = np.zeros((n, k1, 3))
    u_act = np.where(ctx.active, np.concatenate([
        np.full((n, 1), decoder.c0),
        np.exp(-np.einsum("pkd,pkd->pk", diff, diff) / (2 * decoder.sigma**2)),
    ], axis=1), 0.0)
    s_act = u_act.sum(axis=1, keepdims=True)
    du[:, 1:, :] = u_act[:, 1:, None] * (-diff / decoder.sigma**2)
    du *= ctx.active[:, :, None]
    dsum = du.sum(axis=1)  # (P,3)
    dw = (du - w[:, :, None] * dsum[:, None, :]) / s_act[:, :, None]

    grad = np.zeros((n, 3))
    for k, rows in enumerate(ctx.rows):
        if rows.size == 0:
            continue
        f = decoder.nets[k].forward(ctx.inputs[k])[:, 0]
        _, gx = decoder.nets[k].backward(
            ctx.inputs[k], np.ones((rows.size, 1), dtype=np.float32), need_param_grads=False
        )
        grad[rows] += dw[rows, k] * f[:, None] + w[rows, k, None] * gx[:, :3]
    return grad


def decoder_to_bytes(decoder: ShapeDecoder) -> bytes:
    name = decoder.region.name.encode()
    parts = [
        ENSEMBLE_MAGIC,
        struct.pack("<B", len(name)),
        name,
        struct.pack(
            "<IIIdd",
            decoder.region.n_landmarks,
            decoder.region.d_loc,
            decoder.region.d_glob,
            decoder.sigma,
            decoder.c0,
        ),
        struct.pack("<d", decoder.cutoff),
    ]
    for net in decoder.nets:
        parts.append(mlp_to_bytes(net))
    parts.append(mlp_to_bytes(decoder.pos_net))
    return b"".join(parts)


def decoder_from_bytes(data: bytes) -> ShapeDecoder:
    if data[:8] != ENSEMBLE_MAGIC:
        raise DataError("bad ensemble magic")
    off = 8
    (nlen,) = struct.unpack_from("<B", data, off)
    off += 1
    name = data[off : off + nlen].decode()
    off += nlen
    k, d_loc, d_glob, sigma, c0 = struct.unpack_from("<IIIdd", data, off)
    off += 28
    (cutoff,) = struct.unpack_from("<d", data, off)
    off += 8
    nets = []
    for _ in range(k + 1):
        net, off = mlp_from_bytes(data, off)
        nets.append(net)
    pos_net, off = mlp_from_bytes(data, off)
    if off != len(data):
        raise DataError("trailing bytes in ensemble file")
    region = RegionConfig(name, k, d_loc, d_glob)
    return ShapeDecoder(
        region=region, nets=nets, pos_net=pos_net, sigma=float(sigma), c0=float(c0), cutoff=float(cutoff)
    )


def save_decoder(path, decoder: ShapeDecoder) -> None:
    with open(path, "wb") as fh:
        fh.write(decoder_to_bytes(decoder))


def load_decoder(path) -> ShapeDecoder:
    with open(path, "rb") as fh:
        return decoder_from_bytes(fh.read())
