"""Composite shape-module loss.

Per region (surface samples x with normals n, off-surface eikonal samples,
far-field samples):

    L = l_surf * mean |F(x)|
      + l_surf * mean ||grad F(x) - n(x)||
      + l_eik  * mean | ||grad F|| - 1 |     (surface subset + off-surface mix)
      + l_far  * mean exp(-alpha |F|)        (far-field samples)

plus, across regions, l_glob * ||z_glob||^2 and the landmark regression
term handled by the trainer. Spatial gradients use a 6-point central
stencil sharing the center point's active set, so parameter gradients stay
first-order; analytic input gradients are reserved for inference.

All reductions accumulate in float64; gradients flow through eval/backward
into network parameters and latent codes (landmarks are constants here).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import ShapeDecoder, backward_batch, eval_batch

STENCIL_OFFSETS = np.array(
    [
        [1, 0, 0], [-1, 0, 0],
        [0, 1, 0], [0, -1, 0],
        [0, 0, 1], [0, 0, -1],
    ],
    dtype=np.float64,
)


@dataclass
class ShapeLossWeights:
    surf: float = 1.0
    eik: float = 0.1
    far: float = 0.1
    alpha: float = 100.0
    glob: float = 1e-4
    lmk: float = 0.1


@dataclass
class RegionBatch:
    """One region's samples for a step; subj holds local subject indices."""

    surf_x: np.ndarray
    surf_n: np.ndarray
    surf_subj: np.ndarray
    grad_idx: np.ndarray  # rows of surf receiving normal+eikonal stencils
    eik_x: np.ndarray
    eik_subj: np.ndarray
    far_x: np.ndarray
    far_subj: np.ndarray


def region_sdf_loss(
    decoder: ShapeDecoder,
    z_glob: np.ndarray,
    z_loc: np.ndarray,
    landmarks: np.ndarray,
    batch: RegionBatch,
    weights: ShapeLossWeights,
    h: float = 1e-3,
    net_grads: list | None = None,
    z_glob_grad: np.ndarray | None = None,
    z_loc_grad: np.ndarray | None = None,
) -> dict[str, float]:
    """Loss terms for one region; accumulates gradients into the buffers."""
    n_surf = batch.surf_x.shape[0]
    n_far = batch.far_x.shape[0]
    n_grad = batch.grad_idx.shape[0]
    n_eik_off = batch.eik_x.shape[0]
    n_eik = n_grad + n_eik_off

    centers = np.concatenate([batch.surf_x, batch.far_x, batch.eik_x])
    subj_c = np.concatenate([batch.surf_subj, batch.far_subj, batch.eik_subj])
    values_c, ctx_c = eval_batch(
        decoder, centers, subj_c, z_glob, z_loc, landmarks, want_context=True
    )
    f_surf = values_c[:n_surf]
    f_far = values_c[n_surf : n_surf + n_far]

    # stencil bases: the surface grad subset plus the off-surface eikonal set
    base_rows = np.concatenate([batch.grad_idx, n_surf + n_far + np.arange(n_eik_off)])
    base_x = centers[base_rows]
    base_subj = subj_c[base_rows]
    base_active = ctx_c.active[base_rows]
    stencil_x = (base_x[:, None, :] + h * STENCIL_OFFSETS[None, :, :]).reshape(-1, 3)
    stencil_subj = np.repeat(base_subj, 6)
    stencil_active = np.repeat(base_active, 6, axis=0)
    values_s, ctx_s = eval_batch(
        decoder,
        stencil_x,
        stencil_subj,
        z_glob,
        z_loc,
        landmarks,
        active_override=stencil_active,
        want_context=True,
    )
    vs = values_s.reshape(-1, 6)
    g = (vs[:, 0::2] - vs[:, 1::2]) / (2.0 * h)  # (B,3)

    terms: dict[str, float] = {}
    terms["surf"] = weights.surf * float(np.abs(f_surf).mean()) if n_surf else 0.0
    terms["far"] = (
        weights.far * float(np.exp(-weights.alpha * np.abs(f_far)).mean()) if n_far else 0.0
    )
    gn = g[:n_grad] - batch.surf_n[batch.grad_idx]
    gn_norm = np.linalg.norm(gn, axis=1)
    terms["normal"] = weights.surf * float(gn_norm.mean()) if n_grad else 0.0
    g_norm = np.linalg.norm(g, axis=1)
    terms["eik"] = weights.eik * float(np.abs(g_norm - 1.0).mean()) if n_eik else 0.0

    if net_grads is None and z_glob_grad is None and z_loc_grad is None:
        return terms

    # upstream for the center evaluations
    up_c = np.zeros(centers.shape[0])
    if n_surf:
        up_c[:n_surf] = weights.surf * np.sign(f_surf) / n_surf
    if n_far:
        up_c[n_surf : n_surf + n_far] = (
            -weights.far
            * weights.alpha
            * np.exp(-weights.alpha * np.abs(f_far))
            * np.sign(f_far)
            / n_far
        )

    # upstream for the stencil evaluations through dL/dg
    dldg = np.zeros_like(g)
    if n_grad:
        safe = np.maximum(gn_norm, 1e-12)[:, None]
        dldg[:n_grad] += (weights.surf / n_grad) * gn / safe
    if n_eik:
        safe = np.maximum(g_norm, 1e-12)[:, None]
        dldg += (weights.eik / n_eik) * np.sign(g_norm - 1.0)[:, None] * g / safe
    up_s = np.zeros((g.shape[0], 6))
    up_s[:, 0::2] = dldg / (2.0 * h)
    up_s[:, 1::2] = -dldg / (2.0 * h)

    backward_batch(decoder, ctx_c, up_c, net_grads, z_glob_grad, z_loc_grad)
    backward_batch(decoder, ctx_s, up_s.reshape(-1), net_grads, z_glob_grad, z_loc_grad)
    return terms


def landmark_loss(
    decoder: ShapeDecoder,
    z_glob: np.ndarray,
    gt_landmarks: np.ndarray,
    weight: float,
    pos_grads=None,
    z_glob_grad: np.ndarray | None = None,
) -> float:
    """Mean squared landmark error for a stack of subjects, (S,K,3) each.

    Gradients flow into the position net and (through its input) z_glob.
    """
    s = z_glob.shape[0]
    k = decoder.region.n_landmarks
    z64 = z_glob.astype(np.float64)
    pred = decoder.pos_net.forward(z64).reshape(s, k, 3)
    diff = pred - gt_landmarks
    loss = weight * float(np.einsum("skd,skd->", diff, diff) / (s * k))
    if pos_grads is not None or z_glob_grad is not None:
        upstream = (2.0 * weight / (s * k)) * diff.reshape(s, 3 * k)
        grads, gx = decoder.pos_net.backward(
            z64, upstream, need_param_grads=pos_grads is not None
        )
        if pos_grads is not None:
            pos_grads.add(grads)
        if z_glob_grad is not None:
            z_glob_grad += gx
    return loss


def global_code_penalty(
    z_glob: np.ndarray, weight: float, z_glob_grad: np.ndarray | None = None
) -> float:
    """l2 regularizer on the shared global codes, mean over subjects."""
    s = z_glob.shape[0]
    loss = weight * float(np.einsum("sd,sd->", z_glob, z_glob)) / s
    if z_glob_grad is not None:
        z_glob_grad += (2.0 * weight / s) * z_glob
    return loss
