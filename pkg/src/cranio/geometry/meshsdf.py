"""Signed distances to a triangle mesh.

Unsigned distance comes from exact point-to-triangle projection against
candidate faces found through a KD-tree over vertices (faces incident to
the k nearest vertices). The sign uses the angle-weighted pseudonormal of
the closest feature (face, edge, or vertex), which is exact for watertight
meshes. Non-watertight input degrades to unsigned distances and raises a
warning once.

Convention: negative inside, zero on the surface, positive outside.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DataError
from .mesh import TriangleMesh, face_normals, is_watertight

FEATURE_FACE = 0
FEATURE_VERT = (1, 2, 3)
FEATURE_EDGE = {(0, 1): 4, (1, 2): 5, (2, 0): 6}


def closest_point_triangle(p, a, b, c):
    """Vectorized closest point on triangle (Ericson, RTCD 5.1.5).

    Returns (closest points, feature codes): 0 face interior, 1..3 vertex
    a/b/c, 4..6 edge ab/bc/ca.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp_ = p - c
    d5 = np.einsum("ij,ij->i", ab, cp_)
    d6 = np.einsum("ij,ij->i", ac, cp_)

    n = p.shape[0]
    out = np.empty_like(p)
    feat = np.zeros(n, dtype=np.int8)
    done = np.zeros(n, dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    feat[m] = 1
    done |= m

    m = ~done & (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    feat[m] = 2
    done |= m

    vc = d1 * d4 - d3 * d2
    m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    denom = np.where(np.abs(d1 - d3) > 1e-30, d1 - d3, 1.0)
    t = d1 / denom
    out[m] = a[m] + t[m, None] * ab[m]
    feat[m] = 4
    done |= m

    m = ~done & (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    feat[m] = 3
    done |= m

    vb = d5 * d2 - d1 * d6
    m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    denom = np.where(np.abs(d2 - d6) > 1e-30, d2 - d6, 1.0)
    t = d2 / denom
    out[m] = a[m] + t[m, None] * ac[m]
    feat[m] = 6
    done |= m

    va = d3 * d6 - d5 * d4
    m = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    denom = np.where(np.abs(denom) > 1e-30, denom, 1.0)
    t = (d4 - d3) / denom
    out[m] = b[m] + t[m, None] * (c[m] - b[m])
    feat[m] = 5
    done |= m

    m = ~done
    denom = va + vb + vc
    denom = np.where(np.abs(denom) > 1e-30, denom, 1.0)
    v = vb / denom
    w = vc / denom
    out[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]
    return out, feat


class MeshDistanceField:
    """Reusable signed-distance queries against one mesh."""

    def __init__(self, mesh: TriangleMesh, k_nearest: int = 12):
        if mesh.is_empty:
            raise DataError("cannot build a distance field over an empty mesh")
        self.mesh = mesh
        self.k_nearest = min(k_nearest, mesh.n_vertices)
        self.watertight = is_watertight(mesh)
        self._warned = False
        v = mesh.vertices
        f = mesh.faces
        self._used_verts = np.unique(f.reshape(-1))
        self._tree = cKDTree(v[self._used_verts])
        self._fn = face_normals(mesh)

        # vertex -> incident faces (CSR)
        order = np.argsort(f.reshape(-1), kind="stable")
        self._vf_faces = (order // 3).astype(np.int64)
        counts = np.bincount(f.reshape(-1), minlength=mesh.n_vertices)
        self._vf_start = np.concatenate([[0], np.cumsum(counts)])

        # angle-weighted vertex pseudonormals (unnormalized; sign only)
        self._vert_pn = np.zeros_like(v)
        for c in range(3):
            e1 = v[f[:, (c + 1) % 3]] - v[f[:, c]]
            e2 = v[f[:, (c + 2) % 3]] - v[f[:, c]]
            e1 /= np.maximum(np.linalg.norm(e1, axis=1, keepdims=True), 1e-30)
            e2 /= np.maximum(np.linalg.norm(e2, axis=1, keepdims=True), 1e-30)
            ang = np.arccos(np.clip((e1 * e2).sum(axis=1), -1.0, 1.0))
            np.add.at(self._vert_pn, f[:, c], self._fn * ang[:, None])

        # edge pseudonormals: sum of adjacent face normals, keyed for searchsorted
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        keys = edges[:, 0] * mesh.n_vertices + edges[:, 1]
        self._edge_keys, inv = np.unique(keys, return_inverse=True)
        self._edge_pn = np.zeros((self._edge_keys.size, 3))
        face_per_edge = np.tile(np.arange(f.shape[0]), 3)
        np.add.at(self._edge_pn, inv, self._fn[face_per_edge])

    def query(self, points: np.ndarray, chunk: int = 16384) -> np.ndarray:
        """Signed (or unsigned if non-watertight) distances in mesh units."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if not self.watertight and not self._warned:
            warnings.warn("mesh is not watertight; returning unsigned distances")
            self._warned = True
        out = np.empty(pts.shape[0])
        for s in range(0, pts.shape[0], chunk):
            out[s : s + chunk] = self._query_chunk(pts[s : s + chunk])
        return out

    __call__ = query

    def _query_chunk(self, pts: np.ndarray) -> np.ndarray:
        n = pts.shape[0]
        _, nn = self._tree.query(pts, k=self.k_nearest)
        nn = self._used_verts[np.atleast_2d(nn)]
        # gather candidate faces per query via vertex incidence
        starts = self._vf_start[nn.reshape(-1)]
        ends = self._vf_start[nn.reshape(-1) + 1]
        counts = ends - starts
        qidx = np.repeat(np.repeat(np.arange(n), self.k_nearest), counts)
        total = int(counts.sum())
        rel = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        fidx = self._vf_faces[np.repeat(starts, counts) + rel]
        # deduplicate (query, face) pairs
        pair_keys = qidx * self.mesh.n_faces + fidx
        uniq, first = np.unique(pair_keys, return_index=True)
        qidx = qidx[first]
        fidx = fidx[first]

        tri = self.mesh.faces[fidx]
        v = self.mesh.vertices
        cp, feat = closest_point_triangle(pts[qidx], v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]])
        diff = pts[qidx] - cp
        d2 = np.einsum("ij,ij->i", diff, diff)

        # per-query argmin over candidate pairs
        order = np.lexsort((d2, qidx))
        qsorted = qidx[order]
        firsts = np.searchsorted(qsorted, np.arange(n))
        best = order[firsts]

        bq = qidx[best]
        assert np.array_equal(bq, np.arange(n))
        bf = fidx[best]
        bcp = cp[best]
        bfeat = feat[best]
        dist = np.sqrt(d2[best])

        if not self.watertight:
            return dist

        normal = np.empty((n, 3))
        tri_b = self.mesh.faces[bf]
        face_m = bfeat == 0
        normal[face_m] = self._fn[bf[face_m]]
        for code, local in zip(FEATURE_VERT, range(3)):
            m = bfeat == code
            normal[m] = self._vert_pn[tri_b[m, local]]
        for (la, lb), code in FEATURE_EDGE.items():
            m = bfeat == code
            if not np.any(m):
                continue
            e0 = tri_b[m, la]
            e1 = tri_b[m, lb]
            lo = np.minimum(e0, e1)
            hi = np.maximum(e0, e1)
            rows = np.searchsorted(self._edge_keys, lo * self.mesh.n_vertices + hi)
            normal[m] = self._edge_pn[rows]

        side = np.einsum("ij,ij->i", pts - bcp, normal)
        return np.where(side < 0, -dist, dist)


def mesh_sdf(mesh: TriangleMesh, points: np.ndarray) -> np.ndarray:
    """One-shot signed distance query (builds the acceleration structure)."""
    return MeshDistanceField(mesh).query(points)
