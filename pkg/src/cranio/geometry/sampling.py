"""Point sampling on and off surfaces, plus the SampleBatch carrier.

SampleBatch is the unit of training data: query points with whichever
ground-truth annotations the consumer needs (SDF values, unit normals,
displacement vectors). Binary persistence shares the little-endian float32
style of the network files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .mesh import TriangleMesh, face_areas, vertex_normals

BATCH_MAGIC = b"CRBAT001"


@dataclass
class SampleBatch:
    """Query points (P,3) with optional per-point ground-truth annotations."""

    points: np.ndarray
    gt_sdf: np.ndarray | None = None
    gt_normal: np.ndarray | None = None
    gt_displacement: np.ndarray | None = None
    region: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        for name in ("gt_sdf", "gt_normal", "gt_displacement"):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.asarray(val, dtype=np.float64)
            if val.shape[0] != self.points.shape[0]:
                raise DataError(f"{name} length {val.shape[0]} != {self.points.shape[0]} points")
            setattr(self, name, val)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, idx: np.ndarray) -> "SampleBatch":
        return SampleBatch(
            self.points[idx],
            None if self.gt_sdf is None else self.gt_sdf[idx],
            None if self.gt_normal is None else self.gt_normal[idx],
            None if self.gt_displacement is None else self.gt_displacement[idx],
            self.region,
        )

    def save(self, path) -> None:
        flags = (
            (1 if self.gt_sdf is not None else 0)
            | (2 if self.gt_normal is not None else 0)
            | (4 if self.gt_displacement is not None else 0)
        )
        region_bytes = self.region.encode()
        with open(path, "wb") as fh:
            fh.write(BATCH_MAGIC)
            fh.write(struct.pack("<IIB", len(self), flags, len(region_bytes)))
            fh.write(region_bytes)
            fh.write(np.ascontiguousarray(self.points, dtype="<f4").tobytes())
            for arr in (self.gt_sdf, self.gt_normal, self.gt_displacement):
                if arr is not None:
                    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "SampleBatch":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != BATCH_MAGIC:
            raise DataError(f"{path}: bad sample batch magic")
        n, flags, rlen = struct.unpack_from("<IIB", data, 8)
        off = 17
        region = data[off : off + rlen].decode()
        off += rlen

        def take(count):
            nonlocal off
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
            off += 4 * count
            return arr.astype(np.float64)

        points = take(3 * n).reshape(n, 3)
        sdf = take(n) if flags & 1 else None
        normal = take(3 * n).reshape(n, 3) if flags & 2 else None
        disp = take(3 * n).reshape(n, 3) if flags & 4 else None
        return cls(points, sdf, normal, disp, region)


def sample_surface(
    mesh: TriangleMesh,
    count: int,
    rng: np.random.Generator,
    region: str = "",
) -> SampleBatch:
    """Area-weighted uniform surface samples with interpolated unit normals.

    Sampled points carry gt_sdf = 0.
    """
    if mesh.is_empty:
        raise DataError("cannot sample an empty mesh")
    areas = face_areas(mesh)
    total = areas.sum()
    if total <= 0:
        raise DataError("mesh has no positive-area faces")
    probs = areas / total
    fidx = rng.choice(len(probs), size=count, p=probs)
    # uniform barycentric via the square-root trick
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    tri = mesh.faces[fidx]
    v = mesh.vertices
    pts = w0[:, None] * v[tri[:, 0]] + w1[:, None] * v[tri[:, 1]] + w2[:, None] * v[tri[:, 2]]
    vnorm = mesh.normals if mesh.normals is not None else vertex_normals(mesh)
    nrm = (
        w0[:, None] * vnorm[tri[:, 0]]
        + w1[:, None] * vnorm[tri[:, 1]]
        + w2[:, None] * vnorm[tri[:, 2]]
    )
    nrm = nrm / np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-30)
    return SampleBatch(pts, gt_sdf=np.zeros(count), gt_normal=nrm, region=region)


def sample_offsurface(
    bounds: tuple[np.ndarray, np.ndarray],
    count: int,
    rng: np.random.Generator,
    distance_fn=None,
    margin: float = 0.0,
    max_tries: int = 50,
    region: str = "",
) -> SampleBatch:
    """Uniform samples in bounds with |distance_fn| >= margin (far field).

    With margin == 0 (or no distance_fn) this is plain uniform sampling.
    Raises DataError when rejection sampling exhausts its retry budget.
    """
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    if np.any(hi <= lo):
        raise DataError(f"degenerate bounds: {lo} .. {hi}")
    if count == 0:
        return SampleBatch(np.zeros((0, 3)), region=region)
    if distance_fn is None or margin <= 0.0:
        pts = rng.uniform(lo, hi, size=(count, 3))
        return SampleBatch(pts, region=region)
    kept: list[np.ndarray] = []
    have = 0
    for _ in range(max_tries):
        draw = rng.uniform(lo, hi, size=(max(count - have, count // 2 + 1), 3))
        d = np.abs(np.asarray(distance_fn(draw)))
        ok = draw[d >= margin]
        if ok.size:
            kept.append(ok)
            have += ok.shape[0]
        if have >= count:
            pts = np.concatenate(kept)[:count]
            return SampleBatch(pts, region=region)
    raise DataError(
        f"off-surface rejection sampling got {have}/{count} points "
        f"after {max_tries} rounds (margin {margin})"
    )
