"""Triangle mesh container, Wavefront OBJ I/O, and mm<->canonical transforms.

Meshes carry vertices in millimeters. Region labels (facial sub-regions
A..F) are per-vertex and persist in a sidecar JSON next to the OBJ, mapping
vertex index to label. The canonical sampling frame is the cube [-1, 1]^3
with geometry scaled to fit [-0.9, 0.9]^3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError

# Canonical query cube; normalized geometry fits inside +-NORMALIZED_EXTENT.
CANONICAL_BOUNDS = (np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))
NORMALIZED_EXTENT = 0.9

REGION_LABELS = ("A", "B", "C", "D", "E", "F")


@dataclass
class TriangleMesh:
    """Vertices (N,3) in mm, faces (M,3) vertex indices, optional unit
    per-vertex normals and per-vertex region labels ('' = unlabeled)."""

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.n_vertices == 0 or self.n_faces == 0

    def validate(self) -> None:
        if self.n_faces and (self.faces.min() < 0 or self.faces.max() >= self.n_vertices):
            raise DataError("face indices out of vertex range")
        if self.normals is not None:
            if self.normals.shape != self.vertices.shape:
                raise DataError("normals shape mismatch")
            lens = np.linalg.norm(self.normals, axis=1)
            if self.n_vertices and np.abs(lens - 1.0).max() > 1e-4:
                raise DataError("normals not unit length")
        if self.labels is not None and len(self.labels) != self.n_vertices:
            raise DataError("labels length mismatch")

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.normals is None else self.normals.copy(),
            None if self.labels is None else self.labels.copy(),
        )


def empty_mesh() -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def face_normals(mesh: TriangleMesh, normalize: bool = True) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    if normalize:
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        n = n / np.maximum(lens, 1e-30)
    return n


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(face_normals(mesh, normalize=False), axis=1)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Angle-weighted per-vertex normals (Thurmer-Wuthrich weighting)."""
    v = mesh.vertices
    f = mesh.faces
    fn = face_normals(mesh)
    out = np.zeros_like(v)
    for c in range(3):
        a = v[f[:, (c + 1) % 3]] - v[f[:, c]]
        b = v[f[:, (c + 2) % 3]] - v[f[:, c]]
        a = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-30)
        b = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-30)
        ang = np.arccos(np.clip((a * b).sum(axis=1), -1.0, 1.0))
        np.add.at(out, f[:, c], fn * ang[:, None])
    lens = np.linalg.norm(out, axis=1, keepdims=True)
    return out / np.maximum(lens, 1e-30)


def drop_degenerate_faces(mesh: TriangleMesh, area_eps: float = 1e-12) -> TriangleMesh:
    if mesh.is_empty:
        return mesh
    keep = face_areas(mesh) > area_eps
    idx = mesh.faces[:, 0] != mesh.faces[:, 1]
    idx &= mesh.faces[:, 1] != mesh.faces[:, 2]
    idx &= mesh.faces[:, 0] != mesh.faces[:, 2]
    mesh.faces = mesh.faces[keep & idx]
    return mesh


def is_watertight(mesh: TriangleMesh) -> bool:
    """True when every undirected edge is shared by exactly two faces."""
    if mesh.is_empty:
        return False
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


@dataclass
class UnitTransform:
    """Maps mm coordinates into the canonical cube: n = (x + translation) * scale."""

    translation: np.ndarray
    scale: float

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.scale = float(self.scale)
        if self.scale <= 0:
            raise DataError(f"scale must be positive, got {self.scale}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) + self.translation) * self.scale

    def invert(self, n: np.ndarray) -> np.ndarray:
        return np.asarray(n, dtype=np.float64) / self.scale - self.translation

    def apply_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        out = mesh.copy()
        out.vertices = self.apply(out.vertices)
        return out

    def invert_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        out = mesh.copy()
        out.vertices = self.invert(out.vertices)
        return out

    def to_json(self) -> dict:
        return {"translation": self.translation.tolist(), "scale": self.scale}

    @classmethod
    def from_json(cls, data: dict) -> "UnitTransform":
        return cls(np.array(data["translation"]), float(data["scale"]))


def normalize(points: np.ndarray | TriangleMesh) -> tuple:
    """Center content at the origin and scale its bounding box into
    [-0.9, 0.9]^3. Returns (normalized copy, UnitTransform)."""
    pts = points.vertices if isinstance(points, TriangleMesh) else np.asarray(points)
    if pts.size == 0:
        raise DataError("cannot normalize empty geometry")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise DataError("degenerate bounding box, zero extent")
    center = 0.5 * (lo + hi)
    tf = UnitTransform(translation=-center, scale=2.0 * NORMALIZED_EXTENT / extent)
    if isinstance(points, TriangleMesh):
        return tf.apply_mesh(points), tf
    return tf.apply(pts), tf


def _labels_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".labels.json")


def save_obj(path, mesh: TriangleMesh) -> None:
    """ASCII OBJ with v/vn/f records; labels go to a sidecar JSON."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# cranio mesh\n")
        v = mesh.vertices
        lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in v]
        fh.write("\n".join(lines))
        fh.write("\n")
        if mesh.normals is not None:
            lines = [f"vn {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.normals]
            fh.write("\n".join(lines))
            fh.write("\n")
            f1 = mesh.faces + 1
            lines = [f"f {a}//{a} {b}//{b} {c}//{c}" for a, b, c in f1]
        else:
            f1 = mesh.faces + 1
            lines = [f"f {a} {b} {c}" for a, b, c in f1]
        fh.write("\n".join(lines))
        fh.write("\n")
    if mesh.labels is not None:
        table = {str(i): lab for i, lab in enumerate(mesh.labels) if lab}
        with open(_labels_path(path), "w") as fh:
            json.dump(table, fh, sort_keys=True)


def load_obj(path, with_labels: bool = True) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise DataError(f"mesh file not found: {path}")
    verts: list[list[float]] = []
    norms: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("v "):
                parts = line.split()
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif line.startswith("vn "):
                parts = line.split()
                norms.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif line.startswith("f "):
                idx = [int(tok.split("/")[0]) for tok in line.split()[1:4]]
                faces.append([i - 1 for i in idx])
    if not verts:
        raise DataError(f"{path}: no vertices")
    normals = None
    if len(norms) == len(verts):
        normals = np.array(norms)
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.maximum(lens, 1e-30)
    mesh = TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64), normals)
    drop_degenerate_faces(mesh)
    labels_file = _labels_path(path)
    if with_labels and labels_file.exists():
        with open(labels_file) as fh:
            table = json.load(fh)
        labels = np.full(mesh.n_vertices, "", dtype="<U1")
        for key, lab in table.items():
            labels[int(key)] = lab
        mesh.labels = labels
    mesh.validate()
    return mesh
