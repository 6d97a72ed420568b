"""Synthetic orthognathic surgery operator.

Bones move rigidly; the facial skin responds through a smooth closed-form
blend of the bone displacements:

    delta_face(x) = sum_b w_b(x) * (T_b(x) - x),
    w_b(x) = g_b(x) / (1 + sum_j g_j(x)),   g_b(x) = exp(-d_b(x)^2 / (2 L^2)),

where d_b is the (current-pose) analytic bone distance and L the soft
tissue falloff length. The 1 + sum(g) normalization keeps the response a
convex under-relaxation of the bone moves, so skin never overshoots where
both bones are close. The field is C^1 in x, nonlinear in position, and
exactly correspondence-preserving (vertices are displaced in place).

Plans compose: applying plan B to the output of plan A equals evaluating
the closed-form composite field at the original vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..geometry import TriangleMesh
from .anatomy import Subject

BONES = ("maxilla", "mandible")

MAX_TRANSLATION_MM = 10.0
MAX_ROTATION_RAD = np.radians(10.0)


def rotation_from_axis_angle(axis_angle: np.ndarray) -> np.ndarray:
    """Rodrigues rotation; axis_angle = axis * angle(rad)."""
    aa = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(aa)
    if angle < 1e-12:
        return np.eye(3)
    k = aa / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


@dataclass
class RigidTransform:
    """x -> x @ R.T + t"""

    rot: np.ndarray
    trans: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def about_pivot(cls, axis_angle, translation, pivot) -> "RigidTransform":
        rot = rotation_from_axis_angle(axis_angle)
        pivot = np.asarray(pivot, dtype=np.float64)
        trans = pivot - rot @ pivot + np.asarray(translation, dtype=np.float64)
        return cls(rot, trans)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts) @ self.rot.T + self.trans

    def compose_after(self, first: "RigidTransform") -> "RigidTransform":
        """Transform equal to: apply ``first``, then ``self``."""
        return RigidTransform(self.rot @ first.rot, self.rot @ first.trans + self.trans)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rot.T, -self.rot.T @ self.trans)


@dataclass
class BoneMove:
    axis_angle: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.axis_angle = np.asarray(self.axis_angle, dtype=np.float64).reshape(3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def validate(self) -> None:
        if np.linalg.norm(self.translation) > MAX_TRANSLATION_MM + 1e-9:
            raise DataError(
                f"bone translation {np.linalg.norm(self.translation):.2f} mm "
                f"exceeds {MAX_TRANSLATION_MM} mm"
            )
        if np.linalg.norm(self.axis_angle) > MAX_ROTATION_RAD + 1e-9:
            raise DataError("bone rotation exceeds 10 degrees")

    def to_json(self) -> dict:
        return {
            "axis_angle": self.axis_angle.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "BoneMove":
        return cls(np.array(data["axis_angle"]), np.array(data["translation"]))


@dataclass
class SurgeryPlan:
    maxilla: BoneMove = field(default_factory=BoneMove)
    mandible: BoneMove = field(default_factory=BoneMove)
    falloff_mm: float = 15.0

    def validate(self) -> None:
        if self.falloff_mm <= 0:
            raise DataError("soft-tissue falloff must be positive")
        self.maxilla.validate()
        self.mandible.validate()

    def move(self, bone: str) -> BoneMove:
        return getattr(self, bone)

    @classmethod
    def identity(cls) -> "SurgeryPlan":
        return cls()

    @classmethod
    def mandible_advancement(cls, mm: float = 5.0) -> "SurgeryPlan":
        return cls(mandible=BoneMove(translation=np.array([0.0, 0.0, mm])))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "SurgeryPlan":
        md = BoneMove(
            axis_angle=np.array([rng.uniform(-0.06, 0.06), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)]),
            translation=np.array(
                [rng.uniform(-1.2, 1.2), rng.uniform(-2.0, 2.0), rng.uniform(1.0, 7.5)]
            ),
        )
        mx = BoneMove(
            axis_angle=np.array([rng.uniform(-0.03, 0.03), 0.0, rng.uniform(-0.02, 0.02)]),
            translation=np.array(
                [rng.uniform(-0.8, 0.8), rng.uniform(-1.5, 1.5), rng.uniform(0.0, 3.0)]
            ),
        )
        return cls(maxilla=mx, mandible=md)

    def to_json(self) -> dict:
        return {
            "maxilla": self.maxilla.to_json(),
            "mandible": self.mandible.to_json(),
            "falloff_mm": self.falloff_mm,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SurgeryPlan":
        return cls(
            maxilla=BoneMove.from_json(data["maxilla"]),
            mandible=BoneMove.from_json(data["mandible"]),
            falloff_mm=float(data["falloff_mm"]),
        )


def identity_state() -> dict[str, RigidTransform]:
    return {b: RigidTransform.identity() for b in BONES}


def plan_transforms(
    subject: Subject, plan: SurgeryPlan, state: dict[str, RigidTransform]
) -> dict[str, RigidTransform]:
    """World-frame rigid transform each bone undergoes, pivoting about the
    bone's current (already-operated) pivot position."""
    out = {}
    for bone in BONES:
        pivot_now = state[bone].apply(subject.pivots_mm[bone])
        move = plan.move(bone)
        out[bone] = RigidTransform.about_pivot(move.axis_angle, move.translation, pivot_now)
    return out


def face_displacement_field(
    subject: Subject, plan: SurgeryPlan, state: dict[str, RigidTransform] | None = None
):
    """Closed-form skin displacement for one plan applied at ``state``."""
    state = state if state is not None else identity_state()
    steps = plan_transforms(subject, plan, state)
    ell2 = 2.0 * plan.falloff_mm**2

    def delta(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        g_total = np.zeros(pts.shape[0])
        accum = np.zeros_like(pts)
        for bone in BONES:
            local = state[bone].inverse().apply(pts)
            d = subject.shapes[bone].sdf(local)
            g = np.exp(-(d * d) / ell2)
            accum += g[:, None] * (steps[bone].apply(pts) - pts)
            g_total += g
        return accum / (1.0 + g_total)[:, None]

    return delta


def apply_plan(
    subject: Subject,
    meshes: dict[str, TriangleMesh],
    plan: SurgeryPlan,
    state: dict[str, RigidTransform] | None = None,
):
    """Displace current-pose meshes under one plan.

    Returns (post meshes, per-region per-vertex displacement, new state).
    Topology is untouched, so correspondences are exact by construction.
    """
    plan.validate()
    state = state if state is not None else identity_state()
    steps = plan_transforms(subject, plan, state)
    post: dict[str, TriangleMesh] = {}
    deltas: dict[str, np.ndarray] = {}
    for bone in BONES:
        mesh = meshes[bone]
        moved = steps[bone].apply(mesh.vertices)
        deltas[bone] = moved - mesh.vertices
        out = mesh.copy()
        out.vertices = moved
        if out.normals is not None:
            out.normals = out.normals @ steps[bone].rot.T
        post[bone] = out
    face = meshes["face"]
    delta = face_displacement_field(subject, plan, state)(face.vertices)
    deltas["face"] = delta
    out = face.copy()
    out.vertices = face.vertices + delta
    out.normals = None  # recompute on demand; the blend is non-rigid
    post["face"] = out
    new_state = {b: steps[b].compose_after(state[b]) for b in BONES}
    return post, deltas, new_state


def composite_face_displacement(subject: Subject, plans: list[SurgeryPlan]):
    """Direct evaluation of the composition of several plans on pre-op skin
    coordinates; equals sequential application of the individual fields."""

    def delta(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        state = identity_state()
        cur = pts
        total = np.zeros_like(pts)
        for plan in plans:
            step = face_displacement_field(subject, plan, state)(cur)
            total += step
            cur = cur + step
            moves = plan_transforms(subject, plan, state)
            state = {b: moves[b].compose_after(state[b]) for b in BONES}
        return total

    return delta
