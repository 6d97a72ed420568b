"""Procedural synthetic craniofacial anatomy.

Each subject is three blended-primitive shapes in a shared head frame
(millimeters, +x subject-left, +y up, +z front):

* face: skin ellipsoid plus nose/brow/lip/chin/cheek bumps,
* maxilla: upper dental arch (arc capsule) with nasal spine and zygomatic
  processes,
* mandible: lower arch with chin bone, rami, and condyles.

All primitives carry exact distances, so every region SDF is Eikonal away
from the smooth-min blend bands (see primitives.BlendedShape). A bump
coefficient of zero omits its primitive entirely: the all-zero subject is
the pure base geometry. Landmarks are found by bisecting region SDFs along
named rays, which puts them on the zero level set to sub-micrometer
precision, with per-region counts fixed at 39/43/16.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..geometry import TriangleMesh, UnitTransform, evaluate_grid_banded, marching_cubes_volume
from .primitives import (
    BlendedShape,
    arc_prim,
    capsule_prim,
    ellipsoid_prim,
    sphere_prim,
)

REGIONS = ("face", "maxilla", "mandible")
LANDMARK_COUNTS = {"face": 39, "maxilla": 43, "mandible": 16}

BLEND_K = 2.5  # mm; smooth-min band width shared by all regions

# Canonical family frame: every subject (plus <=10 mm surgical moves) fits
# inside +-HEAD_HALF_EXTENT_MM, mapped onto +-0.9 in normalized coordinates.
HEAD_HALF_EXTENT_MM = 95.0


def family_transform() -> UnitTransform:
    return UnitTransform(translation=np.zeros(3), scale=0.9 / HEAD_HALF_EXTENT_MM)


# Draw ranges; a coefficient may also be exactly 0 (bump omitted / base value).
COEFF_RANGES: dict[str, tuple[float, float]] = {
    # face
    "head_width": (-1.0, 1.0),
    "head_height": (-1.0, 1.0),
    "head_depth": (-1.0, 1.0),
    "nose_size": (0.5, 1.6),
    "nose_length": (0.0, 1.0),
    "brow_size": (0.3, 1.2),
    "lip_size": (0.4, 1.3),
    "chin_size": (0.4, 1.4),
    "chin_forward": (-1.0, 1.0),
    "cheek_left": (0.3, 1.3),
    "cheek_right": (0.3, 1.3),
    "face_asym": (-1.0, 1.0),
    # maxilla
    "mx_radius": (-1.0, 1.0),
    "mx_height": (-1.0, 1.0),
    "mx_depth": (-1.0, 1.0),
    "mx_tube": (-1.0, 1.0),
    "mx_angle": (-1.0, 1.0),
    "mx_spine": (0.4, 1.2),
    "mx_zygo_left": (0.4, 1.3),
    "mx_zygo_right": (0.4, 1.3),
    "mx_asym": (-1.0, 1.0),
    # mandible
    "md_radius": (-1.0, 1.0),
    "md_drop": (-1.0, 1.0),
    "md_protrusion": (-1.0, 1.0),
    "md_tube": (-1.0, 1.0),
    "md_angle": (-1.0, 1.0),
    "md_chin": (0.4, 1.3),
    "md_ramus": (-1.0, 1.0),
    "md_condyle": (-1.0, 1.0),
    "md_ramus_height": (-1.0, 1.0),
    "md_asym": (-1.0, 1.0),
}


@dataclass
class SubjectParams:
    seed: int
    coeffs: dict[str, float] = field(default_factory=dict)

    @classmethod
    def random(cls, seed: int) -> "SubjectParams":
        rng = np.random.default_rng([0x5EED, seed])
        coeffs = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in COEFF_RANGES.items()}
        return cls(seed=seed, coeffs=coeffs)

    @classmethod
    def zero(cls, seed: int = 0) -> "SubjectParams":
        return cls(seed=seed, coeffs={k: 0.0 for k in COEFF_RANGES})

    def get(self, name: str) -> float:
        return float(self.coeffs.get(name, 0.0))

    def validate(self) -> None:
        for k, val in self.coeffs.items():
            if k not in COEFF_RANGES:
                raise DataError(f"unknown shape coefficient {k!r}")
            lo, hi = COEFF_RANGES[k]
            if val != 0.0 and not (lo - 1e-9 <= val <= hi + 1e-9):
                raise DataError(f"coefficient {k}={val} outside [{lo}, {hi}]")


def _rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass
class Subject:
    """Analytic anatomy: SDFs, landmarks, pivots, and labeling features."""

    params: SubjectParams
    shapes: dict[str, BlendedShape]
    landmarks_mm: dict[str, np.ndarray]
    landmark_names: dict[str, list[str]]
    pivots_mm: dict[str, np.ndarray]  # surgery rotation pivots per bone
    features: dict[str, np.ndarray | float]  # face zone anchors for labels

    def sdf(self, region: str):
        return self.shapes[region].sdf

    def label_face_vertices(self, verts_mm: np.ndarray) -> np.ndarray:
        """Facial sub-regions: A forehead, B nose, C lips, D chin, E/F cheeks."""
        f = self.features
        labels = np.full(verts_mm.shape[0], "", dtype="<U1")
        x, y, z = verts_mm[:, 0], verts_mm[:, 1], verts_mm[:, 2]
        rz = float(f["rz"])
        front = z > 0.30 * rz
        cheek = front & (y > float(f["chin_y"]) + 4.0) & (y < float(f["brow_y"]) - 3.0)
        labels[cheek & (x > 2.0)] = "E"
        labels[cheek & (x < -2.0)] = "F"
        # forehead proper: central front, above the brow ridge
        forehead = front & (y >= float(f["brow_y"]) + 5.0) & (y < 0.72 * float(f["ry"]))
        labels[forehead & (np.abs(x) <= 0.55 * float(f["rx"]))] = "A"
        chin_d = np.linalg.norm(verts_mm - f["chin_center"], axis=1)
        labels[chin_d < f["chin_r"] + 6.0] = "D"
        lip = f["lip_ab"]
        t = np.clip(((verts_mm - lip[0]) @ (lip[1] - lip[0])) / ((lip[1] - lip[0]) @ (lip[1] - lip[0])), 0, 1)
        lip_d = np.linalg.norm(verts_mm - (lip[0] + t[:, None] * (lip[1] - lip[0])), axis=1)
        labels[lip_d < f["lip_r"] + 4.5] = "C"
        nose_d = np.linalg.norm(verts_mm - f["nose_center"], axis=1)
        labels[nose_d < f["nose_r"] + 5.0] = "B"
        return labels


def _ellipsoid_surface_point(radii: np.ndarray, direction: np.ndarray) -> np.ndarray:
    d = direction / np.linalg.norm(direction)
    t = 1.0 / np.sqrt(np.sum((d / radii) ** 2))
    return t * d


def _bump(name: str, radii: np.ndarray, direction, r_bump: float, outward_frac: float = 0.45):
    """Sphere bump tangent to the base ellipsoid along ``direction``."""
    s = _ellipsoid_surface_point(radii, np.asarray(direction, dtype=np.float64))
    n = s / np.linalg.norm(s)
    center = s - (1.0 - outward_frac) * r_bump * n
    return sphere_prim(name, center, r_bump), center


def build_face(params: SubjectParams):
    radii = np.array(
        [
            39.0 * (1.0 + 0.06 * params.get("head_width")),
            50.0 * (1.0 + 0.06 * params.get("head_height")),
            42.0 * (1.0 + 0.06 * params.get("head_depth")),
        ]
    )
    asym = 1.5 * params.get("face_asym")
    prims = [ellipsoid_prim("skull_skin", (0.0, 0.0, 0.0), radii)]
    features: dict[str, np.ndarray | float] = {
        "rx": radii[0], "ry": radii[1], "rz": radii[2],
    }

    nose_r = 4.0 + 2.0 * params.get("nose_size") if params.get("nose_size") else 0.0
    nose_dir = np.array([asym * 0.04, -6.0 / radii[1], 1.0])
    if nose_r > 0:
        frac = 0.42 + 0.12 * params.get("nose_length")
        prim, center = _bump("nose", radii, nose_dir, nose_r, outward_frac=frac)
        prims.append(prim)
        features["nose_center"] = center
    else:
        features["nose_center"] = _ellipsoid_surface_point(radii, nose_dir)
    features["nose_r"] = nose_r

    brow_y = 14.0
    brow_r = 3.5 + 2.0 * params.get("brow_size") if params.get("brow_size") else 0.0
    if brow_r > 0:
        za = _ellipsoid_surface_point(radii, np.array([-11.0, brow_y, 34.0]))
        zb = _ellipsoid_surface_point(radii, np.array([11.0, brow_y, 34.0]))
        a = za - np.array([0, 0, 0.55 * brow_r])
        b = zb - np.array([0, 0, 0.55 * brow_r])
        prims.append(capsule_prim("brow", a, b, brow_r))
    features["brow_y"] = brow_y

    lip_y = -20.0
    lip_r = 3.2 + 1.5 * params.get("lip_size") if params.get("lip_size") else 0.0
    la = _ellipsoid_surface_point(radii, np.array([-8.0 + asym, lip_y, 36.0]))
    lb = _ellipsoid_surface_point(radii, np.array([8.0 + asym, lip_y, 36.0]))
    if lip_r > 0:
        prims.append(capsule_prim("lips", la - np.array([0, 0, 0.5 * lip_r]), lb - np.array([0, 0, 0.5 * lip_r]), lip_r))
    features["lip_ab"] = np.stack([la, lb])
    features["lip_r"] = lip_r
    features["lip_y"] = lip_y

    chin_r = 5.0 + 2.0 * params.get("chin_size") if params.get("chin_size") else 0.0
    chin_dir = np.array([0.6 * asym * 0.02, -0.86, 0.55 + 0.06 * params.get("chin_forward")])
    if chin_r > 0:
        prim, center = _bump("chin", radii, chin_dir, chin_r, outward_frac=0.42 + 0.08 * params.get("chin_forward"))
        prims.append(prim)
        features["chin_center"] = center
    else:
        features["chin_center"] = _ellipsoid_surface_point(radii, chin_dir)
    features["chin_r"] = chin_r
    features["chin_y"] = float(features["chin_center"][1])

    for side, coeff in (("left", "cheek_left"), ("right", "cheek_right")):
        r = 7.0 + 2.5 * params.get(coeff) if params.get(coeff) else 0.0
        if r > 0:
            sx = 1.0 if side == "left" else -1.0
            prim, _ = _bump(f"cheek_{side}", radii, np.array([sx * 0.62, -0.18, 0.62]), r, outward_frac=0.30)
            prims.append(prim)

    return BlendedShape(prims, BLEND_K), features


def build_maxilla(params: SubjectParams):
    R = 19.0 * (1.0 + 0.08 * params.get("mx_radius"))
    cy = -16.0 + 1.5 * params.get("mx_height")
    cz = 4.0 + 1.5 * params.get("mx_depth")
    tube = 5.0 * (1.0 + 0.12 * params.get("mx_tube"))
    half_angle = np.radians(95.0 + 6.0 * params.get("mx_angle"))
    rot = _rot_y(np.radians(2.0) * params.get("mx_asym"))
    u = rot @ np.array([0.0, 0.0, 1.0])  # theta=0 points forward
    v = rot @ np.array([1.0, 0.0, 0.0])
    center = np.array([0.0, cy, cz])
    prims = [arc_prim("arch", center, u, v, R, half_angle, tube)]

    spine_r = 2.0 + 1.5 * params.get("mx_spine") if params.get("mx_spine") else 0.0
    if spine_r > 0:
        prims.append(sphere_prim("nasal_spine", center + np.array([0.0, 4.0, R - 1.0]), spine_r))
    for side, coeff, sx in (("left", "mx_zygo_left", 1.0), ("right", "mx_zygo_right", -1.0)):
        r = 3.5 + 1.5 * params.get(coeff) if params.get(coeff) else 0.0
        if r > 0:
            prims.append(
                sphere_prim(f"zygo_{side}", np.array([sx * (R + 1.0), cy + 8.0, cz - 6.0]), r)
            )
    pivot = center.copy()
    arc = {"center": center, "u": u, "v": v, "R": R, "half_angle": half_angle}
    return BlendedShape(prims, 2.0), pivot, arc


def build_mandible(params: SubjectParams):
    R = 18.0 * (1.0 + 0.08 * params.get("md_radius"))
    cy = -31.0 + 1.5 * params.get("md_drop")
    cz = 0.0 + 2.0 * params.get("md_protrusion")
    tube = 4.5 * (1.0 + 0.12 * params.get("md_tube"))
    half_angle = np.radians(105.0 + 6.0 * params.get("md_angle"))
    rot = _rot_y(np.radians(2.0) * params.get("md_asym"))
    u = rot @ np.array([0.0, 0.0, 1.0])
    v = rot @ np.array([1.0, 0.0, 0.0])
    center = np.array([0.0, cy, cz])
    prims = [arc_prim("body", center, u, v, R, half_angle, tube)]

    chin_r = 4.5 + 1.5 * params.get("md_chin") if params.get("md_chin") else 0.0
    if chin_r > 0:
        prims.append(sphere_prim("chin_bone", center + np.array([0.0, -1.5, R + 0.5]), chin_r))

    cond_y = -8.0 + 2.0 * params.get("md_ramus_height")
    ramus_tube = 3.2 + 0.8 * params.get("md_ramus")
    cond_r = 3.8 + 0.8 * params.get("md_condyle")
    condyles = {}
    for sx, side in ((1.0, "left"), (-1.0, "right")):
        end = center + R * (np.cos(half_angle) * u + sx * np.sin(half_angle) * v)
        condyle = np.array([sx * (R + 1.0), cond_y, cz - R * 0.45])
        prims.append(capsule_prim(f"ramus_{side}", end, condyle, ramus_tube))
        prims.append(sphere_prim(f"condyle_{side}", condyle, cond_r))
        condyles[side] = condyle
    pivot = 0.5 * (condyles["left"] + condyles["right"])
    arc = {"center": center, "u": u, "v": v, "R": R, "half_angle": half_angle}
    return BlendedShape(prims, 2.0), pivot, arc, condyles


def _ray_surface_points(
    shape: BlendedShape,
    anchors: np.ndarray,
    dirs: np.ndarray,
    t_max: float = 90.0,
    step: float = 1.0,
) -> np.ndarray:
    """Outermost surface crossing along each ray, bisected to ~1e-9 mm.

    Anchors must be inside the shape. The dense march finds the last
    inside-sample so rays through bumps land on the outer surface.
    """
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    anchors = np.broadcast_to(anchors, dirs.shape).astype(np.float64)
    ts = np.arange(0.0, t_max, step)
    pts = anchors[:, None, :] + ts[None, :, None] * dirs[:, None, :]
    d = shape.sdf(pts.reshape(-1, 3)).reshape(dirs.shape[0], ts.size)
    if np.any(d[:, 0] >= 0):
        bad = int(np.argmax(d[:, 0] >= 0))
        raise DataError(f"landmark ray anchor {bad} is not inside the shape")
    if np.any(d[:, -1] <= 0):
        raise DataError("landmark ray march did not exit the shape")
    inside = d < 0
    last_in = inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1)
    t_lo = ts[last_in]
    t_hi = t_lo + step
    for _ in range(60):
        mid = 0.5 * (t_lo + t_hi)
        dm = shape.sdf(anchors + mid[:, None] * dirs)
        is_in = dm < 0
        t_lo = np.where(is_in, mid, t_lo)
        t_hi = np.where(is_in, t_hi, mid)
    return anchors + (0.5 * (t_lo + t_hi))[:, None] * dirs


def _face_landmark_rays(features) -> tuple[list[str], np.ndarray]:
    nose = np.asarray(features["nose_center"], dtype=np.float64)
    chin = np.asarray(features["chin_center"], dtype=np.float64)
    lip = np.asarray(features["lip_ab"], dtype=np.float64)
    lip_mid = lip.mean(axis=0)
    names: list[str] = []
    dirs: list[np.ndarray] = []

    def add(name, d):
        names.append(name)
        dirs.append(np.asarray(d, dtype=np.float64))

    add("nose_tip", nose)
    add("nasion", nose + [0.0, 14.0, -2.0])
    add("nose_bridge", nose + [0.0, 8.0, -1.0])
    add("subnasale", nose + [0.0, -8.0, -2.0])
    add("nose_wing_left", nose + [7.0, -3.0, -2.0])
    add("nose_wing_right", nose + [-7.0, -3.0, -2.0])
    add("philtrum", 0.6 * nose + 0.4 * lip_mid)
    add("lip_top_mid", lip_mid + [0.0, 3.0, 0.0])
    add("lip_bottom_mid", lip_mid + [0.0, -3.5, 0.0])
    add("lip_corner_left", lip[0] * 1.35)
    add("lip_corner_right", lip[1] * 1.35)
    add("chin_pogonion", chin)
    add("chin_left", chin + [9.0, 2.0, -3.0])
    add("chin_right", chin + [-9.0, 2.0, -3.0])
    add("menton", chin + [0.0, -6.0, -6.0])
    add("brow_mid", [0.0, 15.0, 36.0])
    add("brow_left", [12.0, 15.0, 33.0])
    add("brow_right", [-12.0, 15.0, 33.0])
    add("eye_left", [13.0, 6.0, 33.0])
    add("eye_right", [-13.0, 6.0, 33.0])
    add("forehead_mid", [0.0, 30.0, 28.0])
    add("forehead_left", [14.0, 29.0, 24.0])
    add("forehead_right", [-14.0, 29.0, 24.0])
    add("temple_left", [26.0, 16.0, 16.0])
    add("temple_right", [-26.0, 16.0, 16.0])
    add("cheek_left", [24.0, -7.0, 24.0])
    add("cheek_right", [-24.0, -7.0, 24.0])
    add("cheekbone_left", [26.0, 2.0, 20.0])
    add("cheekbone_right", [-26.0, 2.0, 20.0])
    add("jaw_angle_left", [24.0, -26.0, 8.0])
    add("jaw_angle_right", [-24.0, -26.0, 8.0])
    add("jawline_left1", [17.0, -33.0, 18.0])
    add("jawline_left2", [10.0, -38.0, 22.0])
    add("jawline_right1", [-17.0, -33.0, 18.0])
    add("jawline_right2", [-10.0, -38.0, 22.0])
    add("ear_left", [34.0, 0.0, -2.0])
    add("ear_right", [-34.0, 0.0, -2.0])
    add("crown", [0.0, 40.0, 6.0])
    add("occiput", [0.0, 8.0, -36.0])
    assert len(names) == LANDMARK_COUNTS["face"], len(names)
    return names, np.stack(dirs)


def _arc_point(arc: dict, angle_rad: float) -> np.ndarray:
    return arc["center"] + arc["R"] * (
        np.cos(angle_rad) * arc["u"] + np.sin(angle_rad) * arc["v"]
    )


def _maxilla_landmark_rays(arc: dict) -> tuple[list[str], np.ndarray, np.ndarray]:
    names: list[str] = []
    anchors: list[np.ndarray] = []
    dirs: list[np.ndarray] = []

    def add(name, anchor, d):
        names.append(name)
        anchors.append(np.asarray(anchor, dtype=np.float64))
        dirs.append(np.asarray(d, dtype=np.float64))

    lim = np.degrees(arc["half_angle"]) - 8.0
    for i, a in enumerate(np.linspace(-lim, lim, 16)):
        rad = np.radians(a)
        add(f"alveolar_{i:02d}", _arc_point(arc, rad), [np.sin(rad), -0.5, np.cos(rad)])
    for i, a in enumerate(np.linspace(-lim + 4, lim - 4, 16)):
        rad = np.radians(a)
        add(f"arch_top_{i:02d}", _arc_point(arc, rad), [0.35 * np.sin(rad), 1.0, 0.35 * np.cos(rad)])
    front = _arc_point(arc, 0.0)
    endl = _arc_point(arc, arc["half_angle"] - 0.05)
    endr = _arc_point(arc, -arc["half_angle"] + 0.05)
    add("spine_anterior", front, [0.0, 0.5, 1.0])
    add("arch_front_low", front, [0.0, -1.0, 0.6])
    add("arch_back_left", endl, [0.4, 0.0, -1.0])
    add("arch_back_right", endr, [-0.4, 0.0, -1.0])
    add("zygo_left", endl, [1.0, 0.6, -0.2])
    add("zygo_right", endr, [-1.0, 0.6, -0.2])
    add("palate_front", front, [0.0, -1.0, -0.3])
    add("palate_left", _arc_point(arc, np.radians(55)), [0.0, -1.0, -0.2])
    add("palate_right", _arc_point(arc, np.radians(-55)), [0.0, -1.0, -0.2])
    add("tuberosity_left", endl, [0.6, -0.7, -0.5])
    add("tuberosity_right", endr, [-0.6, -0.7, -0.5])
    assert len(names) == LANDMARK_COUNTS["maxilla"], len(names)
    return names, np.stack(anchors), np.stack(dirs)


def _mandible_landmark_rays(arc: dict, condyles: dict) -> tuple[list[str], np.ndarray, np.ndarray]:
    front = _arc_point(arc, 0.0)
    endl = _arc_point(arc, arc["half_angle"] - 0.05)
    endr = _arc_point(arc, -arc["half_angle"] + 0.05)
    midl = _arc_point(arc, np.radians(45))
    midr = _arc_point(arc, np.radians(-45))
    cl = condyles["left"]
    cr = condyles["right"]
    rows = [
        ("chin_pogonion", front, [0.0, -0.15, 1.0]),
        ("menton", front, [0.0, -1.0, 0.3]),
        ("alveolar_front", front, [0.0, 1.0, 0.4]),
        ("body_left", midl, [0.7, -0.2, 0.7]),
        ("body_right", midr, [-0.7, -0.2, 0.7]),
        ("angle_left", endl, [0.8, -0.6, -0.5]),
        ("angle_right", endr, [-0.8, -0.6, -0.5]),
        ("condyle_left", cl, [0.3, 1.0, -0.2]),
        ("condyle_right", cr, [-0.3, 1.0, -0.2]),
        ("ramus_left", 0.5 * (endl + cl), [1.0, 0.1, -0.2]),
        ("ramus_right", 0.5 * (endr + cr), [-1.0, 0.1, -0.2]),
        ("midbody_left", midl, [0.3, -0.9, 0.4]),
        ("midbody_right", midr, [-0.3, -0.9, 0.4]),
        ("gonion_left", endl, [0.9, 0.0, -0.9]),
        ("gonion_right", endr, [-0.9, 0.0, -0.9]),
        ("symphysis_inner", front, [0.0, 0.4, -1.0]),
    ]
    names = [r[0] for r in rows]
    anchors = np.stack([np.asarray(r[1], dtype=np.float64) for r in rows])
    dirs = np.stack([np.asarray(r[2], dtype=np.float64) for r in rows])
    assert len(names) == LANDMARK_COUNTS["mandible"], len(names)
    return names, anchors, dirs


def build_subject(params: SubjectParams) -> Subject:
    params.validate()
    face, features = build_face(params)
    maxilla, mx_pivot, mx_arc = build_maxilla(params)
    mandible, md_pivot, md_arc, condyles = build_mandible(params)
    shapes = {"face": face, "maxilla": maxilla, "mandible": mandible}

    face_names, face_dirs = _face_landmark_rays(features)
    mx_names, mx_anchors, mx_dirs = _maxilla_landmark_rays(mx_arc)
    md_names, md_anchors, md_dirs = _mandible_landmark_rays(md_arc, condyles)

    landmarks = {
        "face": _ray_surface_points(face, np.zeros(3), face_dirs),
        "maxilla": _ray_surface_points(maxilla, mx_anchors, mx_dirs, t_max=30.0, step=0.5),
        "mandible": _ray_surface_points(mandible, md_anchors, md_dirs, t_max=30.0, step=0.5),
    }
    return Subject(
        params=params,
        shapes=shapes,
        landmarks_mm=landmarks,
        landmark_names={"face": face_names, "maxilla": mx_names, "mandible": md_names},
        pivots_mm={"maxilla": mx_pivot, "mandible": md_pivot},
        features=features,
    )


def extract_region_meshes(subject: Subject, resolution: int = 192) -> dict[str, TriangleMesh]:
    """Marching-cubes meshes per region over each region's padded bounds."""
    out: dict[str, TriangleMesh] = {}
    for region in REGIONS:
        shape = subject.shapes[region]
        lo, hi = shape.aabb(pad=6.0)
        vol = evaluate_grid_banded(shape.sdf, (lo, hi), resolution, coarse_factor=4)
        mesh = marching_cubes_volume(vol, (lo, hi))
        if mesh.is_empty:
            raise DataError(f"region {region} produced an empty mesh")
        if region == "face":
            mesh.labels = subject.label_face_vertices(mesh.vertices)
        out[region] = mesh
    return out


def gen_subject(params: SubjectParams, resolution: int = 192):
    """Subject plus extracted meshes; deterministic in params."""
    subject = build_subject(params)
    meshes = extract_region_meshes(subject, resolution)
    return subject, meshes
