"""Procedural synthetic anatomy: shape families with exact SDFs, landmark
and label generation, the rigid-bone surgery operator with closed-form skin
response, and corpus generation."""

from .anatomy import (
    COEFF_RANGES,
    LANDMARK_COUNTS,
    REGIONS,
    HEAD_HALF_EXTENT_MM,
    Subject,
    SubjectParams,
    build_subject,
    extract_region_meshes,
    family_transform,
    gen_subject,
)
from .corpus import corpus_tree_hash, gen_corpus, generate_case
from .surgery_op import (
    BONES,
    BoneMove,
    RigidTransform,
    SurgeryPlan,
    apply_plan,
    composite_face_displacement,
    face_displacement_field,
    identity_state,
)

__all__ = [
    "BONES",
    "COEFF_RANGES",
    "HEAD_HALF_EXTENT_MM",
    "LANDMARK_COUNTS",
    "REGIONS",
    "BoneMove",
    "RigidTransform",
    "Subject",
    "SubjectParams",
    "SurgeryPlan",
    "apply_plan",
    "build_subject",
    "composite_face_displacement",
    "corpus_tree_hash",
    "extract_region_meshes",
    "face_displacement_field",
    "family_transform",
    "gen_corpus",
    "gen_subject",
    "generate_case",
    "identity_state",
]
