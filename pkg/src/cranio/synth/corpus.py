"""Corpus generation: the on-disk case layout consumed by training and the
prediction pipeline.

Layout:

    <corpus>/corpus.json
    <corpus>/<split>/case_<id>/
        pre_face.obj (+ .labels.json)   preoperative skin
        pre_maxilla.obj, pre_mandible.obj
        plan_maxilla.obj, plan_mandible.obj   planned (= achieved) skull
        gt_post_face.obj (+ .labels.json)     postoperative skin
        case.json   ids, coefficients, plan, landmarks (mm), transform

The first train and test cases carry fixed plans (identity and a pure 5 mm
mandibular advancement) so null-surgery and advancement recovery checks
always have their cases; the rest draw random plans.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import DataError
from ..geometry import save_obj
from .anatomy import (
    REGIONS,
    SubjectParams,
    build_subject,
    extract_region_meshes,
    family_transform,
)
from .surgery_op import SurgeryPlan, apply_plan

SPLITS = ("train", "test", "val")
MANIFEST_NAME = "corpus.json"


def _case_plan(split: str, index: int, rng: np.random.Generator) -> SurgeryPlan:
    if index == 0:
        return SurgeryPlan.identity()
    if index == 1:
        return SurgeryPlan.mandible_advancement(5.0)
    return SurgeryPlan.random(rng)


def generate_case(case_dir: Path, subject_seed: int, plan: SurgeryPlan, split: str, resolution: int) -> dict:
    params = SubjectParams.random(subject_seed)
    subject = build_subject(params)
    pre = extract_region_meshes(subject, resolution)
    post, _, _ = apply_plan(subject, pre, plan)
    post["face"].labels = pre["face"].labels

    case_dir.mkdir(parents=True, exist_ok=True)
    save_obj(case_dir / "pre_face.obj", pre["face"])
    save_obj(case_dir / "pre_maxilla.obj", pre["maxilla"])
    save_obj(case_dir / "pre_mandible.obj", pre["mandible"])
    save_obj(case_dir / "plan_maxilla.obj", post["maxilla"])
    save_obj(case_dir / "plan_mandible.obj", post["mandible"])
    save_obj(case_dir / "gt_post_face.obj", post["face"])

    meta = {
        "case_id": case_dir.name,
        "split": split,
        "subject_seed": subject_seed,
        "coeffs": params.coeffs,
        "plan": plan.to_json(),
        "landmarks_mm": {r: subject.landmarks_mm[r].tolist() for r in REGIONS},
        "pivots_mm": {b: subject.pivots_mm[b].tolist() for b in subject.pivots_mm},
        "transform": family_transform().to_json(),
        "resolution": resolution,
    }
    with open(case_dir / "case.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
    return meta


def gen_corpus(
    out_dir,
    n_train: int = 20,
    n_test: int = 4,
    n_val: int = 4,
    seed: int = 0,
    resolution: int = 192,
) -> dict:
    """Reproducible corpus tree; returns the manifest."""
    counts = {"train": n_train, "test": n_test, "val": n_val}
    if min(counts.values()) < 0 or n_train < 1:
        raise DataError("corpus needs at least one training case")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits: dict[str, list[str]] = {}
    case_counter = 0
    for split in SPLITS:
        splits[split] = []
        for i in range(counts[split]):
            rng = np.random.default_rng([seed, case_counter, 0xCA5E])
            plan = _case_plan(split, i, rng)
            case_dir = out_dir / split / f"case_{i:04d}"
            generate_case(case_dir, subject_seed=seed * 100_000 + case_counter, plan=plan, split=split, resolution=resolution)
            splits[split].append(case_dir.name)
            case_counter += 1
    manifest = {
        "version": __version__,
        "seed": seed,
        "resolution": resolution,
        "splits": splits,
        "transform": family_transform().to_json(),
    }
    with open(out_dir / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest


def corpus_tree_hash(root) -> str:
    """SHA-256 over every file's relative path and bytes (sorted)."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()
