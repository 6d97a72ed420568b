"""Auto-decoder training and latent fitting for the shape module.

Training jointly optimizes the ensemble networks, the landmark position
nets, per-subject global codes (shared across the three regions), and
per-subject-region local codes. Every optimizer step draws a fresh
minibatch of subjects and sample points from precomputed pools, making the
paper-style "epoch" one Adam step over one fresh batch.

Landmark anchors: for the first ``lmk_warmup_steps`` the ensembles consume
ground-truth landmarks while the position nets learn the regression; after
warmup the anchors switch to (stop-gradient) position-net predictions,
matching what inference can see. Fitting freezes all networks and
optimizes codes with the same loss minus the landmark term.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..errors import DataError, NumericsError
from ..geometry import (
    CANONICAL_BOUNDS,
    MeshDistanceField,
    TriangleMesh,
    UnitTransform,
    load_obj,
    sample_offsurface,
    sample_surface,
)
from ..nets import AdamState, MlpGrads, adam_step
from ..runlog import JsonlLogger, write_loss_history, write_manifest
from ..synth.anatomy import REGIONS
from .decoder import (
    RegionConfig,
    ShapeDecoder,
    ShapeLatent,
    decoder_from_bytes,
    decoder_to_bytes,
    init_decoder,
    init_mlp,
)
from .loss import (
    RegionBatch,
    ShapeLossWeights,
    global_code_penalty,
    landmark_loss,
    region_sdf_loss,
)


@dataclass
class SubjectPools:
    """Normalized-frame sample pools for one subject."""

    subject_id: str
    landmarks: dict[str, np.ndarray]  # gt landmarks, normalized; may be empty
    surf_pts: dict[str, np.ndarray]
    surf_nrm: dict[str, np.ndarray]
    far_pts: dict[str, np.ndarray]


@dataclass
class SubjectLatents:
    z_glob: np.ndarray
    z_loc: dict[str, np.ndarray]

    def region_latent(self, region: str) -> ShapeLatent:
        return ShapeLatent(self.z_glob, self.z_loc[region])


def subject_pools_from_meshes(
    subject_id: str,
    meshes: dict[str, TriangleMesh],
    landmarks: dict[str, np.ndarray],
    rng: np.random.Generator,
    surf_pool: int,
    far_pool: int,
    far_margin: float,
) -> SubjectPools:
    """Build training pools from normalized meshes (+ optional landmarks)."""
    surf_pts: dict[str, np.ndarray] = {}
    surf_nrm: dict[str, np.ndarray] = {}
    far_pts: dict[str, np.ndarray] = {}
    for region, mesh in meshes.items():
        batch = sample_surface(mesh, surf_pool, rng)
        surf_pts[region] = batch.points.astype(np.float32)
        surf_nrm[region] = batch.gt_normal.astype(np.float32)
        dist = MeshDistanceField(mesh)
        far = sample_offsurface(
            CANONICAL_BOUNDS, far_pool, rng, distance_fn=dist.query, margin=far_margin
        )
        far_pts[region] = far.points.astype(np.float32)
    return SubjectPools(
        subject_id=subject_id,
        landmarks=landmarks,
        surf_pts=surf_pts,
        surf_nrm=surf_nrm,
        far_pts=far_pts,
    )


def load_shape_corpus(corpus_dir, cfg: RunConfig, split: str = "train"):
    """Subject pools for every case of a split, in the corpus canonical frame."""
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / "corpus.json"
    if not manifest_path.exists():
        raise DataError(f"not a corpus directory (no corpus.json): {corpus_dir}")
    manifest = json.loads(manifest_path.read_text())
    tf = UnitTransform.from_json(manifest["transform"])
    subjects: list[SubjectPools] = []
    for case_id in manifest["splits"].get(split, []):
        case_dir = corpus_dir / split / case_id
        meta = json.loads((case_dir / "case.json").read_text())
        meshes = {
            region: tf.apply_mesh(load_obj(case_dir / f"pre_{region}.obj"))
            for region in REGIONS
        }
        landmarks = {
            region: tf.apply(np.array(meta["landmarks_mm"][region])) for region in REGIONS
        }
        rng = np.random.default_rng([cfg.seed, 0x900A, len(subjects)])
        subjects.append(
            subject_pools_from_meshes(
                case_id,
                meshes,
                landmarks,
                rng,
                cfg.shape_train.surf_pool,
                cfg.shape_train.far_pool,
                cfg.shape_train.far_margin,
            )
        )
    if not subjects:
        raise DataError(f"split {split!r} has no cases in {corpus_dir}")
    return subjects, tf


def calibrate_sigmas(subjects: list[SubjectPools], factor: float) -> dict[str, float]:
    """sigma per region: factor x median nearest-landmark spacing."""
    out: dict[str, float] = {}
    for region in REGIONS:
        spacings = []
        for sub in subjects:
            lmk = sub.landmarks[region]
            d = np.linalg.norm(lmk[:, None, :] - lmk[None, :, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            spacings.append(np.median(d.min(axis=1)))
        out[region] = float(factor * np.median(spacings))
    return out


def build_shape_decoders(
    cfg: RunConfig, sigmas: dict[str, float], rng: np.random.Generator
) -> dict[str, ShapeDecoder]:
    model = cfg.shape_model
    c0 = float(np.exp(-(model.w0_half_distance**2) / 2.0))
    shared_nets = None
    if model.decoder_variant == "single":
        d_loc = next(iter(model.d_loc.values()))
        d_in = 3 + model.d_glob + d_loc
        max_k = max(model.n_landmarks.values())
        shared_nets = [
            init_mlp(rng, [d_in] + list(model.hidden) + [1], beta=model.softplus_beta, final_scale=0.1)
            for _ in range(max_k + 1)
        ]
    decoders: dict[str, ShapeDecoder] = {}
    for region in REGIONS:
        rc = RegionConfig(region, model.n_landmarks[region], model.d_loc[region], model.d_glob)
        nets = shared_nets[: rc.n_landmarks + 1] if shared_nets is not None else None
        decoders[region] = init_decoder(
            rc,
            rng,
            sigma=sigmas[region],
            hidden=model.hidden,
            pos_hidden=model.pos_hidden,
            c0=c0,
            cutoff=model.active_cutoff,
            beta=model.softplus_beta,
            nets=nets,
        )
    return decoders


def init_all_latents(
    subjects: list[SubjectPools], cfg: RunConfig, rng: np.random.Generator
) -> dict[str, SubjectLatents]:
    model = cfg.shape_model
    std = cfg.shape_train.latent_init_std
    out: dict[str, SubjectLatents] = {}
    for sub in subjects:
        z_glob = (std * rng.standard_normal(model.d_glob)).astype(np.float32)
        z_loc = {
            region: (std * rng.standard_normal(
                (model.n_landmarks[region] + 1, model.d_loc[region])
            )).astype(np.float32)
            for region in REGIONS
        }
        out[sub.subject_id] = SubjectLatents(z_glob=z_glob, z_loc=z_loc)
    return out


def _loss_weights(tc) -> ShapeLossWeights:
    return ShapeLossWeights(
        surf=tc.lambda_surf,
        eik=tc.lambda_eik,
        far=tc.lambda_far,
        alpha=tc.alpha_far,
        glob=tc.lambda_glob,
        lmk=tc.lambda_lmk,
    )


def _lr(base: float, step: int, halve_every: int) -> float:
    return base * 0.5 ** (step // halve_every)


def _draw_region_batch(
    subjects: list[SubjectPools],
    picked: np.ndarray,
    region: str,
    tc,
    rng: np.random.Generator,
) -> RegionBatch:
    s = picked.size
    n_surf = tc.n_surf // s
    n_grad = tc.n_grad_surf // s
    n_far = tc.n_far // s
    n_eik = tc.n_eik_off // s
    surf_x, surf_n, surf_subj, grad_idx = [], [], [], []
    far_x, far_subj, eik_x, eik_subj = [], [], [], []
    offset = 0
    lo, hi = CANONICAL_BOUNDS
    for local, gi in enumerate(picked):
        sub = subjects[gi]
        idx = rng.integers(0, sub.surf_pts[region].shape[0], size=n_surf)
        surf_x.append(sub.surf_pts[region][idx])
        surf_n.append(sub.surf_nrm[region][idx])
        surf_subj.append(np.full(n_surf, local, dtype=np.int64))
        grad_idx.append(offset + np.arange(n_grad))
        offset += n_surf
        fidx = rng.integers(0, sub.far_pts[region].shape[0], size=n_far)
        far_x.append(sub.far_pts[region][fidx])
        far_subj.append(np.full(n_far, local, dtype=np.int64))
        eik_x.append(rng.uniform(lo, hi, size=(n_eik, 3)).astype(np.float32))
        eik_subj.append(np.full(n_eik, local, dtype=np.int64))
    return RegionBatch(
        surf_x=np.concatenate(surf_x),
        surf_n=np.concatenate(surf_n),
        surf_subj=np.concatenate(surf_subj),
        grad_idx=np.concatenate(grad_idx),
        eik_x=np.concatenate(eik_x),
        eik_subj=np.concatenate(eik_subj),
        far_x=np.concatenate(far_x),
        far_subj=np.concatenate(far_subj),
    )


class ShapeTrainer:
    """Owns decoders, latents, and optimizer state for one training run."""

    def __init__(self, subjects: list[SubjectPools], cfg: RunConfig, transform: UnitTransform):
        cfg.validate()
        self.subjects = subjects
        self.cfg = cfg
        self.transform = transform
        rng = np.random.default_rng([cfg.seed, 0x5AFE])
        self.sigmas = calibrate_sigmas(subjects, cfg.shape_model.sigma_factor)
        self.decoders = build_shape_decoders(cfg, self.sigmas, rng)
        self.latents = init_all_latents(subjects, cfg, rng)
        self.step = 0
        self.history: list[dict] = []

        # unique networks (the single-decoder variant aliases ensembles)
        seen: dict[int, object] = {}
        for region in REGIONS:
            for net in self.decoders[region].nets + [self.decoders[region].pos_net]:
                seen.setdefault(id(net), net)
        self._nets = list(seen.values())
        self._net_adam = {id(n): AdamState.for_params(n.param_arrays()) for n in self._nets}
        self._zg_adam = {
            sid: AdamState.for_params([lat.z_glob]) for sid, lat in self.latents.items()
        }
        self._zl_adam = {
            (sid, region): AdamState.for_params([lat.z_loc[region]])
            for sid, lat in self.latents.items()
            for region in REGIONS
        }

    def train_step(self, rng: np.random.Generator) -> dict[str, float]:
        tc = self.cfg.shape_train
        subjects = self.subjects
        picked = rng.choice(len(subjects), size=min(tc.subjects_per_step, len(subjects)), replace=False)
        weights = _loss_weights(tc)

        z_glob = np.stack([self.latents[subjects[i].subject_id].z_glob for i in picked])
        zg_grad = np.zeros_like(z_glob, dtype=np.float64)
        terms_total: dict[str, float] = {}
        net_grads_by_id: dict[int, MlpGrads] = {}
        zl_grads: dict[str, np.ndarray] = {}

        for region in REGIONS:
            dec = self.decoders[region]
            z_loc = np.stack([self.latents[subjects[i].subject_id].z_loc[region] for i in picked])
            gt_lmk = np.stack([subjects[i].landmarks[region] for i in picked])
            if self.step < tc.lmk_warmup_steps:
                lmk = gt_lmk
            else:
                lmk = np.stack(
                    [dec.predict_landmarks(z_glob[j]) for j in range(picked.size)]
                )
            batch = _draw_region_batch(subjects, picked, region, tc, rng)

            net_grads = []
            for net in dec.nets:
                if id(net) not in net_grads_by_id:
                    net_grads_by_id[id(net)] = MlpGrads.zeros_like(net)
                net_grads.append(net_grads_by_id[id(net)])
            zl_grad = np.zeros_like(z_loc, dtype=np.float64)
            terms = region_sdf_loss(
                dec, z_glob, z_loc, lmk, batch, weights,
                h=tc.stencil_h, net_grads=net_grads,
                z_glob_grad=zg_grad, z_loc_grad=zl_grad,
            )
            zl_grads[region] = zl_grad
            if id(dec.pos_net) not in net_grads_by_id:
                net_grads_by_id[id(dec.pos_net)] = MlpGrads.zeros_like(dec.pos_net)
            terms["lmk"] = landmark_loss(
                dec, z_glob, gt_lmk, weights.lmk,
                pos_grads=net_grads_by_id[id(dec.pos_net)], z_glob_grad=zg_grad,
            )
            for key, val in terms.items():
                terms_total[key] = terms_total.get(key, 0.0) + val

        terms_total["glob"] = global_code_penalty(z_glob, weights.glob, zg_grad)
        total = float(sum(terms_total.values()))
        if not np.isfinite(total):
            raise NumericsError(f"shape loss diverged at step {self.step}")
        terms_total["total"] = total

        lr_net = _lr(tc.lr_net, self.step, tc.halve_every)
        lr_lat = _lr(tc.lr_lat, self.step, tc.halve_every)
        for net in self._nets:
            grads = net_grads_by_id.get(id(net))
            if grads is not None:
                adam_step(net.param_arrays(), grads.arrays(), self._net_adam[id(net)], lr_net)
        for j, gi in enumerate(picked):
            sid = subjects[gi].subject_id
            lat = self.latents[sid]
            adam_step([lat.z_glob], [zg_grad[j]], self._zg_adam[sid], lr_lat)
            for region in REGIONS:
                adam_step(
                    [lat.z_loc[region]], [zl_grads[region][j]],
                    self._zl_adam[(sid, region)], lr_lat,
                )
        terms_total["lr_net"] = lr_net
        terms_total["lr_lat"] = lr_lat
        self.step += 1
        return terms_total

    def run(self, out_dir, log: JsonlLogger | None = None) -> None:
        tc = self.cfg.shape_train
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        while self.step < tc.steps:
            rng = np.random.default_rng([self.cfg.seed, 0x57E9, self.step])
            try:
                terms = self.train_step(rng)
            except NumericsError:
                save_shape_checkpoint(out_dir, self, note="diverged; last good checkpoint kept")
                raise
            row = {"step": self.step, **{k: float(v) for k, v in terms.items()}}
            self.history.append(row)
            if log is not None and (self.step % tc.log_every == 0 or self.step == tc.steps):
                log.log(elapsed_s=round(time.perf_counter() - start, 3), **row)
            if self.step % tc.checkpoint_every == 0 or self.step == tc.steps:
                save_shape_checkpoint(out_dir, self)


def save_shape_checkpoint(out_dir, trainer: ShapeTrainer, note: str = "") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for region, dec in trainer.decoders.items():
        (out_dir / f"decoder_{region}.bin").write_bytes(decoder_to_bytes(dec))
    save_latents(out_dir / "latents.json", trainer.latents)
    write_manifest(
        out_dir / "manifest.json",
        trainer.cfg,
        kind="shape",
        seed=trainer.cfg.seed,
        step=trainer.step,
        sigmas=trainer.sigmas,
        decoder_variant=trainer.cfg.shape_model.decoder_variant,
        transform=trainer.transform.to_json(),
        subjects=[s.subject_id for s in trainer.subjects],
        note=note,
    )
    write_loss_history(out_dir / "loss_history.csv", trainer.history)


def save_latents(path, latents: dict[str, SubjectLatents]) -> None:
    payload = {
        sid: {
            "z_glob": lat.z_glob.tolist(),
            "regions": {r: {"z_loc": lat.z_loc[r].tolist()} for r in lat.z_loc},
        }
        for sid, lat in latents.items()
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_latents(path) -> dict[str, SubjectLatents]:
    payload = json.loads(Path(path).read_text())
    out = {}
    for sid, entry in payload.items():
        out[sid] = SubjectLatents(
            z_glob=np.array(entry["z_glob"], dtype=np.float32),
            z_loc={
                r: np.array(v["z_loc"], dtype=np.float32)
                for r, v in entry["regions"].items()
            },
        )
    return out


def load_shape_checkpoint(model_dir):
    """Returns (decoders, latents, manifest)."""
    model_dir = Path(model_dir)
    manifest_path = model_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no shape checkpoint manifest in {model_dir}")
    manifest = json.loads(manifest_path.read_text())
    decoders = {}
    for region in REGIONS:
        path = model_dir / f"decoder_{region}.bin"
        if not path.exists():
            raise DataError(f"missing decoder file {path}")
        decoders[region] = decoder_from_bytes(path.read_bytes())
    latents = load_latents(model_dir / "latents.json")
    return decoders, latents, manifest


def mean_latent(latents: dict[str, SubjectLatents]) -> SubjectLatents:
    sids = sorted(latents)
    z_glob = np.mean([latents[s].z_glob for s in sids], axis=0).astype(np.float32)
    z_loc = {
        region: np.mean([latents[s].z_loc[region] for s in sids], axis=0).astype(np.float32)
        for region in latents[sids[0]].z_loc
    }
    return SubjectLatents(z_glob=z_glob, z_loc=z_loc)


def fit_shape_latent(
    decoders: dict[str, ShapeDecoder],
    pools: SubjectPools,
    cfg: RunConfig,
    init: SubjectLatents,
    seed: int = 0,
) -> tuple[SubjectLatents, dict[str, float]]:
    """Optimize codes against observed samples with frozen networks.

    The loss drops the landmark term (no landmarks are observed);
    everything else matches training. Returns the fitted codes and the
    final loss terms as the fit residual summary.
    """
    fc = cfg.fit_shape
    weights = _loss_weights(cfg.shape_train)
    fitted = SubjectLatents(
        z_glob=init.z_glob.copy(),
        z_loc={r: init.z_loc[r].copy() for r in init.z_loc},
    )
    zg_adam = AdamState.for_params([fitted.z_glob])
    zl_adam = {r: AdamState.for_params([fitted.z_loc[r]]) for r in fitted.z_loc}
    sub = pools
    terms_out: dict[str, float] = {}
    for it in range(fc.iters):
        rng = np.random.default_rng([seed, 0xF17, it])
        lr = _lr(fc.lr, it, fc.halve_every)
        zg = fitted.z_glob[None]
        zg_grad = np.zeros_like(zg, dtype=np.float64)
        terms_out = {}
        for region in REGIONS:
            dec = decoders[region]
            lmk = dec.predict_landmarks(fitted.z_glob)
            zl = fitted.z_loc[region][None]
            zl_grad = np.zeros_like(zl, dtype=np.float64)
            batch = _draw_fit_batch(sub, region, fc, rng)
            terms = region_sdf_loss(
                dec, zg, zl, lmk[None], batch, weights,
                h=cfg.shape_train.stencil_h,
                z_glob_grad=zg_grad, z_loc_grad=zl_grad,
            )
            adam_step([fitted.z_loc[region]], [zl_grad[0]], zl_adam[region], lr)
            for key, val in terms.items():
                terms_out[key] = terms_out.get(key, 0.0) + val
        terms_out["glob"] = global_code_penalty(zg, weights.glob, zg_grad)
        adam_step([fitted.z_glob], [zg_grad[0]], zg_adam, lr)
        total = float(sum(terms_out.values()))
        if not np.isfinite(total):
            raise NumericsError(f"shape fit diverged at iter {it}")
    terms_out["total"] = float(sum(terms_out.values())) if terms_out else 0.0
    return fitted, terms_out


def _draw_fit_batch(sub: SubjectPools, region: str, fc, rng: np.random.Generator) -> RegionBatch:
    lo, hi = CANONICAL_BOUNDS
    idx = rng.integers(0, sub.surf_pts[region].shape[0], size=fc.n_surf)
    fidx = rng.integers(0, sub.far_pts[region].shape[0], size=fc.n_far)
    zeros = np.zeros
    return RegionBatch(
        surf_x=sub.surf_pts[region][idx],
        surf_n=sub.surf_nrm[region][idx],
        surf_subj=zeros(fc.n_surf, dtype=np.int64),
        grad_idx=np.arange(fc.n_grad_surf),
        eik_x=rng.uniform(lo, hi, size=(fc.n_eik_off, 3)).astype(np.float32),
        eik_subj=zeros(fc.n_eik_off, dtype=np.int64),
        far_x=sub.far_pts[region][fidx],
        far_subj=zeros(fc.n_far, dtype=np.int64),
    )
