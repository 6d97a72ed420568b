"""Run configuration: every hyperparameter of the shape and surgery modules,
fitting budgets, and prediction settings.

Configs validate before any compute and serialize verbatim into run
manifests; ``config_hash`` fingerprints the canonical JSON. Defaults are the
canonical (paper-scale) settings; ``desk`` overrides scale them to the
synthetic desk corpus used by the acceptance suite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import ConfigError


@dataclass
class ShapeModelConfig:
    d_glob: int = 64
    d_loc: dict = field(default_factory=lambda: {"face": 32, "maxilla": 64, "mandible": 32})
    n_landmarks: dict = field(default_factory=lambda: {"face": 39, "maxilla": 43, "mandible": 16})
    hidden: list = field(default_factory=lambda: [200, 200, 200, 200])
    pos_hidden: list = field(default_factory=lambda: [128, 128])
    softplus_beta: float = 100.0
    sigma_factor: float = 0.4  # sigma = factor * median nearest-landmark spacing
    w0_half_distance: float = 3.0  # sigmas at which the far-field weight reaches 0.5
    active_cutoff: float = 1e-5
    decoder_variant: str = "multi"  # multi | single (shared ensemble ablation)

    def validate(self):
        if self.d_glob < 1:
            raise ConfigError("d_glob must be positive")
        for region in ("face", "maxilla", "mandible"):
            if region not in self.d_loc or region not in self.n_landmarks:
                raise ConfigError(f"missing region {region} in shape model config")
            if self.d_loc[region] < 1 or self.n_landmarks[region] < 1:
                raise ConfigError(f"invalid dims for region {region}")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden layer widths must be positive")
        if self.decoder_variant not in ("multi", "single"):
            raise ConfigError(f"unknown decoder variant {self.decoder_variant!r}")
        if self.decoder_variant == "single" and len(set(self.d_loc.values())) != 1:
            raise ConfigError("single-decoder variant requires equal d_loc across regions")
        if self.sigma_factor <= 0 or self.w0_half_distance <= 0:
            raise ConfigError("kernel constants must be positive")
        if not (0 <= self.active_cutoff < 0.1):
            raise ConfigError("active_cutoff out of range")


@dataclass
class ShapeTrainConfig:
    steps: int = 30_000
    lr_net: float = 5e-4
    lr_lat: float = 1e-3
    halve_every: int = 3_000
    subjects_per_step: int = 4
    # per-region per-step sample budgets (totals across the subject minibatch)
    n_surf: int = 5_460
    n_grad_surf: int = 1_024
    n_eik_off: int = 1_024
    n_far: int = 1_364
    surf_pool: int = 30_000
    far_pool: int = 8_000
    far_margin: float = 0.05  # normalized units
    stencil_h: float = 1e-3
    latent_init_std: float = 0.01
    lmk_warmup_steps: int = 300
    lambda_surf: float = 1.0
    lambda_eik: float = 0.1
    lambda_far: float = 0.1
    alpha_far: float = 100.0
    lambda_glob: float = 1e-4
    lambda_lmk: float = 0.1
    log_every: int = 25
    checkpoint_every: int = 1_000

    def validate(self):
        if self.steps < 1 or self.halve_every < 1 or self.subjects_per_step < 1:
            raise ConfigError("shape training schedule values must be positive")
        if min(self.lr_net, self.lr_lat) <= 0:
            raise ConfigError("learning rates must be positive")
        for name in ("lambda_surf", "lambda_eik", "lambda_far", "lambda_glob", "lambda_lmk", "alpha_far"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_grad_surf > self.n_surf:
            raise ConfigError("n_grad_surf cannot exceed n_surf")
        if not (0 < self.stencil_h < 0.1):
            raise ConfigError("stencil_h out of range")
        if self.far_margin <= 0:
            raise ConfigError("far_margin must be positive")


@dataclass
class SurgeryModelConfig:
    d_srg: int = 512
    d_red: int = 64
    phi_hidden: list = field(default_factory=lambda: [512] * 6)
    psi_hidden: list = field(default_factory=lambda: [256, 256])
    psi_variant: str = "separate"  # separate | global (shared, zero-padded)

    def validate(self):
        if self.d_srg < 1 or self.d_red < 1:
            raise ConfigError("surgery code dims must be positive")
        if self.psi_variant not in ("separate", "global"):
            raise ConfigError(f"unknown psi variant {self.psi_variant!r}")
        if not self.phi_hidden or not self.psi_hidden:
            raise ConfigError("surgery nets need hidden layers")


@dataclass
class SurgeryTrainConfig:
    steps: int = 9_000
    lr_net: float = 5e-4
    lr_lat: float = 1e-3
    halve_every: int = 600
    cases_per_step: int = 4
    pts_per_region: int = 2_048
    lambda_srg: float = 1e-4
    latent_init_std: float = 0.01
    log_every: int = 25
    checkpoint_every: int = 500

    def validate(self):
        if self.steps < 1 or self.halve_every < 1 or self.cases_per_step < 1:
            raise ConfigError("surgery training schedule values must be positive")
        if min(self.lr_net, self.lr_lat) <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lambda_srg < 0:
            raise ConfigError("lambda_srg must be >= 0")


@dataclass
class FitShapeConfig:
    iters: int = 800
    lr: float = 5e-3
    halve_every: int = 250
    n_surf: int = 1_024
    n_grad_surf: int = 128
    n_eik_off: int = 128
    n_far: int = 256
    surf_pool: int = 20_000
    far_pool: int = 4_000
    far_margin: float = 0.05
    residual_samples: int = 2_048

    def validate(self):
        if self.iters < 0 or self.lr <= 0 or self.halve_every < 1:
            raise ConfigError("invalid shape fitting schedule")


@dataclass
class FitSurgeryConfig:
    iters: int = 600
    lr: float = 5e-3
    halve_every: int = 200
    pts_per_region: int = 2_048

    def validate(self):
        if self.iters < 0 or self.lr <= 0 or self.halve_every < 1:
            raise ConfigError("invalid surgery fitting schedule")


@dataclass
class PredictConfig:
    mesh_resolution: int = 256
    stage1_flag_cd_mm: float = 3.0
    stage2_flag_residual_mm: float = 1.5
    metric_samples: int = 100_000

    def validate(self):
        if self.mesh_resolution < 2:
            raise ConfigError("mesh resolution must be >= 2")


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 0  # 0 = machine default
    shape_model: ShapeModelConfig = field(default_factory=ShapeModelConfig)
    shape_train: ShapeTrainConfig = field(default_factory=ShapeTrainConfig)
    surgery_model: SurgeryModelConfig = field(default_factory=SurgeryModelConfig)
    surgery_train: SurgeryTrainConfig = field(default_factory=SurgeryTrainConfig)
    fit_shape: FitShapeConfig = field(default_factory=FitShapeConfig)
    fit_surgery: FitSurgeryConfig = field(default_factory=FitSurgeryConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)

    def validate(self):
        if self.seed < 0 or self.threads < 0:
            raise ConfigError("seed and threads must be >= 0")
        for f in fields(self):
            val = getattr(self, f.name)
            if is_dataclass(val):
                val.validate()

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        cfg = cls()
        _apply_overrides(cfg, data, path="")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_json(data)

    def save(self, path) -> None:
        Path(path).write_text(canonical_json(self.to_json()) + "\n")


def _apply_overrides(obj, data: dict, path: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    known = {f.name: f for f in fields(obj)}
    for key, val in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {path + key!r}")
        cur = getattr(obj, key)
        if is_dataclass(cur):
            _apply_overrides(cur, val, path=f"{path}{key}.")
        elif isinstance(cur, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            cur.update(val)
        else:
            setattr(obj, key, type(cur)(val) if cur is not None else val)


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=1)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg.to_json()).encode()).hexdigest()[:16]


def desk_config(seed: int = 0) -> RunConfig:
    """Desk-scale settings for the synthetic corpus acceptance runs."""
    cfg = RunConfig(seed=seed)
    cfg.shape_model.hidden = [128, 128, 128, 128]
    cfg.shape_train.steps = 3_000
    cfg.shape_train.halve_every = 300
    cfg.shape_train.subjects_per_step = 4
    cfg.shape_train.n_surf = 1_024
    cfg.shape_train.n_grad_surf = 256
    cfg.shape_train.n_eik_off = 128
    cfg.shape_train.n_far = 512
    cfg.shape_train.lmk_warmup_steps = 200
    cfg.surgery_model.phi_hidden = [256, 256, 256, 256]
    cfg.surgery_train.steps = 1_500
    cfg.surgery_train.halve_every = 150
    cfg.surgery_train.pts_per_region = 1_024
    cfg.fit_shape.iters = 800
    cfg.fit_surgery.iters = 600
    cfg.predict.mesh_resolution = 96
    cfg.validate()
    return cfg
