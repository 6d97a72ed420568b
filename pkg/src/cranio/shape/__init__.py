"""Shape module: landmark-anchored ensemble SDF decoders, their composite
training loss, auto-decoder training, latent fitting, and mesh extraction."""

from .decoder import (
    CANONICAL_REGIONS,
    RegionConfig,
    ShapeDecoder,
    ShapeLatent,
    init_decoder,
    init_latent,
    kernel_weights,
    load_decoder,
    save_decoder,
    sdf_eval,
    sdf_grad,
)
from .extract import extract_region_mesh
from .loss import RegionBatch, ShapeLossWeights, region_sdf_loss
from .training import (
    ShapeTrainer,
    SubjectLatents,
    SubjectPools,
    calibrate_sigmas,
    fit_shape_latent,
    load_shape_checkpoint,
    load_shape_corpus,
    mean_latent,
    save_shape_checkpoint,
    subject_pools_from_meshes,
)

__all__ = [
    "CANONICAL_REGIONS",
    "RegionConfig",
    "RegionBatch",
    "ShapeDecoder",
    "ShapeLatent",
    "ShapeLossWeights",
    "ShapeTrainer",
    "SubjectLatents",
    "SubjectPools",
    "calibrate_sigmas",
    "extract_region_mesh",
    "fit_shape_latent",
    "init_decoder",
    "init_latent",
    "kernel_weights",
    "load_decoder",
    "load_shape_checkpoint",
    "load_shape_corpus",
    "mean_latent",
    "region_sdf_loss",
    "save_decoder",
    "save_shape_checkpoint",
    "sdf_eval",
    "sdf_grad",
    "subject_pools_from_meshes",
]
