"""Feedforward coarse-to-fine residual learning for grayscale image
restoration: train on degraded/clean pairs without backpropagation, restore
new images, and report quality and model-complexity metrics.
"""

from .codebook import Codebook, fit_codebook, quantize_predict
from .degrade import DegradeParams, synth_degrade
from .errors import GuslError
from .gbrt import GbrtModel, GbrtParams
from .imaging import (
    build_pyramid,
    compose_prediction,
    downsample_mean,
    psnr,
    ssim,
    upscale,
)
from .pipeline import (
    GuslModel,
    LevelModel,
    TrainConfig,
    report_complexity,
    restore,
    train,
)
from .rft import RftReport, elbow_index, joint_select, rank_features, rft_loss
from .saab import (
    FeatureMatrix,
    SaabKernels,
    apply_saab,
    fit_saab,
    neighborhood_construct,
)
from .sfg import LntProjection, SfgModel, extract_subsets, fit_lnt, generate
from .dataio import load_image, load_manifest, load_model, save_image, save_model

__version__ = "0.1.0"

__all__ = [
    "Codebook",
    "DegradeParams",
    "FeatureMatrix",
    "GbrtModel",
    "GbrtParams",
    "GuslError",
    "GuslModel",
    "LevelModel",
    "LntProjection",
    "RftReport",
    "SaabKernels",
    "SfgModel",
    "TrainConfig",
    "apply_saab",
    "build_pyramid",
    "compose_prediction",
    "downsample_mean",
    "elbow_index",
    "extract_subsets",
    "fit_codebook",
    "fit_lnt",
    "fit_saab",
    "generate",
    "joint_select",
    "load_image",
    "load_manifest",
    "load_model",
    "neighborhood_construct",
    "psnr",
    "quantize_predict",
    "rank_features",
    "report_complexity",
    "restore",
    "rft_loss",
    "save_image",
    "save_model",
    "ssim",
    "synth_degrade",
    "train",
    "upscale",
    "__version__",
]
