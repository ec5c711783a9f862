"""Continuously tunable raw-to-sRGB enhancement for extreme low-light images.

A user multiplies the raw input by a brightness ratio (alpha1, truncated
at 100) and sweeps an enhancement level (alpha2) that blends every
modulation layer's weights between the base-trained and fine-tuned
endpoints, picking the output exposure at runtime instead of retraining.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import DatasetConfig, DatasetManifest, build_dataset, load_manifest
from .errors import (
    AssetError,
    FormatError,
    GradientError,
    KnobRangeError,
    LuxtuneError,
    ShapeError,
    TrainingDiverged,
)
from .network import EnhancerModel, UNetConfig
from .rawproc import (
    PackedRaw,
    RawImage,
    TuningKnobs,
    apply_brightness,
    exposure_ratio,
    pack_bayer,
    unpack_bayer,
)
from .sensor import CleanScene, NoiseParams, generate_scene, mosaic, sample_noisy_raw
from .training import TrainSchedule, finetune_modulation, train_base

__version__ = "0.1.0"

__all__ = [
    "AssetError",
    "CleanScene",
    "DatasetConfig",
    "DatasetManifest",
    "EnhancerModel",
    "FormatError",
    "GradientError",
    "KnobRangeError",
    "LuxtuneError",
    "NoiseParams",
    "PackedRaw",
    "RawImage",
    "ShapeError",
    "TrainSchedule",
    "TrainingDiverged",
    "TuningKnobs",
    "UNetConfig",
    "apply_brightness",
    "build_dataset",
    "exposure_ratio",
    "finetune_modulation",
    "generate_scene",
    "load_checkpoint",
    "load_manifest",
    "mosaic",
    "pack_bayer",
    "sample_noisy_raw",
    "save_checkpoint",
    "train_base",
    "unpack_bayer",
    "__version__",
]
