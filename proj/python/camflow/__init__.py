"""Synchronized multi-camera toy videos, flow-matching training, and
camera-controlled sampling."""

from _core import (
    ConfigError,
    IoError,
    NumericError,
    default_config,
    easing_fraction,
    evaluate,
    psnr,
    render_dataset,
    sample_video,
    sequence_length,
    split_for_id,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "IoError",
    "NumericError",
    "default_config",
    "easing_fraction",
    "evaluate",
    "psnr",
    "render_dataset",
    "sample_video",
    "sequence_length",
    "split_for_id",
    "train",
    "__version__",
]
