"""Building extraction with global-local fusion and uncertainty aggregation.

Arrays are float32 numpy arrays in channel-first layout: images are
[3, H, W] in [0, 1], masks and uncertainty maps are [1, H, W].
"""

from ._uaglnet import (
    ConfigError,
    DimensionError,
    InvalidValueError,
    Model,
    ParseError,
    TrainingDiverged,
    aggregate,
    config,
    count_parameters,
    gradcheck,
    load_image,
    metrics,
    save_image,
    save_mask,
    seg_loss,
    synthetic_scene,
    train,
    uncertainty_map,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "InvalidValueError",
    "Model",
    "ParseError",
    "TrainingDiverged",
    "aggregate",
    "config",
    "count_parameters",
    "gradcheck",
    "load_image",
    "metrics",
    "save_image",
    "save_mask",
    "seg_loss",
    "synthetic_scene",
    "train",
    "uncertainty_map",
]
