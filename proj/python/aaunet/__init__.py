"""All-attention U-Net: phantom data, model, losses and training from Python.

Configs are plain dicts in the same JSON schema the CLI reads.
"""

import json as _json

from . import _core
from ._core import (
    CLASS_NAMES,
    Case,
    ConfigError,
    DataError,
    Dataset,
    DimensionError,
    GenerationError,
    IoError,
    NumericError,
    dice_score,
    focal_loss,
    generate_dataset,
    load_dataset,
    load_model,
    render_overlay,
    write_dataset,
)

__all__ = [
    "CLASS_NAMES", "Case", "ConfigError", "DataError", "Dataset", "DimensionError",
    "GenerationError", "IoError", "Model", "NumericError", "Trainer", "dice_score",
    "evaluate", "focal_loss", "generate_dataset", "load_dataset", "load_model",
    "render_overlay", "write_dataset",
]


def _dump(cfg):
    return "" if cfg is None else _json.dumps(cfg)


def Model(config=None, seed=0):
    """Model from a ModelConfig dict (missing keys take defaults)."""
    return _core.Model(_dump(config), seed)


def Trainer(config, dataset, out_dir=""):
    """Trainer over the dataset's train/val splits; config is a TrainConfig dict."""
    return _core.Trainer(_dump(config), dataset, out_dir)


def evaluate(model, dataset, split="test"):
    """Dice report of `model` on one split, as a dict."""
    return _json.loads(_core.evaluate(model, dataset, split))
