"""Attribute-based multi-task classification with attention attribution.

The heavy lifting lives in the compiled `_core` module; this package
re-exports its public surface.
"""

from ._core import (
    Config,
    Dataset,
    EatError,
    Mode,
    Model,
    Sample,
    Split,
    far,
    generate_dataset,
    load_cub_format,
    load_dataset,
    pixel_importance,
)

__all__ = [
    "Config",
    "Dataset",
    "EatError",
    "Mode",
    "Model",
    "Sample",
    "Split",
    "far",
    "generate_dataset",
    "load_cub_format",
    "load_dataset",
    "pixel_importance",
]
