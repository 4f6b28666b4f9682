"""Calibration metrics for probabilistic classifiers and object detectors."""

from .core import (
    BinaryView,
    Dataset,
    MetricResult,
    as_dataset,
    as_view,
    binary_dataset,
    binary_view,
    make_dataset,
    ovr_view,
    top_label_view,
)
from .binning import BinningSpec, apply_binning
from .errors import CalmetError

__all__ = [
    "BinaryView",
    "BinningSpec",
    "CalmetError",
    "Dataset",
    "MetricResult",
    "apply_binning",
    "as_dataset",
    "as_view",
    "binary_dataset",
    "binary_view",
    "make_dataset",
    "ovr_view",
    "top_label_view",
]

__version__ = "0.1.0"
