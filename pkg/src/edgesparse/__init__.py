"""Superpixels from deep-decoder pixel embeddings.

The main entry points are :func:`generate_superpixels` for colour images,
:func:`segment_slice` for grayscale microscopy slices and the metrics in
:mod:`edgesparse.metrics`.
"""
from .clustering import cluster, enforce_connectivity, grid_seed_count
from .decoder import DecoderConfig, EmbeddingMap, PRESETS, extract_embeddings, fit, preset
from .diagnostics import count_activated_regions, expected_region_count
from .errors import (
    DegenerateVarianceError,
    EdgeSparseError,
    ImageIOError,
    InvalidParameterError,
    InvalidShapeError,
    NoThresholdError,
    NumericFailureError,
    TooFewClustersError,
    TooManyClustersError,
)
from .foreground import li_threshold, segment_slice, weber_map
from .imaging import load_image, load_labels, save_image, save_labels
from .metrics import MetricReport, binary_metrics, evaluate
from .pipeline import generate_superpixels

__version__ = "0.1.0"

__all__ = [
    "DecoderConfig", "EmbeddingMap", "MetricReport", "PRESETS",
    "binary_metrics", "cluster", "count_activated_regions", "enforce_connectivity",
    "evaluate", "expected_region_count", "extract_embeddings", "fit",
    "generate_superpixels", "grid_seed_count", "li_threshold", "load_image",
    "load_labels", "preset", "save_image", "save_labels", "segment_slice", "weber_map",
    "EdgeSparseError", "DegenerateVarianceError", "ImageIOError", "InvalidParameterError",
    "InvalidShapeError", "NoThresholdError", "NumericFailureError",
    "TooFewClustersError", "TooManyClustersError",
]
