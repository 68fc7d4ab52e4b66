"""Differentiable Kendall pre-shape geometry and skeleton motion classification.

Subpackages:

* :mod:`geomotion.autodiff` -- tape-based reverse-mode differentiation.
* :mod:`geomotion.shapespace` -- pre-shape sphere geometry and transport.
* :mod:`geomotion.layers` -- learnable transform and scaling layers.
* :mod:`geomotion.network` -- the Conv1D/LSTM classifier and training loop.
* :mod:`geomotion.data` -- ingestion, resampling, folds, synthesis.
* :mod:`geomotion.experiments` -- ablation and comparison harnesses.
* :mod:`geomotion.metrics` -- score-based evaluation metrics.
* :mod:`geomotion.cli` -- the ``geomotion`` command line entry point.
"""

from .autodiff import AdamState, Tape, Variable, adam_step, grad_check
from .config import ModelConfig, preset_config
from .data import MotionDataset, SkeletonSequence, SynthSpec, generate_synthetic
from .layers import DmlVariant, GtlVariant
from .network import build_model, evaluate, load_model, save_model, train
from .shapespace import (PreShapePoint, PreShapeSequence, TangentVector,
                         exp_map, geodesic_distance, log_map, to_preshape)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Tape", "Variable", "adam_step", "grad_check",
    "ModelConfig", "preset_config",
    "MotionDataset", "SkeletonSequence", "SynthSpec", "generate_synthetic",
    "DmlVariant", "GtlVariant",
    "build_model", "evaluate", "load_model", "save_model", "train",
    "PreShapePoint", "PreShapeSequence", "TangentVector",
    "exp_map", "geodesic_distance", "log_map", "to_preshape",
    "__version__",
]
