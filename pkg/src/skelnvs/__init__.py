"""Skeleton-guided novel view synthesis on procedural articulated objects.

A latent-diffusion model predicts a target view of an articulated object from
one source view; its normalization layers are modulated by an encoded
skeleton image of the target pose (and optionally by camera-ray maps). The
package covers the full loop: procedural dataset generation, two-stage
training (autoencoder, then denoiser), sampling, metrics, and the
skeleton-quality analysis.
"""

__version__ = "0.1.0"

from .config import (
    CodecConfig,
    DatasetConfig,
    DiffusionConfig,
    EvaluationConfig,
    ExperimentConfig,
    GeneratorConfig,
    SamplerConfig,
    TrainingConfig,
    UNetConfig,
    load_config,
    save_config,
)
from .errors import ConfigurationError, DataError, NumericsError, RenderError

__all__ = [
    "CodecConfig",
    "ConfigurationError",
    "DataError",
    "DatasetConfig",
    "DiffusionConfig",
    "EvaluationConfig",
    "ExperimentConfig",
    "GeneratorConfig",
    "NumericsError",
    "SamplerConfig",
    "RenderError",
    "TrainingConfig",
    "UNetConfig",
    "load_config",
    "save_config",
    "__version__",
]
