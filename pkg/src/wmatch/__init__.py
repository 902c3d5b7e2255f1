"""Match V2I communication addresses to sensed vehicles with dynamic watermarking."""

__version__ = "0.1.0"

from .detector import NoiseConfig, PairAccumulator, ScalarModel, TestVerdict, chi2_quantile, chi2_test
from .errors import ConfigError, NotReadyError
from .matcher import MatchReport, ScoreMatrix, best_pair, confidence, full_assignment
from .watermark import ExcitationSample, WatermarkConfig, WatermarkGenerator, inject, new_generator

__all__ = [
    "ConfigError",
    "ExcitationSample",
    "MatchReport",
    "NoiseConfig",
    "NotReadyError",
    "PairAccumulator",
    "ScalarModel",
    "ScoreMatrix",
    "TestVerdict",
    "WatermarkConfig",
    "WatermarkGenerator",
    "best_pair",
    "chi2_quantile",
    "chi2_test",
    "confidence",
    "full_assignment",
    "inject",
    "new_generator",
]
