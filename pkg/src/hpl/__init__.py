"""Harmonic regression with subordinated cyclically dependent noise."""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateError,
    DivergenceError,
    DomainError,
    HplError,
    RangeError,
    RankError,
)
from .spectral_cov import NoiseModel  # noqa: E402
from .hermite import TransformSpec  # noqa: E402
from .estimator import TrigParams, WalkerSet, walker_lse  # noqa: E402

__all__ = [
    "ConfigError", "DegenerateError", "DivergenceError", "DomainError", "HplError",
    "RangeError", "RankError", "NoiseModel", "TransformSpec", "TrigParams", "WalkerSet",
    "walker_lse",
]
