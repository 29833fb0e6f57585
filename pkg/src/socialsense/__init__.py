"""Duty-cycled social interaction sensing: streams, detection, annotation.

The package is organised around the path a probe window travels:

- ``sensorstream``: probe scheduling, rate normalization, synthetic scenarios
- ``dsp``: spectrograms, resizing, photoplethysmogram cleaning
- ``audiofrontend``: per-slot audio classification and embeddings
- ``nn``: the small neural network toolkit everything trains on
- ``fsd``: foreground speech detection over frame-embedding pairs
- ``multimodal``: the fused per-window interaction classifier
- ``detector``: the temporal state machine that emits interaction segments
- ``evaluation``: metrics, window labelling, deployment reports
- ``gateway``: replay clock, prompt policy, annotation store, HTTP API
"""

from .errors import (
    ConflictError,
    DegenerateDataError,
    InsufficientSamplesError,
    InvalidConfigError,
    InvalidDataError,
    MissingModalityError,
    NotFoundError,
    SequencingError,
    ShapeError,
    UndefinedFractionError,
    UndefinedMetricError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConflictError",
    "DegenerateDataError",
    "InsufficientSamplesError",
    "InvalidConfigError",
    "InvalidDataError",
    "MissingModalityError",
    "NotFoundError",
    "SequencingError",
    "ShapeError",
    "UndefinedFractionError",
    "UndefinedMetricError",
    "ValidationError",
    "__version__",
]
