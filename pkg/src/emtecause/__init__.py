"""Cause identification for fast power-grid transients.

Pipeline: synthesize multi-sensor voltage windows for five event
classes, transform them into modal wavelet feature images, train a small
convolutional network (or one of three reference classifiers) and score
the predictions per class.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError
from .gridgen import (
    EventClass,
    EventParams,
    EventRecord,
    FaultType,
    GeneratorConfig,
    SensorLayout,
    build_dataset,
    default_layout,
    make_layout,
    sample_params,
    synthesize_event,
)

__all__ = [
    "ConfigError",
    "DataError",
    "EventClass",
    "EventParams",
    "EventRecord",
    "FaultType",
    "GeneratorConfig",
    "SensorLayout",
    "build_dataset",
    "default_layout",
    "make_layout",
    "sample_params",
    "synthesize_event",
    "__version__",
]
