"""Web request logs -> canonical events -> sequence forecasts -> anomaly scores.

A numpy toolkit that turns HTTP access logs into canonical event streams,
forecasts upcoming events with n-gram baselines and self-supervised neural
sequence models, and flags anomalous requests by the rank of the observed
event under the predicted distribution.
"""

__version__ = "0.1.0"

from . import (
    anomaly,
    baselines,
    distribution,
    errors,
    evalharness,
    extractor,
    ingest,
    neural,
    sequencer,
    synthgen,
)

__all__ = [
    "anomaly",
    "baselines",
    "distribution",
    "errors",
    "evalharness",
    "extractor",
    "ingest",
    "neural",
    "sequencer",
    "synthgen",
    "__version__",
]
