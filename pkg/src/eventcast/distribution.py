"""Probability distribution over the event vocabulary for one target slot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class PredictionDistribution:
    """Normalized probabilities over event ids, with model provenance.

    Ranking over a distribution is total: events sort by (-probability,
    event id), so equal probabilities break ties toward the smaller id.
    """

    probs: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise ShapeError("probs must be a 1-D vector")
        if np.any(self.probs < 0):
            raise ShapeError("probs must be non-negative")
        total = float(self.probs.sum())
        if not np.isclose(total, 1.0, atol=1e-6):
            raise ShapeError(f"probs must sum to 1 (got {total})")

    @property
    def vocab_size(self) -> int:
        return self.probs.shape[0]

    def top_n(self, n: int) -> list[int]:
        """The n most probable event ids under the deterministic ordering."""
        order = np.lexsort((np.arange(self.vocab_size), -self.probs))
        return [int(i) for i in order[:n]]


def as_probs(dist: "PredictionDistribution | np.ndarray") -> np.ndarray:
    """Accept either a PredictionDistribution or a bare vector."""
    if isinstance(dist, PredictionDistribution):
        return dist.probs
    return np.asarray(dist, dtype=np.float64)
