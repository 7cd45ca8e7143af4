"""Rank-based anomaly scoring and Top-K alarming.

The observed event's rank among the predicted probabilities (0 = most
probable, ties broken by ascending id) maps to the score s = 1 - 1/(rank+1);
the alarm fires when the event is not among the top K candidates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .distribution import PredictionDistribution, as_probs
from .errors import ContractError


@dataclass(frozen=True)
class AnomalyVerdict:
    event_id: int
    rank: int
    score: float
    alarmed: bool
    k: int


def rank_of(dist: PredictionDistribution | np.ndarray, observed: int) -> int:
    """0-based rank of the observed event under (-prob, id) ordering."""
    probs = as_probs(dist)
    if not 0 <= observed < probs.shape[0]:
        raise ContractError(f"event id {observed} out of range for |V|={probs.shape[0]}")
    p_obs = probs[observed]
    higher = int(np.sum(probs > p_obs))
    tied_before = int(np.sum((probs == p_obs) & (np.arange(probs.shape[0]) < observed)))
    return higher + tied_before


def ranks_of(dists: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rank_of` over rows of a (B, V) probability array."""
    dists = np.asarray(dists, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.int64)
    if dists.ndim != 2 or observed.shape != (dists.shape[0],):
        raise ContractError("dists must be (B, V) and observed (B,)")
    if np.any(observed < 0) or np.any(observed >= dists.shape[1]):
        raise ContractError("observed ids out of range")
    p_obs = dists[np.arange(dists.shape[0]), observed]
    higher = (dists > p_obs[:, None]).sum(axis=1)
    ids = np.arange(dists.shape[1])
    tied_before = ((dists == p_obs[:, None]) & (ids[None, :] < observed[:, None])).sum(axis=1)
    return (higher + tied_before).astype(np.int64)


def score(rank: int) -> float:
    """Anomaly score s = 1 - 1/(rank+1), strictly increasing, in [0, 1)."""
    if rank < 0:
        raise ContractError("rank must be non-negative")
    return 1.0 - 1.0 / (rank + 1.0)


def scores_of(ranks: np.ndarray) -> np.ndarray:
    ranks = np.asarray(ranks)
    if np.any(ranks < 0):
        raise ContractError("ranks must be non-negative")
    return 1.0 - 1.0 / (ranks + 1.0)


def judge(
    dist: PredictionDistribution | np.ndarray, observed: int, k: int
) -> AnomalyVerdict:
    """Combine rank, score and the Top-K alarm rule into one verdict."""
    if k < 1:
        raise ContractError("alarm threshold K must be positive")
    rank = rank_of(dist, observed)
    return AnomalyVerdict(
        event_id=observed,
        rank=rank,
        score=score(rank),
        alarmed=rank >= k,
        k=k,
    )


def verdict_record(
    verdict: AnomalyVerdict, ts: str = "", app: str = "", token: str = ""
) -> dict:
    """One line of the score-stream output format."""
    return {
        "ts": ts,
        "app": app,
        "token": token,
        "rank": verdict.rank,
        "score": verdict.score,
        "alarmed": verdict.alarmed,
        "k": verdict.k,
    }


def write_score_stream(records: Iterable[dict], handle) -> None:
    for record in records:
        handle.write(json.dumps(record, sort_keys=True) + "\n")
