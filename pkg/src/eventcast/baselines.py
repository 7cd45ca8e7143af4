"""Maximum-likelihood N-gram forecasters (first-order Markov is N=2).

Prediction backs off through shorter contexts down to the unigram
distribution, so every context yields a usable, normalized distribution.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distribution import PredictionDistribution
from .errors import ContractError, FitError, ParseError


@dataclass
class TransitionTable:
    """Counts of next-event occurrences per context, for orders 1..N.

    ``counts[L]`` maps a length-L context tuple to a Counter of next
    events; L ranges from 0 (unigram) to N-1.  All counts are exact
    integers from a single pass over the training stream.
    """

    order: int
    vocab_size: int
    counts: dict[int, dict[tuple[int, ...], Counter]]

    VERSION = 1

    def context_total(self, context: tuple[int, ...]) -> int:
        by_len = self.counts.get(len(context), {})
        return sum(by_len.get(context, Counter()).values())

    def save(self, path) -> None:
        lines = [f"ngram\t{self.VERSION}\t{self.order}\t{self.vocab_size}\n"]
        for length in sorted(self.counts):
            for context in sorted(self.counts[length]):
                nexts = self.counts[length][context]
                joined = ",".join(str(i) for i in context)
                for event in sorted(nexts):
                    lines.append(f"{joined}\t{event}\t{nexts[event]}\n")
        with open(path, "w", encoding="utf-8") as handle:
            handle.writelines(lines)

    @classmethod
    def load(cls, path) -> "TransitionTable":
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline().rstrip("\n").split("\t")
            if len(header) != 4 or header[0] != "ngram":
                raise ParseError(f"not a transition table: {path}")
            if int(header[1]) != cls.VERSION:
                raise ParseError(f"unsupported transition-table version {header[1]}")
            order, vocab_size = int(header[2]), int(header[3])
            counts: dict[int, dict[tuple[int, ...], Counter]] = defaultdict(dict)
            for line in handle:
                joined, event, count = line.rstrip("\n").split("\t")
                context = tuple(int(i) for i in joined.split(",")) if joined else ()
                nexts = counts[len(context)].setdefault(context, Counter())
                nexts[int(event)] = int(count)
        return cls(order=order, vocab_size=vocab_size, counts=dict(counts))


def fit(
    events: Sequence[int], order: int, vocab_size: int | None = None
) -> TransitionTable:
    """Count every consecutive N-tuple, plus all lower orders for backoff."""
    if order < 1:
        raise FitError("order must be >= 1")
    n = len(events)
    if n < order:
        raise FitError(f"need at least {order} events to fit an order-{order} model")
    ids = [int(e) for e in events]
    if vocab_size is None:
        vocab_size = max(ids) + 1
    counts: dict[int, dict[tuple[int, ...], Counter]] = {}
    for length in range(order):
        by_context: dict[tuple[int, ...], Counter] = {}
        for i in range(n - length):
            context = tuple(ids[i : i + length])
            by_context.setdefault(context, Counter())[ids[i + length]] += 1
        counts[length] = by_context
    return TransitionTable(order=order, vocab_size=vocab_size, counts=counts)


def predict(
    table: TransitionTable, context: Sequence[int]
) -> PredictionDistribution:
    """Maximum-likelihood distribution for the event after ``context``.

    Uses the last N-1 context ids; unseen contexts back off unweighted to
    shorter contexts and finally to the unigram distribution.
    """
    needed = table.order - 1
    if len(context) < needed:
        raise ContractError(
            f"order-{table.order} prediction needs a context of >= {needed} ids"
        )
    ids = tuple(int(i) for i in context)
    for length in range(needed, -1, -1):
        key = ids[len(ids) - length :] if length else ()
        nexts = table.counts.get(length, {}).get(key)
        if nexts:
            probs = np.zeros(table.vocab_size, dtype=np.float64)
            total = sum(nexts.values())
            for event, count in nexts.items():
                probs[event] = count / total
            return PredictionDistribution(
                probs=probs, provenance=f"ngram{table.order}/backoff{length}"
            )
    raise FitError("transition table is empty")  # unreachable after fit()


def predict_batch(table: TransitionTable, contexts: np.ndarray) -> np.ndarray:
    """Stacked predict() over rows of a (B, >=N-1) context array."""
    return np.stack([predict(table, row).probs for row in contexts])
