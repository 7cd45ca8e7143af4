"""Shared brute-force oracles used by unit and acceptance tests."""

from collections import Counter

import numpy as np


def brute_force_predict(events, order, context, vocab_size):
    """N-gram prediction by direct scan: count matches, back off on miss."""
    events = list(events)
    for length in range(order - 1, -1, -1):
        ctx = tuple(context[len(context) - length :]) if length else ()
        nexts = Counter(
            events[i + length]
            for i in range(len(events) - length)
            if tuple(events[i : i + length]) == ctx
        )
        if nexts:
            total = sum(nexts.values())
            probs = np.zeros(vocab_size)
            for event, count in nexts.items():
                probs[event] = count / total
            return probs
    raise AssertionError("unreachable for non-empty training data")


def brute_top_n(pairs, n):
    hits = 0
    for probs, true_id in pairs:
        order = sorted(range(len(probs)), key=lambda e: (-probs[e], e))
        if true_id in order[:n]:
            hits += 1
    return hits / len(pairs)


def brute_fpr(ranks, k):
    return sum(1 for r in ranks if r >= k) / len(ranks)


def brute_auc(normal, anomalous):
    total = 0.0
    for a in anomalous:
        for s in normal:
            total += 1.0 if a > s else (0.5 if a == s else 0.0)
    return total / (len(normal) * len(anomalous))
