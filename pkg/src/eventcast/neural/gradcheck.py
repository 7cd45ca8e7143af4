"""Finite-difference verification of the analytic gradients.

Central differences with step h on every parameter entry, compared to the
backward pass via relative error |a - n| / max(|a| + |n|, eps).  Meant for
tiny model instances; cost grows with the parameter count times two
forward passes.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..sequencer import SequenceWindow, windows_to_arrays
from .models import SequenceForecaster


def gradient_check(
    model: SequenceForecaster,
    windows: Sequence[SequenceWindow] | SequenceWindow,
    step: float = 1e-4,
    train: bool = False,
    rng_seed: int = 0,
) -> float:
    """Max relative error between analytic and numeric loss gradients.

    ``train=True`` exercises dropout; the RNG is re-seeded identically for
    every evaluation so the dropout mask is held fixed while differencing.
    """
    if isinstance(windows, SequenceWindow):
        windows = [windows]
    ids, positions, targets = windows_to_arrays(windows)

    def fresh_rng():
        return np.random.default_rng(rng_seed)

    _, analytic = model.loss_and_grads(ids, positions, targets, train=train, rng=fresh_rng())

    worst = 0.0
    for name, grad in analytic.items():
        param = model.params[name]
        flat_param = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for index in range(flat_param.size):
            original = flat_param[index]
            flat_param[index] = original + step
            plus = model.loss_only(ids, positions, targets, train=train, rng=fresh_rng())
            flat_param[index] = original - step
            minus = model.loss_only(ids, positions, targets, train=train, rng=fresh_rng())
            flat_param[index] = original
            numeric = (plus - minus) / (2.0 * step)
            analytic_value = flat_grad[index]
            scale = max(abs(analytic_value) + abs(numeric), 1e-8)
            worst = max(worst, abs(analytic_value - numeric) / scale)
    return worst
