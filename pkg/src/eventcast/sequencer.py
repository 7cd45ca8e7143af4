"""Fixed-length windows over event-id streams, plus the two masking modes.

Pre-training masks a fixed fraction of positions per window; fine-tuning
and evaluation mask exactly the target slot (the last position or the
centre, depending on the configured target mode).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError
from .extractor import MASK_ID

logger = logging.getLogger(__name__)

TARGET_MODES = ("last", "centered")


@dataclass(frozen=True)
class WindowConfig:
    window_size: int
    stride: int = 1
    target_mode: str = "last"
    mask_rate: float = 0.25
    rng_seed: int = 0

    def __post_init__(self):
        if self.window_size < 2:
            raise ConfigurationError("window_size must be at least 2")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.target_mode not in TARGET_MODES:
            raise ConfigurationError(f"unknown target_mode {self.target_mode!r}")
        if not 0.0 < self.mask_rate < 1.0:
            raise ConfigurationError("mask_rate must lie in (0, 1)")

    @property
    def target_index(self) -> int:
        # centre of an even window is floor(w/2) by convention
        if self.target_mode == "centered":
            return self.window_size // 2
        return self.window_size - 1

    def mask_count(self) -> int:
        """Positions masked per window in pre-training: max(1, round(rate*w))."""
        return max(1, int(np.floor(self.mask_rate * self.window_size + 0.5)))


@dataclass(frozen=True)
class SequenceWindow:
    ids: tuple[int, ...]
    target_index: int
    masked_indices: frozenset[int] = field(default_factory=frozenset)
    original_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.original_ids:
            object.__setattr__(self, "original_ids", self.ids)
        w = len(self.ids)
        if not 0 <= self.target_index < w:
            raise ContractError("target_index out of range")
        if len(self.original_ids) != w:
            raise ContractError("original_ids length mismatch")
        for i in self.masked_indices:
            if not 0 <= i < w:
                raise ContractError("masked index out of range")
            if self.ids[i] != MASK_ID:
                raise ContractError("masked position does not hold the MASK id")
        for i in range(w):
            if i not in self.masked_indices and self.ids[i] != self.original_ids[i]:
                raise ContractError("ids differ from original_ids outside the mask")

    @property
    def width(self) -> int:
        return len(self.ids)

    def restore(self) -> "SequenceWindow":
        """Undo masking exactly, via the retained original ids."""
        return SequenceWindow(
            ids=self.original_ids, target_index=self.target_index
        )


@dataclass
class WindowStats:
    """Optional counters filled in by :func:`make_windows`."""

    built: int = 0
    too_short: int = 0
    tail_dropped: int = 0


def make_windows(
    ids: Sequence[int], cfg: WindowConfig, stats: WindowStats | None = None
) -> list[SequenceWindow]:
    """Slice a stream into unmasked windows at offsets 0, stride, 2*stride, ...

    Streams shorter than the window yield an empty list (counted in
    ``stats.too_short`` and logged); the tail remainder that no offset
    covers is counted in ``stats.tail_dropped``.
    """
    w = cfg.window_size
    n = len(ids)
    if n < w:
        if stats is not None:
            stats.too_short += 1
            stats.tail_dropped += n
        logger.warning("stream of %d ids is shorter than window size %d", n, w)
        return []
    windows = []
    last_offset = 0
    for offset in range(0, n - w + 1, cfg.stride):
        window_ids = tuple(int(i) for i in ids[offset : offset + w])
        windows.append(SequenceWindow(ids=window_ids, target_index=cfg.target_index))
        last_offset = offset
    if stats is not None:
        stats.built += len(windows)
        stats.tail_dropped += n - (last_offset + w)
    return windows


def mask_for_pretraining(
    window: SequenceWindow, cfg: WindowConfig, rng: np.random.Generator
) -> SequenceWindow:
    """Mask max(1, round(mask_rate*w)) positions chosen uniformly without replacement."""
    if window.masked_indices:
        raise ContractError("window is already masked")
    w = window.width
    count = max(1, int(np.floor(cfg.mask_rate * w + 0.5)))
    positions = rng.choice(w, size=count, replace=False)
    ids = list(window.ids)
    for p in positions:
        ids[p] = MASK_ID
    return SequenceWindow(
        ids=tuple(ids),
        target_index=window.target_index,
        masked_indices=frozenset(int(p) for p in positions),
        original_ids=window.ids,
    )


def mask_target(window: SequenceWindow) -> SequenceWindow:
    """Mask exactly the target slot; masking twice is a contract error."""
    if window.masked_indices:
        raise ContractError("window is already masked")
    ids = list(window.ids)
    ids[window.target_index] = MASK_ID
    return SequenceWindow(
        ids=tuple(ids),
        target_index=window.target_index,
        masked_indices=frozenset({window.target_index}),
        original_ids=window.ids,
    )


def mask_windows_for_pretraining(
    windows: Iterable[SequenceWindow], cfg: WindowConfig
) -> list[SequenceWindow]:
    """Deterministically mask a window list from ``cfg.rng_seed``."""
    rng = np.random.default_rng(cfg.rng_seed)
    return [mask_for_pretraining(w, cfg, rng) for w in windows]


def mask_targets(windows: Iterable[SequenceWindow]) -> list[SequenceWindow]:
    return [mask_target(w) for w in windows]


def windows_to_arrays(
    windows: Sequence[SequenceWindow],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack masked windows into (ids, mask_positions, targets) arrays.

    Requires a uniform mask count per window, which both masking modes
    guarantee for a fixed window size.  Mask positions are sorted ascending
    per window; targets are the pre-mask ids at those positions.
    """
    if not windows:
        raise ContractError("no windows to stack")
    counts = {len(w.masked_indices) for w in windows}
    if counts == {0}:
        raise ContractError("windows are unmasked; mask before stacking")
    if len(counts) != 1:
        raise ContractError("windows have differing mask counts")
    ids = np.array([w.ids for w in windows], dtype=np.int64)
    positions = np.array(
        [sorted(w.masked_indices) for w in windows], dtype=np.int64
    )
    targets = np.array(
        [[w.original_ids[p] for p in sorted(w.masked_indices)] for w in windows],
        dtype=np.int64,
    )
    return ids, positions, targets


def dump_window(window: SequenceWindow) -> str:
    """Debug form: ids space-separated with ``|`` before the target index."""
    parts = [str(i) for i in window.ids]
    parts.insert(window.target_index, "|")
    return " ".join(parts)


def dump_windows(windows: Iterable[SequenceWindow], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for window in windows:
            handle.write(dump_window(window) + "\n")
