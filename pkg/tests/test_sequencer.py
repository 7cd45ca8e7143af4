"""Window construction and the two masking modes."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventcast.errors import ContractError
from eventcast.extractor import MASK_ID
from eventcast.sequencer import (
    SequenceWindow,
    WindowConfig,
    WindowStats,
    dump_window,
    make_windows,
    mask_for_pretraining,
    mask_target,
    mask_targets,
    mask_windows_for_pretraining,
    windows_to_arrays,
)


class TestMakeWindows:
    def test_count_and_last_target(self):
        cfg = WindowConfig(window_size=8, stride=1, target_mode="last")
        windows = make_windows(list(range(10)), cfg)
        assert len(windows) == 3
        assert all(w.target_index == 7 for w in windows)
        assert windows[0].ids == tuple(range(8))
        assert windows[2].ids == tuple(range(2, 10))

    def test_centered_target_even_window(self):
        cfg = WindowConfig(window_size=8, target_mode="centered")
        windows = make_windows(list(range(8)), cfg)
        assert windows[0].target_index == 4

    def test_short_stream_empty(self):
        cfg = WindowConfig(window_size=8)
        stats = WindowStats()
        assert make_windows([1, 2, 3, 4, 5], cfg, stats) == []
        assert stats.too_short == 1

    def test_partition_with_full_stride(self):
        cfg = WindowConfig(window_size=4, stride=4)
        stats = WindowStats()
        ids = list(range(11))
        windows = make_windows(ids, cfg, stats)
        covered = [i for w in windows for i in w.ids]
        assert covered == ids[:8]
        assert stats.tail_dropped == 3
        assert stats.built == 2


class TestPretrainingMask:
    def test_mask_counts(self):
        rng = np.random.default_rng(0)
        for w, expected in [(16, 4), (8, 2), (128, 32), (5, 1)]:
            cfg = WindowConfig(window_size=w, mask_rate=0.25)
            window = make_windows(list(range(w)), cfg)[0]
            masked = mask_for_pretraining(window, cfg, rng)
            assert len(masked.masked_indices) == expected

    def test_minimum_one_mask(self):
        cfg = WindowConfig(window_size=3, mask_rate=0.01)
        window = make_windows([5, 6, 7], cfg)[0]
        masked = mask_for_pretraining(window, cfg, np.random.default_rng(0))
        assert len(masked.masked_indices) == 1

    def test_masked_positions_hold_mask_id(self):
        cfg = WindowConfig(window_size=8)
        window = make_windows(list(range(10, 18)), cfg)[0]
        masked = mask_for_pretraining(window, cfg, np.random.default_rng(1))
        for i in range(8):
            if i in masked.masked_indices:
                assert masked.ids[i] == MASK_ID
            else:
                assert masked.ids[i] == window.ids[i]

    def test_seed_determinism(self):
        cfg = WindowConfig(window_size=8, rng_seed=123)
        windows = make_windows(list(range(20)), cfg)
        first = mask_windows_for_pretraining(windows, cfg)
        second = mask_windows_for_pretraining(windows, cfg)
        assert first == second

    def test_reconstruction(self):
        cfg = WindowConfig(window_size=8)
        window = make_windows(list(range(8)), cfg)[0]
        masked = mask_for_pretraining(window, cfg, np.random.default_rng(2))
        assert masked.restore() == window

    def test_double_masking_rejected(self):
        cfg = WindowConfig(window_size=8)
        window = make_windows(list(range(8)), cfg)[0]
        masked = mask_for_pretraining(window, cfg, np.random.default_rng(3))
        with pytest.raises(ContractError):
            mask_for_pretraining(masked, cfg, np.random.default_rng(3))

    @given(
        w=st.sampled_from([8, 16, 32, 64, 128]),
        rate=st.floats(min_value=0.05, max_value=0.75),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=40, deadline=None)
    def test_mask_count_law(self, w, rate, seed):
        cfg = WindowConfig(window_size=w, mask_rate=rate)
        window = SequenceWindow(ids=tuple(range(w)), target_index=w - 1)
        masked = mask_for_pretraining(window, cfg, np.random.default_rng(seed))
        assert len(masked.masked_indices) == max(1, int(np.floor(rate * w + 0.5)))
        assert masked.restore().ids == window.ids


class TestTargetMask:
    def test_last_mode(self):
        cfg = WindowConfig(window_size=8, target_mode="last")
        masked = mask_target(make_windows(list(range(8)), cfg)[0])
        assert masked.masked_indices == frozenset({7})
        assert masked.ids[7] == MASK_ID

    def test_centered_mode(self):
        cfg = WindowConfig(window_size=8, target_mode="centered")
        masked = mask_target(make_windows(list(range(8)), cfg)[0])
        assert masked.masked_indices == frozenset({4})

    def test_twice_is_error(self):
        cfg = WindowConfig(window_size=8)
        masked = mask_target(make_windows(list(range(8)), cfg)[0])
        with pytest.raises(ContractError):
            mask_target(masked)


class TestArraysAndDump:
    def test_windows_to_arrays(self):
        cfg = WindowConfig(window_size=4, stride=4)
        windows = mask_targets(make_windows(list(range(8)), cfg))
        ids, positions, targets = windows_to_arrays(windows)
        assert ids.shape == (2, 4)
        assert positions.tolist() == [[3], [3]]
        assert targets.tolist() == [[3], [7]]

    def test_unmasked_rejected(self):
        cfg = WindowConfig(window_size=4)
        with pytest.raises(ContractError):
            windows_to_arrays(make_windows(list(range(4)), cfg))

    def test_dump_format(self):
        window = SequenceWindow(ids=(5, 3, 2, 9), target_index=2)
        assert dump_window(window) == "5 3 | 2 9"
        last = SequenceWindow(ids=(1, 2, 3), target_index=2)
        assert dump_window(last) == "1 2 | 3"
