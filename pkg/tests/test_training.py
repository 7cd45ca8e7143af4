"""Training loop behavior: memorization, early stopping, determinism."""

import numpy as np
import pytest

from eventcast.errors import TrainingError
from eventcast.neural import (
    TrainConfig,
    build_model,
    finetune,
    predict_distributions,
    pretrain,
)
from eventcast.sequencer import (
    WindowConfig,
    make_windows,
    mask_target,
    mask_targets,
    mask_windows_for_pretraining,
)


def tiny_model(seed=0, vocab=8, w=6):
    return build_model(
        "self_attn", vocab_size=vocab, max_window=w, seed=seed, width=8, layers=1, heads=2
    )


class TestMemorization:
    def test_single_window_loss_collapses(self):
        window = mask_target(
            make_windows([3, 4, 5, 6, 7, 3], WindowConfig(window_size=6))[0]
        )
        model = tiny_model()
        cfg = TrainConfig(batch_size=4, epochs=150, pretrain_lr=0.01, weight_decay=0.0, seed=0)
        result = pretrain(model, [window] * 4, cfg)
        assert result.train_losses[-1] < 0.1
        assert result.train_losses[-1] < result.train_losses[0]

    def test_deterministic_alternation_is_learned(self):
        # corpus A,B,A,B,... -> P(B | ...A, MASK) should dominate
        ids = [3, 4] * 40
        wcfg = WindowConfig(window_size=6, stride=1)
        windows = mask_targets(make_windows(ids, wcfg))
        model = tiny_model()
        cfg = TrainConfig(batch_size=16, epochs=80, pretrain_lr=0.01, weight_decay=0.0, seed=1)
        finetune(model, windows, cfg)
        probs = predict_distributions(model, windows[:2])
        for i, window in enumerate(windows[:2]):
            expected = window.original_ids[window.target_index]
            assert probs[i, 0, expected] > 0.9


class TestEarlyStopping:
    def test_stops_after_patience_epochs_without_improvement(self):
        # validation targets contradict the training targets, so validation
        # loss rises monotonically: best stays at epoch 1
        wcfg = WindowConfig(window_size=6)
        train = mask_targets(make_windows([3, 4, 5, 4, 3, 5], wcfg) * 16)
        valid = mask_targets(make_windows([3, 4, 5, 4, 3, 6], wcfg) * 4)
        model = tiny_model(seed=2)
        cfg = TrainConfig(batch_size=8, epochs=100, patience=4, pretrain_lr=0.01, weight_decay=0.0, seed=2)
        result = pretrain(model, train, cfg, valid_windows=valid)
        assert result.stopped_early
        assert result.epochs_run == 1 + cfg.patience
        assert result.best_epoch == 1

    def test_no_validation_set_runs_all_epochs(self):
        ids = [3, 4, 5] * 10
        windows = mask_targets(make_windows(ids, WindowConfig(window_size=6, stride=2)))
        cfg = TrainConfig(batch_size=8, epochs=5, seed=0)
        result = finetune(tiny_model(), windows, cfg)
        assert result.epochs_run == 5
        assert not result.stopped_early


class TestDeterminism:
    def _train_once(self, seed):
        ids = list(range(3, 8)) * 12
        wcfg = WindowConfig(window_size=5, stride=1, rng_seed=seed)
        windows = mask_windows_for_pretraining(make_windows(ids, wcfg), wcfg)
        model = build_model(
            "bilstm", vocab_size=8, max_window=5, seed=seed, width=6, hidden=5, layers=1
        )
        cfg = TrainConfig(batch_size=8, epochs=4, seed=seed)
        result = pretrain(model, windows, cfg)
        return result, model

    def test_identical_seeds_identical_curves_and_weights(self):
        first_result, first_model = self._train_once(7)
        second_result, second_model = self._train_once(7)
        assert first_result.train_losses == second_result.train_losses
        for name in first_model.params:
            np.testing.assert_array_equal(
                first_model.params[name], second_model.params[name]
            )

    def test_different_seeds_differ(self):
        a, _ = self._train_once(7)
        b, _ = self._train_once(8)
        assert a.train_losses != b.train_losses


class TestConfigRules:
    def test_finetune_lr_defaults_to_tenth(self):
        cfg = TrainConfig(pretrain_lr=0.001)
        assert cfg.effective_finetune_lr == pytest.approx(0.0001)
        override = TrainConfig(pretrain_lr=0.001, finetune_lr=0.5)
        assert override.effective_finetune_lr == 0.5

    def test_provenance_metadata(self):
        ids = [3, 4, 5] * 10
        windows = mask_targets(make_windows(ids, WindowConfig(window_size=6, stride=2)))
        cfg = TrainConfig(batch_size=8, epochs=2, seed=0)

        scratch = tiny_model()
        finetune(scratch, windows, cfg)
        assert scratch.metadata["pretrained"] is False
        assert scratch.metadata["finetuned"] is True

        pre = tiny_model()
        wcfg = WindowConfig(window_size=6, stride=2)
        pretrain(pre, mask_windows_for_pretraining(make_windows(ids, wcfg), wcfg), cfg)
        finetune(pre, windows, cfg)
        assert pre.metadata["pretrained"] is True

    def test_empty_window_set_rejected(self):
        with pytest.raises(TrainingError):
            pretrain(tiny_model(), [], TrainConfig())
