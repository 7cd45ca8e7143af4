#!/usr/bin/env python3
"""Ablation matrix at desk scale: models x window sizes x pre-training.

Every cell trains with the same seed; baselines appear once since they
ignore the window and pre-training axes.  Also contrasts last-event and
centered-event prediction, where context from both sides is available.
"""

import pathlib

from eventcast import evalharness, extractor, synthgen
from eventcast.neural import TrainConfig
from eventcast.sequencer import WindowConfig

OUT = pathlib.Path(__file__).parent

grammar = synthgen.default_grammar()
train_tokens = synthgen.generate_tokens(grammar, 10_000, seed=3)
valid_tokens = synthgen.generate_tokens(grammar, 1_500, seed=4)
test_tokens = synthgen.generate_tokens(grammar, 1_500, seed=5)
vocab = extractor.build_vocabulary(train_tokens, rare_threshold=2)
dataset = evalharness.SequenceDataset(
    train_ids=vocab.encode_stream(train_tokens),
    valid_ids=vocab.encode_stream(valid_tokens),
    test_ids=vocab.encode_stream(test_tokens),
    vocab=vocab,
)

reports = evalharness.ablation_matrix(
    dataset,
    models=("markov", "ngram", "self_attn"),
    window_sizes=(8, 16),
    pretraining=(False, True),
    target_modes=("last", "centered"),
    train_cfg=TrainConfig(batch_size=128, epochs=4, seed=0),
    base_window=WindowConfig(window_size=8, stride=2),
    model_overrides=dict(width=32, layers=2, heads=2),
)

evalharness.write_report_csv(reports, OUT / "ablation.csv")
evalharness.write_model_comparison_csv(reports, OUT / "model_comparison.csv")

header = f"{'model':12s} {'w':>4s} {'mode':>9s} {'pretrain':>9s} {'top-1':>8s} {'top-10':>8s}"
print(header)
print("-" * len(header))
for r in reports:
    if r.error:
        print(f"{r.model:12s} {r.window_size:4d} {r.target_mode:>9s}  failed: {r.error}")
        continue
    print(
        f"{r.model:12s} {r.window_size:4d} {r.target_mode:>9s} "
        f"{'on' if r.pretraining else 'off':>9s} "
        f"{100 * r.top_n[1]:7.2f}% {100 * r.top_n[10]:7.2f}%"
    )
print(f"\nwrote {OUT / 'ablation.csv'} and {OUT / 'model_comparison.csv'}")
