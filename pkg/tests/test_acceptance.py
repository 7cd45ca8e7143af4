"""Acceptance suite: one test per criterion, at the stated tolerances.

Exact-law checks, oracle equivalence, and synthetic-data analogues of the
forecasting/anomaly experiments.  Each test prints one PASS line (visible
with ``pytest -s`` or ``-rP``); training-based criteria share session
fixtures so the suite stays inside its runtime budgets.
"""

import time

import numpy as np
import pytest
from conftest import brute_auc, brute_force_predict, brute_fpr, brute_top_n

from eventcast import baselines, evalharness, extractor, synthgen
from eventcast.anomaly import ranks_of, score, scores_of
from eventcast.cli import main as cli_main
from eventcast.neural import (
    TrainConfig,
    attention,
    build_model,
    finetune,
    gradient_check,
    predict_distributions,
    pretrain,
)
from eventcast.neural import ops as neural_ops
from eventcast.sequencer import (
    SequenceWindow,
    WindowConfig,
    make_windows,
    mask_for_pretraining,
    mask_targets,
    mask_windows_for_pretraining,
)

E = np.e


def report(num: int, text: str) -> None:
    print(f"ACCEPTANCE #{num:02d} PASS - {text}")


# ---------------------------------------------------------------- fixtures


def _grammar_run(ids, test_ids, vocab, target_mode, seed, epochs, pretrain_epochs=0):
    wcfg = WindowConfig(window_size=16, stride=1, target_mode=target_mode, rng_seed=seed)
    train = make_windows(ids, wcfg)
    test = mask_targets(make_windows(test_ids, wcfg))
    model = build_model(
        "self_attn", vocab_size=vocab.size, max_window=16, seed=seed,
        width=32, layers=2, heads=2,
    )
    cfg = TrainConfig(batch_size=128, epochs=epochs, seed=seed)
    if pretrain_epochs:
        pre_cfg = TrainConfig(batch_size=128, epochs=pretrain_epochs, seed=seed)
        pretrain(model, mask_windows_for_pretraining(train, wcfg), pre_cfg)
    finetune(model, mask_targets(train), cfg)
    probs = predict_distributions(model, test)[:, 0, :]
    truth = np.array([w.original_ids[w.target_index] for w in test])
    ranks = ranks_of(probs, truth)
    return {"top1": float(np.mean(ranks == 0)), "top10": float(np.mean(ranks < 10))}


@pytest.fixture(scope="session")
def deterministic_runs():
    """Self-attention runs on the 20-event deterministic grammar.

    Same data and seeds across runs; total epoch budgets are matched where
    the criterion compares two training regimes.
    """
    started = time.monotonic()
    grammar = synthgen.deterministic_grammar()
    train_tokens = synthgen.generate_tokens(grammar, 3000, seed=10)
    test_tokens = synthgen.generate_tokens(grammar, 800, seed=11)
    vocab = extractor.build_vocabulary(train_tokens, rare_threshold=2)
    train_ids = vocab.encode_stream(train_tokens)
    test_ids = vocab.encode_stream(test_tokens)
    runs = {
        "last": _grammar_run(train_ids, test_ids, vocab, "last", 0, epochs=10),
        "centered": _grammar_run(train_ids, test_ids, vocab, "centered", 0, epochs=10),
        "scratch": _grammar_run(train_ids, test_ids, vocab, "last", 0, epochs=16),
        "pretrained": _grammar_run(
            train_ids, test_ids, vocab, "last", 0, epochs=8, pretrain_epochs=8
        ),
    }
    runs["elapsed"] = time.monotonic() - started
    return runs


@pytest.fixture(scope="session")
def injection_pipeline():
    """Self-attention model trained on clean default-grammar traffic."""
    started = time.monotonic()
    grammar = synthgen.default_grammar()
    train_tokens = synthgen.generate_tokens(grammar, 30_000, seed=30)
    test_tokens = synthgen.generate_tokens(grammar, 4_000, seed=31)
    vocab = extractor.build_vocabulary(train_tokens, rare_threshold=2)
    w = 16
    wcfg = WindowConfig(window_size=w, stride=2, target_mode="last", rng_seed=0)
    train_windows = mask_targets(make_windows(vocab.encode_stream(train_tokens), wcfg))
    model = build_model(
        "self_attn", vocab_size=vocab.size, max_window=w, seed=0,
        width=32, layers=2, heads=2,
    )
    finetune(model, train_windows, TrainConfig(batch_size=128, epochs=8, seed=0))

    def score_stream(tokens):
        ids = vocab.encode_stream(tokens)
        score_cfg = WindowConfig(window_size=w, stride=1, target_mode="last", rng_seed=0)
        windows = mask_targets(make_windows(ids, score_cfg))
        probs = predict_distributions(model, windows)[:, 0, :]
        truth = np.array([win.original_ids[win.target_index] for win in windows])
        return scores_of(ranks_of(probs, truth))

    return {
        "vocab": vocab,
        "test_tokens": test_tokens,
        "score_stream": score_stream,
        "window": w,
        "elapsed": time.monotonic() - started,
    }


# ---------------------------------------------------------------- criteria


def test_c01_anomaly_score_law():
    started = time.monotonic()
    assert score(0) == 0.0
    assert score(1) == 0.5
    assert score(9) == 0.9
    assert score(99) == 0.99
    taus = np.arange(0, 10**6 + 1)
    values = scores_of(taus)
    assert np.all(np.diff(values) > 0)
    elapsed = time.monotonic() - started
    assert elapsed < 1.0
    report(1, f"score law exact at taus 0/1/9/99, monotone over [0, 1e6] in {elapsed:.2f}s")


def test_c02_baseline_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(202)
    checked = 0
    for _ in range(100):
        vocab_size = int(rng.integers(2, 21))
        length = int(rng.integers(10, 1001))
        events = rng.integers(0, vocab_size, size=length).tolist()
        for order in (2, 3):
            table = baselines.fit(events, order, vocab_size=vocab_size)
            for _ in range(3):
                context = rng.integers(0, vocab_size, size=order - 1).tolist()
                got = baselines.predict(table, context).probs
                expected = brute_force_predict(events, order, context, vocab_size)
                np.testing.assert_allclose(got, expected, atol=1e-12)
                checked += 1
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    report(2, f"markov and 3-gram matched brute force on {checked} contexts in {elapsed:.1f}s")


def test_c03_masking_law():
    started = time.monotonic()
    rng = np.random.default_rng(303)
    for w in (8, 16, 32, 64, 128):
        cfg = WindowConfig(window_size=w, mask_rate=0.25)
        base = SequenceWindow(ids=tuple(range(3, 3 + w)), target_index=w - 1)
        expected = max(1, round(0.25 * w))
        for _ in range(10_000):
            masked = mask_for_pretraining(base, cfg, rng)
            assert len(masked.masked_indices) == expected
            assert masked.restore().ids == base.ids
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    report(3, f"mask count exact and reconstruction lossless over 50k windows in {elapsed:.1f}s")


def test_c04_attention_correctness(monkeypatch):
    # single position: softmax over one logit is exactly 1 -> output is V
    v = np.array([[3.25, -1.5]])
    np.testing.assert_array_equal(attention(np.array([[2.0, 1.0]]), np.array([[0.5, 0.5]]), v, 2), v)
    # zero logits: uniform weights -> column means
    q, k = np.zeros((3, 2)), np.zeros((4, 2))
    values = np.arange(8.0).reshape(4, 2)
    np.testing.assert_allclose(
        attention(q, k, values, 2), np.tile(values.mean(axis=0), (3, 1)), atol=1e-12
    )
    # hand-computed 2x1 case: softmax([1,0]) -> first output e/(e+1)
    out = attention(np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]]), 1)
    assert out[0, 0] == pytest.approx(E / (E + 1), abs=1e-12)

    # softmax rows observed during a full tiny-model forward pass
    sums = []
    original = neural_ops._check_attention_rows

    def recording(weights):
        sums.append(weights.sum(axis=-1).reshape(-1))
        original(weights)

    monkeypatch.setattr(neural_ops, "_check_attention_rows", recording)
    model = build_model("self_attn", vocab_size=9, max_window=8, seed=0, width=8, layers=2, heads=2)
    ids = np.arange(8)[None, :] % 9
    model.predict_probs(ids, np.array([[7]]))
    rows = np.concatenate(sums)
    assert rows.size == 2 * 2 * 8  # layers x heads x positions
    assert np.abs(rows - 1.0).max() <= 1e-6
    report(4, f"identity/uniform/hand cases exact; {rows.size} softmax rows within 1e-6")


def test_c05_gradient_check_all_architectures():
    started = time.monotonic()
    rng = np.random.default_rng(505)
    ids = rng.integers(0, 8, size=20)
    cfg = WindowConfig(window_size=4, stride=2, rng_seed=5)
    windows = mask_windows_for_pretraining(make_windows(ids, cfg), cfg)[:4]
    errors = {}
    for model_type in ("self_attn", "bilstm", "lstm_attn"):
        kwargs = (
            dict(width=4, layers=1, heads=1)
            if model_type == "self_attn"
            else dict(width=4, hidden=4, layers=1, dropout=0.0)
        )
        model = build_model(model_type, vocab_size=8, max_window=4, seed=5, **kwargs)
        errors[model_type] = gradient_check(model, windows, step=1e-4)
        assert errors[model_type] < 1e-3
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    summary = ", ".join(f"{k}={v:.1e}" for k, v in errors.items())
    report(5, f"finite differences at 1e-4: {summary} in {elapsed:.0f}s")


def test_c06_learnability(deterministic_runs):
    top1 = deterministic_runs["last"]["top1"]
    elapsed = deterministic_runs["elapsed"]
    assert top1 >= 0.90
    assert elapsed < 600.0
    report(6, f"deterministic grammar held-out top-1 = {top1:.3f} (fixture {elapsed:.0f}s)")


def test_c07_long_range_advantage():
    started = time.monotonic()
    branching, distance, w = 4, 10, 32
    grammar = synthgen.planted_dependency_grammar(branching=branching, distance=distance)
    train_tokens = synthgen.generate_tokens(grammar, 8000, seed=20)
    test_tokens = synthgen.generate_tokens(grammar, 2500, seed=21)
    vocab = extractor.build_vocabulary(train_tokens, rare_threshold=2)
    train_ids = vocab.encode_stream(train_tokens)
    test_ids = vocab.encode_stream(test_tokens)
    dependents = {
        vocab.encode(f"GET /result/{name} 2")
        for name in ("alpha", "bravo", "charlie", "delta")
    }

    wcfg = WindowConfig(window_size=w, stride=1, target_mode="last", rng_seed=0)
    train_windows = mask_targets(make_windows(train_ids, wcfg))
    test_windows = mask_targets(make_windows(test_ids, wcfg))
    dep = [i for i, win in enumerate(test_windows) if win.original_ids[w - 1] in dependents]
    truth = np.array([test_windows[i].original_ids[w - 1] for i in dep])
    assert len(dep) > 100

    table = baselines.fit(train_ids, 3, vocab_size=vocab.size)
    ngram_probs = np.stack(
        [baselines.predict(table, test_windows[i].original_ids[w - 3 : w - 1]).probs for i in dep]
    )
    ngram_top1 = float(np.mean(ranks_of(ngram_probs, truth) == 0))

    model = build_model(
        "self_attn", vocab_size=vocab.size, max_window=w, seed=0, width=32, layers=2, heads=2
    )
    finetune(model, train_windows, TrainConfig(batch_size=128, epochs=10, seed=0))
    probs = predict_distributions(model, [test_windows[i] for i in dep])[:, 0, :]
    attn_top1 = float(np.mean(ranks_of(probs, truth) == 0))

    chance = 1.0 / branching
    elapsed = time.monotonic() - started
    assert abs(ngram_top1 - chance) <= 0.10
    assert attn_top1 >= ngram_top1 + 0.20
    assert elapsed < 900.0
    report(
        7,
        f"dependent-slot top-1: self-attn {attn_top1:.3f} vs 3-gram {ngram_top1:.3f} "
        f"(chance {chance:.2f}) in {elapsed:.0f}s",
    )


def test_c08_injection_separation(injection_pipeline):
    started = time.monotonic()
    pipe = injection_pipeline
    corrupted, labels = synthgen.inject_random(
        pipe["test_tokens"], 0.01, pipe["vocab"], seed=32
    )
    scores = pipe["score_stream"](corrupted)
    injected_positions = {label.position for label in labels}
    offset = pipe["window"] - 1
    is_injected = np.array([(i + offset) in injected_positions for i in range(len(scores))])
    normal_mean = float(scores[~is_injected].mean())
    injected_mean = float(scores[is_injected].mean())
    auc = evalharness.roc(scores[~is_injected], scores[is_injected]).auc
    elapsed = pipe["elapsed"] + time.monotonic() - started
    assert normal_mean <= 0.4
    assert injected_mean >= 0.8
    assert auc >= 0.95
    assert elapsed < 900.0
    report(
        8,
        f"mean s normal {normal_mean:.3f} <= 0.4, injected {injected_mean:.3f} >= 0.8, "
        f"AUC {auc:.3f} >= 0.95 in {elapsed:.0f}s",
    )


def test_c09_rare_path_detection(injection_pipeline):
    pipe = injection_pipeline
    corrupted, labels = synthgen.inject_attack(
        pipe["test_tokens"], "scanner_burst", seed=33, burst_length=20
    )
    assert all(pipe["vocab"].encode(label.token) == extractor.RARE_ID for label in labels)
    scores = pipe["score_stream"](corrupted)
    burst_positions = {label.position for label in labels}
    offset = pipe["window"] - 1
    at_burst = np.array([(i + offset) in burst_positions for i in range(len(scores))])
    burst_mean = float(scores[at_burst].mean())
    assert burst_mean >= 0.9
    report(9, f"all 20 burst events encode to RARE; mean s = {burst_mean:.3f} >= 0.9")


def test_c10_centered_event_improvement(deterministic_runs):
    centered = deterministic_runs["centered"]["top1"]
    last = deterministic_runs["last"]["top1"]
    assert centered >= last
    report(10, f"centered top-1 {centered:.3f} >= last top-1 {last:.3f} (same seed/budget)")


def test_c11_pretraining_benefit(deterministic_runs):
    pretrained = deterministic_runs["pretrained"]["top10"]
    scratch = deterministic_runs["scratch"]["top10"]
    assert pretrained >= scratch
    report(11, f"pretrained top-10 {pretrained:.3f} >= from-scratch top-10 {scratch:.3f}")


def test_c12_metric_monotonicity_and_oracles():
    rng = np.random.default_rng(1212)
    size = 9
    pairs = [
        (d / d.sum(), int(rng.integers(0, size)))
        for d in rng.random((50, size))
    ]
    values = [evalharness.top_n_accuracy(pairs, n) for n in range(1, size + 1)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    for n in range(1, size + 1):
        assert evalharness.top_n_accuracy(pairs, n) == brute_top_n(pairs, n)

    ranks = rng.integers(0, 40, size=50)
    curve = evalharness.fpr_curve(ranks, range(1, 41))
    fprs = [v for _, v in curve]
    assert all(a >= b for a, b in zip(fprs, fprs[1:]))
    assert all(v == brute_fpr(ranks, k) for k, v in curve)

    normal = rng.integers(0, 5, size=30) / 5.0
    anomalous = rng.integers(0, 5, size=40) / 5.0
    assert evalharness.roc(normal, anomalous).auc == pytest.approx(
        brute_auc(normal, anomalous), abs=1e-15
    )
    assert evalharness.roc([0.0] * 4, [0.9] * 4).auc == 1.0
    assert evalharness.roc([0.1, 0.4, 0.7], [0.1, 0.4, 0.7]).auc == 0.5
    assert evalharness.roc([0.0, 0.5], [0.5, 0.9]).auc == pytest.approx(0.875, abs=1e-15)
    report(12, "top-N/FPR monotone; all metrics equal brute force; AUC 1.0/0.5/0.875 reproduced")


def test_c13_end_to_end_determinism(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli_main(["synth", "--out", "data", "--days", "10", "--events-per-day", "200", "--seed", "1"]) == 0
    from eventcast.config import RunConfig

    artifacts = {}
    for run_name in ("one", "two"):
        cfg = RunConfig(
            input_path="data/log.jsonl", run_root=f"runs_{run_name}",
            train_days=6, valid_days=2, test_days=2, window_size=6,
            model="self_attn", width=8, layers=1, heads=2,
            epochs=2, batch_size=64, seed=9,
        )
        config_path = tmp_path / f"config_{run_name}.json"
        cfg.save(config_path)
        for command in (
            ["ingest", "--config", str(config_path)],
            ["extract", "--config", str(config_path)],
            ["train", "--config", str(config_path), "--model", "self_attn"],
            ["evaluate", "--config", str(config_path), "--models", "markov", "ngram", "--windows", "6"],
        ):
            assert cli_main(command) == 0
        base = tmp_path / f"runs_{run_name}" / cfg.config_hash()
        artifacts[run_name] = {
            "vocab": (base / "extract/vocab.tsv").read_bytes(),
            "checkpoint": (base / "train/self_attn.ckpt").read_bytes(),
            "report": (base / "evaluate/ablation.csv").read_bytes(),
        }
    for kind in ("vocab", "checkpoint", "report"):
        assert artifacts["one"][kind] == artifacts["two"][kind], f"{kind} differs"
    report(13, "two pipeline runs produced byte-identical vocabulary, checkpoint, report")


def test_c14_gibberish_detector():
    model = extractor.fit_char_markov(extractor.bundled_word_corpus())
    rng = np.random.default_rng(1414)
    words = [w for w in extractor.bundled_word_corpus() if len(w) >= 3]
    sample = [words[i] for i in rng.choice(len(words), size=1000, replace=False)]
    chars = np.array(list("abcdefghijklmnopqrstuvwxyz0123456789"))
    randoms = ["".join(rng.choice(chars, size=rng.integers(8, 13))) for _ in range(1000)]
    correct = sum(not extractor.is_random_element(model, w) for w in sample)
    correct += sum(extractor.is_random_element(model, s) for s in randoms)
    accuracy = correct / 2000
    assert accuracy >= 0.95
    report(14, f"dictionary vs uniform-random separation accuracy = {accuracy:.3f} >= 0.95")
