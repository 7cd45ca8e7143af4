"""Evaluation: Top-N accuracy, FPR-vs-threshold curves, ROC/AUC, ablations.

The ablation matrix trains one model per (architecture, window size,
pre-training flag, target mode) cell with identical seeds across cells and
emits CSV report files; the contract is the data, not any rendering.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import baselines
from .anomaly import ranks_of
from .distribution import PredictionDistribution, as_probs
from .errors import MetricError
from .extractor import EventVocabulary
from .neural.models import build_model
from .neural.training import (
    TrainConfig,
    finetune,
    predict_distributions,
    pretrain,
)
from .sequencer import (
    WindowConfig,
    WindowStats,
    make_windows,
    mask_targets,
    mask_windows_for_pretraining,
)

logger = logging.getLogger(__name__)

BASELINE_MODELS = ("markov", "ngram")
NEURAL_MODELS = ("bilstm", "lstm_attn", "self_attn")
ALL_MODELS = BASELINE_MODELS + NEURAL_MODELS

WINDOW_SIZE_GRID = (8, 16, 32, 64, 128)


def _pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    dists, truths = [], []
    for dist, true_id in pairs:
        dists.append(as_probs(dist))
        truths.append(int(true_id))
    return np.stack(dists), np.array(truths, dtype=np.int64)


def top_n_accuracy(
    pairs: Sequence[tuple[PredictionDistribution | np.ndarray, int]], n: int
) -> float:
    """Fraction of pairs whose true event ranks inside the top n."""
    if n < 1:
        raise MetricError("N must be >= 1")
    if not len(pairs):
        raise MetricError("top-N accuracy is undefined for no pairs")
    dists, truths = _pairs_to_arrays(pairs)
    ranks = ranks_of(dists, truths)
    return float(np.mean(ranks < n))


def top_n_from_ranks(ranks: np.ndarray, n: int) -> float:
    if not len(ranks):
        raise MetricError("top-N accuracy is undefined for no ranks")
    return float(np.mean(np.asarray(ranks) < n))


def fpr_curve(
    normal_ranks: Sequence[int], thresholds: Sequence[int]
) -> list[tuple[int, float]]:
    """False positive rate per alarm threshold K over known-normal events."""
    ranks = np.asarray(normal_ranks)
    if ranks.size == 0:
        raise MetricError("FPR is undefined for no normal events")
    return [(int(k), float(np.mean(ranks >= k))) for k in thresholds]


@dataclass
class RocResult:
    points: list[tuple[float, float]]   # (FPR, TPR), ascending FPR
    auc: float
    thresholds: list[float] = field(default_factory=list)


def roc(
    normal_scores: Sequence[float], anomalous_scores: Sequence[float]
) -> RocResult:
    """ROC over anomaly scores (higher = more anomalous) plus trapezoid AUC.

    Thresholds sweep the union of observed scores in descending order;
    grouping tied scores makes the trapezoid AUC equal to the rank-average
    (Mann-Whitney) statistic.
    """
    normal = np.asarray(normal_scores, dtype=np.float64)
    anomalous = np.asarray(anomalous_scores, dtype=np.float64)
    if normal.size == 0 or anomalous.size == 0:
        raise MetricError("ROC needs both normal and anomalous scores")
    thresholds = np.unique(np.concatenate([normal, anomalous]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(np.mean(normal >= t))
        tpr = float(np.mean(anomalous >= t))
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.trapezoid(ys, xs))
    return RocResult(points=points, auc=auc, thresholds=[float(t) for t in thresholds])


@dataclass
class EvaluationReport:
    model: str
    window_size: int
    target_mode: str
    pretraining: bool
    seed: int
    n_evaluated: int
    top_n: dict[int, float]
    fpr: list[tuple[int, float]] = field(default_factory=list)
    roc_auc: float | None = None
    error: str | None = None

    @property
    def fingerprint(self) -> str:
        pre = "pre" if self.pretraining else "scratch"
        return f"{self.model}-w{self.window_size}-{self.target_mode}-{pre}-s{self.seed}"


@dataclass
class SequenceDataset:
    """Encoded id streams per split, plus the vocabulary that encoded them."""

    train_ids: np.ndarray
    valid_ids: np.ndarray
    test_ids: np.ndarray
    vocab: EventVocabulary


def _window_sets(dataset: SequenceDataset, wcfg: WindowConfig, eval_stride: int | None):
    eval_cfg = WindowConfig(
        window_size=wcfg.window_size,
        stride=eval_stride if eval_stride is not None else wcfg.window_size,
        target_mode=wcfg.target_mode,
        mask_rate=wcfg.mask_rate,
        rng_seed=wcfg.rng_seed,
    )
    stats = WindowStats()
    train = make_windows(dataset.train_ids, wcfg, stats)
    valid = make_windows(dataset.valid_ids, eval_cfg, stats)
    test = make_windows(dataset.test_ids, eval_cfg, stats)
    return train, valid, test


def evaluate_baseline(
    dataset: SequenceDataset,
    model: str,
    wcfg: WindowConfig,
    top_ns: Sequence[int] = (1, 10),
    eval_stride: int | None = None,
) -> EvaluationReport:
    """Fit and score a counting baseline on the test windows."""
    order = 2 if model == "markov" else 3
    table = baselines.fit(dataset.train_ids, order, vocab_size=dataset.vocab.size)
    _, _, test = _window_sets(dataset, wcfg, eval_stride)
    contexts = [w.ids[max(0, w.target_index - (order - 1)) : w.target_index] for w in test]
    truths = np.array([w.ids[w.target_index] for w in test], dtype=np.int64)
    dists = np.stack([baselines.predict(table, c).probs for c in contexts])
    ranks = ranks_of(dists, truths)
    return EvaluationReport(
        model=model,
        window_size=wcfg.window_size,
        target_mode=wcfg.target_mode,
        pretraining=False,
        seed=wcfg.rng_seed,
        n_evaluated=len(test),
        top_n={n: top_n_from_ranks(ranks, n) for n in top_ns},
    )


def evaluate_neural(
    dataset: SequenceDataset,
    model_type: str,
    wcfg: WindowConfig,
    train_cfg: TrainConfig,
    pretraining: bool,
    model_overrides: dict | None = None,
    pretrain_epochs: int | None = None,
    top_ns: Sequence[int] = (1, 10),
    eval_stride: int | None = None,
) -> EvaluationReport:
    """Train one neural cell (optionally pre-trained) and score it."""
    train, valid, test = _window_sets(dataset, wcfg, eval_stride)
    model = build_model(
        model_type,
        vocab_size=dataset.vocab.size,
        max_window=wcfg.window_size,
        seed=train_cfg.seed,
        **(model_overrides or {}),
    )
    if pretraining:
        masked = mask_windows_for_pretraining(train, wcfg)
        pre_cfg = train_cfg
        if pretrain_epochs is not None:
            pre_cfg = replace(train_cfg, epochs=pretrain_epochs)
        pretrain(model, masked, pre_cfg, mask_windows_for_pretraining(valid, wcfg) or None)
    finetune(model, mask_targets(train), train_cfg, mask_targets(valid) or None)
    test_masked = mask_targets(test)
    probs = predict_distributions(model, test_masked)[:, 0, :]
    truths = np.array([w.original_ids[w.target_index] for w in test_masked], dtype=np.int64)
    ranks = ranks_of(probs, truths)
    return EvaluationReport(
        model=model_type,
        window_size=wcfg.window_size,
        target_mode=wcfg.target_mode,
        pretraining=pretraining,
        seed=train_cfg.seed,
        n_evaluated=len(test_masked),
        top_n={n: top_n_from_ranks(ranks, n) for n in top_ns},
    )


def ablation_matrix(
    dataset: SequenceDataset,
    models: Sequence[str] = ALL_MODELS,
    window_sizes: Sequence[int] = WINDOW_SIZE_GRID,
    pretraining: Sequence[bool] = (True, False),
    target_modes: Sequence[str] = ("last",),
    train_cfg: TrainConfig = TrainConfig(),
    base_window: WindowConfig | None = None,
    model_overrides: dict | None = None,
    top_ns: Sequence[int] = (1, 10),
    eval_stride: int | None = None,
) -> list[EvaluationReport]:
    """One report per configuration cell, identical seeds across cells.

    Baselines are window-independent (the Markov model uses one previous
    event, the 3-gram two) and ignore the pre-training axis; a failed cell
    is recorded with its error and the matrix continues.
    """
    reports: list[EvaluationReport] = []
    base = base_window or WindowConfig(window_size=window_sizes[0])
    for mode in target_modes:
        for model in models:
            if model in BASELINE_MODELS:
                combos = [(window_sizes[0], False)]
            else:
                combos = [(w, p) for w in window_sizes for p in pretraining]
            for window_size, pre in combos:
                wcfg = WindowConfig(
                    window_size=window_size,
                    stride=base.stride,
                    target_mode=mode,
                    mask_rate=base.mask_rate,
                    rng_seed=base.rng_seed,
                )
                try:
                    if model in BASELINE_MODELS:
                        report = evaluate_baseline(
                            dataset, model, wcfg, top_ns, eval_stride
                        )
                    else:
                        report = evaluate_neural(
                            dataset,
                            model,
                            wcfg,
                            train_cfg,
                            pre,
                            model_overrides,
                            top_ns=top_ns,
                            eval_stride=eval_stride,
                        )
                except Exception as exc:  # record and continue
                    logger.warning("ablation cell failed: %s", exc)
                    report = EvaluationReport(
                        model=model,
                        window_size=window_size,
                        target_mode=mode,
                        pretraining=pre,
                        seed=train_cfg.seed,
                        n_evaluated=0,
                        top_n={},
                        error=str(exc),
                    )
                reports.append(report)
    return reports


def write_report_csv(reports: Iterable[EvaluationReport], path, top_ns=(1, 10)) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = ["model", "window", "target_mode", "pretraining"]
        header += [f"top{n}_pct" for n in top_ns]
        header += ["n_evaluated", "error"]
        writer.writerow(header)
        for report in reports:
            row = [
                report.model,
                report.window_size,
                report.target_mode,
                "on" if report.pretraining else "off",
            ]
            for n in top_ns:
                value = report.top_n.get(n)
                row.append("" if value is None else f"{100.0 * value:.2f}")
            row.append(report.n_evaluated)
            row.append(report.error or "")
            writer.writerow(row)


def write_model_comparison_csv(reports: Sequence[EvaluationReport], path) -> None:
    """Best cell per model, Top-1/Top-10 percentage columns."""
    best: dict[str, EvaluationReport] = {}
    for report in reports:
        if report.error:
            continue
        current = best.get(report.model)
        if current is None or report.top_n.get(1, 0.0) > current.top_n.get(1, 0.0):
            best[report.model] = report
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["model", "top1_pct", "top10_pct"])
        for model in sorted(best):
            report = best[model]
            writer.writerow(
                [
                    model,
                    f"{100.0 * report.top_n.get(1, 0.0):.2f}",
                    f"{100.0 * report.top_n.get(10, 0.0):.2f}",
                ]
            )


def write_fpr_csv(curve: Sequence[tuple[int, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["k", "fpr"])
        for k, value in curve:
            writer.writerow([k, repr(value)])


def write_roc_csv(result: RocResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in result.points:
            writer.writerow([repr(fpr), repr(tpr)])
        writer.writerow(["auc", repr(result.auc)])
