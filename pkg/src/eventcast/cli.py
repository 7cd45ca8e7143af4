"""Command line: synth -> ingest -> extract -> train -> evaluate / score / report.

Every command is deterministic given identical inputs and seed, writes into
a run directory keyed by the config hash, and never mutates its inputs.
Exit codes: 0 success, 1 usage, 2 data error, 3 acceptance-threshold failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import anomaly, baselines, evalharness, extractor, ingest, synthgen
from .config import RunConfig
from .errors import CompatibilityError, ConfigurationError, EventcastError
from .neural import (
    TrainConfig,
    build_model,
    file_sha256,
    finetune,
    load_checkpoint,
    predict_distributions,
    pretrain,
    save_checkpoint,
    write_loss_curve,
)
from .sequencer import (
    WindowConfig,
    make_windows,
    mask_targets,
    mask_windows_for_pretraining,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ACCEPTANCE = 3

GRAMMARS = {
    "default": synthgen.default_grammar,
    "deterministic": synthgen.deterministic_grammar,
    "planted": synthgen.planted_dependency_grammar,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    for name in (
        "input_path",
        "log_format",
        "train_days",
        "valid_days",
        "test_days",
        "model",
        "seed",
        "window_size",
        "target_mode",
        "epochs",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def _window_config(cfg: RunConfig, target_mode: str | None = None) -> WindowConfig:
    return WindowConfig(
        window_size=cfg.window_size,
        stride=cfg.stride,
        target_mode=target_mode or cfg.target_mode,
        mask_rate=cfg.mask_rate,
        rng_seed=cfg.seed,
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        patience=cfg.patience,
        pretrain_lr=cfg.pretrain_lr,
        finetune_lr=cfg.finetune_lr,
        weight_decay=cfg.weight_decay,
        seed=cfg.seed,
    )


def _model_overrides(cfg: RunConfig) -> dict:
    if cfg.model == "self_attn":
        return {
            "width": cfg.width,
            "layers": cfg.layers,
            "heads": cfg.heads,
            "head_width": cfg.head_width,
        }
    return {
        "width": cfg.width,
        "hidden": cfg.hidden,
        "layers": cfg.lstm_layers,
        "dropout": cfg.dropout,
    }


def _read_requests(cfg: RunConfig, path: str) -> list[ingest.RawRequest]:
    if not os.path.exists(path):
        raise ConfigurationError(f"input log not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        requests = list(ingest.read_log(handle, fmt=cfg.log_format))
    requests = list(
        ingest.filter_requests(
            requests, cfg.exclude_actors, cfg.exclude_path_prefixes
        )
    )
    requests.sort(key=lambda r: r.timestamp)
    return requests


def _ingest_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.run_dir(), "ingest")


def _extract_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.run_dir(), "extract")


def _train_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.run_dir(), "train")


def cmd_synth(args) -> int:
    grammar = GRAMMARS[args.grammar]()
    os.makedirs(args.out, exist_ok=True)
    requests = synthgen.generate(
        grammar, days=args.days, events_per_day=args.events_per_day, seed=args.seed
    )
    labels: list[synthgen.InjectionLabel] = []
    if args.inject_random is not None or args.inject_attack is not None:
        tokens = synthgen.generate_tokens(
            grammar, args.days * args.events_per_day, args.seed
        )
        if args.inject_random is not None:
            vocab = extractor.build_vocabulary(tokens, rare_threshold=1)
            tokens, labels = synthgen.inject_random(
                tokens, args.inject_random, vocab, args.seed + 1
            )
        else:
            tokens, labels = synthgen.inject_attack(tokens, args.inject_attack, args.seed + 1)
        per_day = (len(tokens) + args.days - 1) // args.days
        randomizer = np.random.default_rng(args.seed + 2)
        requests = []
        from datetime import date, datetime, time, timedelta, timezone

        for index, token in enumerate(tokens):
            day, slot = divmod(index, per_day)
            ts = datetime.combine(
                date(2020, 1, 6) + timedelta(days=day), time(), tzinfo=timezone.utc
            ) + timedelta(hours=9, seconds=8 * 3600.0 * slot / per_day)
            requests.append(
                synthgen.token_to_request(token, ts, randomizer=randomizer)
            )
    log_path = os.path.join(args.out, "log.jsonl")
    with open(log_path, "w", encoding="utf-8") as handle:
        for request in requests:
            handle.write(request.to_json_line() + "\n")
    if labels:
        synthgen.write_labels(labels, os.path.join(args.out, "labels.tsv"))
    print(f"wrote {len(requests)} requests to {log_path}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    requests = _read_requests(cfg, cfg.input_path)
    split = ingest.split_by_day(requests, cfg.train_days, cfg.valid_days, cfg.test_days)
    parts = split.partition(requests)
    out_dir = _ingest_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    summary = {"config_hash": cfg.config_hash()}
    for name, rows in parts.items():
        path = os.path.join(out_dir, f"{name}.jsonl")
        with open(path, "w", encoding="utf-8") as handle:
            for request in rows:
                handle.write(request.to_json_line() + "\n")
        summary[f"{name}_requests"] = len(rows)
        summary[f"{name}_days"] = len(getattr(split, f"{name}_days"))
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_split_requests(cfg: RunConfig) -> dict[str, list[ingest.RawRequest]]:
    out = {}
    for name in ("train", "valid", "test"):
        path = os.path.join(_ingest_dir(cfg), f"{name}.jsonl")
        if not os.path.exists(path):
            raise ConfigurationError(f"missing ingest artifact {path}; run ingest first")
        with open(path, "r", encoding="utf-8") as handle:
            out[name] = list(ingest.read_log(handle))
    return out


def _group_key(cfg: RunConfig, request: ingest.RawRequest) -> str:
    if cfg.group_by == "actor":
        return request.actor_id or "anonymous"
    return request.app_id


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    parts = _load_split_requests(cfg)
    corpus = extractor.element_corpus(parts["train"], word_list=cfg.use_word_list)
    markov = extractor.fit_char_markov(corpus, theta=cfg.theta_override)

    out_dir = _extract_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    events = {}
    for name, requests in parts.items():
        rows = [
            (_group_key(cfg, r), extractor.canonicalize(r, markov).token)
            for r in requests
        ]
        events[name] = rows
        with open(os.path.join(out_dir, f"events_{name}.tsv"), "w", encoding="utf-8") as handle:
            for group, token in rows:
                handle.write(f"{group}\t{token}\n")
    vocab = extractor.build_vocabulary(
        (token for _, token in events["train"]), cfg.rare_threshold
    )
    vocab.save(os.path.join(out_dir, "vocab.tsv"))
    markov.save(os.path.join(out_dir, "charmarkov.tsv"))
    summary = {
        "train_events": len(events["train"]),
        "valid_events": len(events["valid"]),
        "test_events": len(events["test"]),
        "unique_events": vocab.size - 3,
        "rare_threshold": cfg.rare_threshold,
        "vocab_sha256": vocab.sha256(),
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_events(cfg: RunConfig, name: str) -> list[tuple[str, str]]:
    path = os.path.join(_extract_dir(cfg), f"events_{name}.tsv")
    if not os.path.exists(path):
        raise ConfigurationError(f"missing extract artifact {path}; run extract first")
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            group, token = line.rstrip("\n").split("\t")
            rows.append((group, token))
    return rows


def _load_vocab(cfg: RunConfig) -> extractor.EventVocabulary:
    path = os.path.join(_extract_dir(cfg), "vocab.tsv")
    if not os.path.exists(path):
        raise ConfigurationError(f"missing vocabulary {path}; run extract first")
    return extractor.EventVocabulary.load(path, cfg.rare_threshold)


def _grouped_ids(
    cfg: RunConfig, vocab: extractor.EventVocabulary, name: str
) -> dict[str, np.ndarray]:
    grouped: dict[str, list[int]] = {}
    for group, token in _load_events(cfg, name):
        grouped.setdefault(group, []).append(vocab.encode(token))
    return {g: np.array(ids, dtype=np.int64) for g, ids in sorted(grouped.items())}


def _windows_for(cfg: RunConfig, vocab, name: str, wcfg: WindowConfig):
    windows = []
    for _, ids in _grouped_ids(cfg, vocab, name).items():
        windows.extend(make_windows(ids, wcfg))
    return windows


def cmd_train(args) -> int:
    cfg = _load_config(args)
    vocab = _load_vocab(cfg)
    out_dir = _train_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    if cfg.model in ("markov", "ngram"):
        order = 2 if cfg.model == "markov" else 3
        stream = np.concatenate(
            list(_grouped_ids(cfg, vocab, "train").values())
        )
        table = baselines.fit(stream, order, vocab_size=vocab.size)
        path = os.path.join(out_dir, f"{cfg.model}.tsv")
        table.save(path)
        print(f"fitted {cfg.model} counts -> {path}")
        return EXIT_OK

    wcfg = _window_config(cfg)
    train_w = _windows_for(cfg, vocab, "train", wcfg)
    valid_w = _windows_for(cfg, vocab, "valid", wcfg)
    model = build_model(
        cfg.model, vocab_size=vocab.size, max_window=cfg.window_size,
        seed=cfg.seed, **_model_overrides(cfg),
    )
    tcfg = _train_config(cfg)
    if args.pretrain:
        result = pretrain(
            model,
            mask_windows_for_pretraining(train_w, wcfg),
            tcfg,
            mask_windows_for_pretraining(valid_w, wcfg) or None,
        )
        write_loss_curve(result, os.path.join(out_dir, "pretrain_loss.csv"))
    result = finetune(
        model, mask_targets(train_w), tcfg, mask_targets(valid_w) or None
    )
    write_loss_curve(result, os.path.join(out_dir, "finetune_loss.csv"))
    checkpoint_path = os.path.join(out_dir, f"{cfg.model}.ckpt")
    save_checkpoint(model, checkpoint_path, vocab_sha256=vocab.sha256())
    print(
        json.dumps(
            {
                "checkpoint": checkpoint_path,
                "checkpoint_sha256": file_sha256(checkpoint_path),
                "epochs_run": result.epochs_run,
                "pretrained": bool(model.metadata.get("pretrained")),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _load_config(args)
    vocab = _load_vocab(cfg)
    model = load_checkpoint(args.checkpoint, expected_vocab_sha256=vocab.sha256())
    markov = extractor.CharMarkovModel.load(
        os.path.join(_extract_dir(cfg), "charmarkov.tsv")
    )
    requests = _read_requests(cfg, args.input)
    events = [extractor.canonicalize(r, markov) for r in requests]
    ids = vocab.encode_stream(events)
    wcfg = _window_config(cfg)
    windows = mask_targets(make_windows(ids, wcfg))
    if not windows:
        raise ConfigurationError("input stream is shorter than one window")
    probs = predict_distributions(model, windows)[:, 0, :]
    observed = np.array([w.original_ids[w.target_index] for w in windows])
    ranks = anomaly.ranks_of(probs, observed)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        offset = wcfg.target_index
        for i, window in enumerate(windows):
            request = requests[i * wcfg.stride + offset]
            verdict = anomaly.AnomalyVerdict(
                event_id=int(observed[i]),
                rank=int(ranks[i]),
                score=anomaly.score(int(ranks[i])),
                alarmed=bool(ranks[i] >= args.k),
                k=args.k,
            )
            record = anomaly.verdict_record(
                verdict,
                ts=request.timestamp.isoformat().replace("+00:00", "Z"),
                app=request.app_id,
                token=vocab.decode(int(observed[i])),
            )
            out.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    vocab = _load_vocab(cfg)
    streams = {
        name: np.concatenate(list(_grouped_ids(cfg, vocab, name).values()))
        for name in ("train", "valid", "test")
    }
    dataset = evalharness.SequenceDataset(
        train_ids=streams["train"],
        valid_ids=streams["valid"],
        test_ids=streams["test"],
        vocab=vocab,
    )
    target_modes = ("centered",) if args.centered else ("last",)
    reports = evalharness.ablation_matrix(
        dataset,
        models=args.models or cfg.eval_models,
        window_sizes=args.windows or cfg.eval_window_sizes,
        pretraining=(True, False) if args.with_pretraining else (False,),
        target_modes=target_modes,
        train_cfg=_train_config(cfg),
        base_window=_window_config(cfg),
        model_overrides=_model_overrides(replace(cfg, model="self_attn"))
        if cfg.model in ("markov", "ngram")
        else _model_overrides(cfg),
    )
    out_dir = os.path.join(cfg.run_dir(), "evaluate")
    os.makedirs(out_dir, exist_ok=True)
    evalharness.write_report_csv(reports, os.path.join(out_dir, "ablation.csv"))
    evalharness.write_model_comparison_csv(
        reports, os.path.join(out_dir, "model_comparison.csv")
    )
    print(f"wrote {len(reports)} reports to {out_dir}")
    best_top1 = max((r.top_n.get(1, 0.0) for r in reports if not r.error), default=0.0)
    best_top10 = max((r.top_n.get(10, 0.0) for r in reports if not r.error), default=0.0)
    if cfg.min_top1 is not None and best_top1 < cfg.min_top1:
        print(f"acceptance: best top-1 {best_top1:.4f} < required {cfg.min_top1}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    if cfg.min_top10 is not None and best_top10 < cfg.min_top10:
        print(f"acceptance: best top-10 {best_top10:.4f} < required {cfg.min_top10}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = os.path.join(args.run, "evaluate")
    path = os.path.join(out_dir, "ablation.csv")
    if not os.path.exists(path):
        raise ConfigurationError(f"no evaluation reports under {args.run}")
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            print(line.rstrip("\n").replace(",", "\t"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eventcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic request log")
    p.add_argument("--out", required=True)
    p.add_argument("--grammar", choices=sorted(GRAMMARS), default="default")
    p.add_argument("--days", type=int, default=84)
    p.add_argument("--events-per-day", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-random", type=float, default=None, metavar="RATE")
    p.add_argument("--inject-attack", choices=synthgen.ATTACK_KINDS, default=None)
    p.set_defaults(func=cmd_synth)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("ingest", help="parse logs and split by calendar day")
    common(p)
    p.add_argument("--input", dest="input_path", default=None)
    p.add_argument("--format", dest="log_format", choices=("jsonl", "clf"), default=None)
    p.add_argument("--train-days", dest="train_days", type=int, default=None)
    p.add_argument("--valid-days", dest="valid_days", type=int, default=None)
    p.add_argument("--test-days", dest="test_days", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="canonicalize events and build the vocabulary")
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a forecasting model")
    common(p)
    p.add_argument("--model", choices=("markov", "ngram", "bilstm", "lstm_attn", "self_attn"), default=None)
    p.add_argument("--pretrain", action="store_true")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="emit anomaly verdicts for a request stream")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="run the ablation matrix and write reports")
    common(p)
    p.add_argument("--centered", action="store_true")
    p.add_argument("--with-pretraining", action="store_true")
    p.add_argument("--models", nargs="*", default=None)
    p.add_argument("--windows", nargs="*", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print evaluation tables from a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CompatibilityError, ConfigurationError, EventcastError, OSError) as exc:
        print(f"eventcast: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
