"""Run configuration: one JSON file drives the whole pipeline.

Defaults are the reference operating point: rare threshold 2, mask rate
0.25, embedding width 128, 8 layers x 8 heads, batch 128, learning rate
0.001 reduced tenfold for fine-tuning, 100 epochs with patience 10, 20%
LSTM dropout.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigurationError

RUN_ROOT_ENV = "EVENTCAST_RUN_ROOT"


@dataclass
class RunConfig:
    seed: int = 0
    input_path: str = ""
    run_root: str = ""

    # ingest
    log_format: str = "jsonl"
    train_days: int = 64
    valid_days: int = 10
    test_days: int = 10
    group_by: str = "app"               # app | actor
    exclude_actors: list[str] = field(default_factory=list)
    exclude_path_prefixes: list[str] = field(default_factory=list)

    # extractor
    rare_threshold: int = 2
    theta_override: float | None = None
    use_word_list: bool = True

    # windows
    window_size: int = 16
    stride: int = 1
    target_mode: str = "last"
    mask_rate: float = 0.25

    # model
    model: str = "self_attn"
    width: int = 128
    layers: int = 8
    heads: int = 8
    head_width: int | None = None
    hidden: int = 128
    lstm_layers: int = 1
    dropout: float = 0.2

    # training
    batch_size: int = 128
    epochs: int = 100
    patience: int = 10
    pretrain_lr: float = 0.001
    finetune_lr: float | None = None    # None: pretrain_lr / 10
    weight_decay: float = 0.0001

    # scoring / evaluation
    alarm_k: int = 10
    eval_window_sizes: list[int] = field(default_factory=lambda: [8, 16, 32, 64, 128])
    eval_models: list[str] = field(
        default_factory=lambda: ["markov", "ngram", "bilstm", "lstm_attn", "self_attn"]
    )
    min_top1: float | None = None
    min_top10: float | None = None

    def __post_init__(self):
        if self.group_by not in ("app", "actor"):
            raise ConfigurationError("group_by must be 'app' or 'actor'")
        if self.model not in ("markov", "ngram", "bilstm", "lstm_attn", "self_attn"):
            raise ConfigurationError(f"unknown model {self.model!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_json())

    # fields that define the data lineage: two configs agreeing on these share
    # ingest/extract artifacts, so model or threshold choices (which key their
    # own files) must not move the run directory
    PIPELINE_FIELDS = (
        "seed",
        "input_path",
        "log_format",
        "train_days",
        "valid_days",
        "test_days",
        "group_by",
        "exclude_actors",
        "exclude_path_prefixes",
        "rare_threshold",
        "theta_override",
        "use_word_list",
        "window_size",
        "stride",
        "target_mode",
        "mask_rate",
    )

    def config_hash(self) -> str:
        subset = {name: getattr(self, name) for name in self.PIPELINE_FIELDS}
        canonical = json.dumps(subset, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def resolve_run_root(self) -> str:
        return self.run_root or os.environ.get(RUN_ROOT_ENV, "runs")

    def run_dir(self) -> str:
        return os.path.join(self.resolve_run_root(), self.config_hash())
