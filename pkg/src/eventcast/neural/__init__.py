"""Neural sequence forecasters: embeddings, self-attention, recurrent stacks."""

from ..distribution import PredictionDistribution
from .checkpoint import (
    checkpoint_vocab_sha256,
    file_sha256,
    load_checkpoint,
    save_checkpoint,
)
from .gradcheck import gradient_check
from .models import (
    MODEL_TYPES,
    AttentionConfig,
    EmbeddingTables,
    RecurrentConfig,
    RecurrentForecaster,
    SelfAttentionForecaster,
    SequenceForecaster,
    build_model,
    embed,
)
from .ops import attention, softmax
from .training import (
    Adam,
    TrainConfig,
    TrainResult,
    evaluate_loss,
    finetune,
    predict_distributions,
    pretrain,
    write_loss_curve,
)

__all__ = [
    "MODEL_TYPES",
    "Adam",
    "AttentionConfig",
    "EmbeddingTables",
    "PredictionDistribution",
    "RecurrentConfig",
    "RecurrentForecaster",
    "SelfAttentionForecaster",
    "SequenceForecaster",
    "TrainConfig",
    "TrainResult",
    "attention",
    "build_model",
    "checkpoint_vocab_sha256",
    "embed",
    "evaluate_loss",
    "file_sha256",
    "finetune",
    "gradient_check",
    "load_checkpoint",
    "predict_distributions",
    "pretrain",
    "save_checkpoint",
    "softmax",
    "write_loss_curve",
]
