"""The three context models: self-attention encoder, Bi-LSTM, LSTM-attention.

All models share the same surface: a dict of named parameter arrays, a
forward pass producing logits at the masked positions of a window batch,
and an exact analytic backward pass.  Prediction runs in evaluation mode
(dropout off) and is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..distribution import PredictionDistribution
from ..errors import ContractError, ShapeError
from ..sequencer import SequenceWindow, windows_to_arrays
from . import ops


@dataclass(frozen=True)
class EmbeddingTables:
    """Event-content and in-sequence-position embeddings, summed per slot."""

    event_table: np.ndarray     # (|V|, d)
    position_table: np.ndarray  # (w_max, d)

    def __post_init__(self):
        if self.event_table.ndim != 2 or self.position_table.ndim != 2:
            raise ShapeError("embedding tables must be 2-D")
        if self.event_table.shape[1] != self.position_table.shape[1]:
            raise ShapeError("event and position embeddings must share a width")


def embed(window: SequenceWindow | Sequence[int], tables: EmbeddingTables) -> np.ndarray:
    """Embedded sequence: out[i] = event_table[ids[i]] + position_table[i]."""
    ids = np.asarray(
        window.ids if isinstance(window, SequenceWindow) else window, dtype=np.int64
    )
    if ids.ndim != 1:
        raise ShapeError("window ids must be 1-D")
    if ids.size and (ids.min() < 0 or ids.max() >= tables.event_table.shape[0]):
        raise ShapeError("event id out of range for the embedding table")
    if ids.size > tables.position_table.shape[0]:
        raise ShapeError("window longer than the position table")
    return tables.event_table[ids] + tables.position_table[: ids.size]


@dataclass(frozen=True)
class AttentionConfig:
    vocab_size: int
    max_window: int
    width: int = 128
    layers: int = 8
    heads: int = 8
    head_width: int | None = None  # None: width // heads
    ffn_width: int | None = None   # None: 4 * width
    seed: int = 0

    def __post_init__(self):
        if self.head_width is None and self.width % self.heads != 0:
            raise ShapeError("width must be divisible by heads unless head_width is set")

    @property
    def d_k(self) -> int:
        return self.head_width if self.head_width is not None else self.width // self.heads

    @property
    def d_ffn(self) -> int:
        return self.ffn_width if self.ffn_width is not None else 4 * self.width


@dataclass(frozen=True)
class RecurrentConfig:
    vocab_size: int
    max_window: int
    width: int = 128            # embedding width
    hidden: int = 128           # per direction
    layers: int = 1
    dropout: float = 0.2
    additive_attention: bool = False
    attention_width: int | None = None  # None: hidden
    seed: int = 0

    @property
    def d_att(self) -> int:
        return self.attention_width if self.attention_width is not None else self.hidden


class SequenceForecaster:
    """Shared surface for the three architectures."""

    model_type = "base"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.metadata: dict = {}

    # subclasses implement forward_scores() and backward()

    def loss_and_grads(self, ids, mask_positions, targets, train=False, rng=None):
        logits, cache = self.forward_scores(ids, mask_positions, train=train, rng=rng)
        loss, dlogits, _ = ops.cross_entropy(logits, targets)
        grads = self.backward(dlogits, cache)
        return loss, grads

    def loss_only(self, ids, mask_positions, targets, train=False, rng=None) -> float:
        logits, _ = self.forward_scores(ids, mask_positions, train=train, rng=rng)
        loss, _, _ = ops.cross_entropy(logits, targets)
        return loss

    def predict_probs(self, ids, mask_positions) -> np.ndarray:
        """(B, M, V) probabilities at the masked positions, evaluation mode."""
        logits, _ = self.forward_scores(ids, mask_positions, train=False)
        return ops.softmax(logits)

    def forward(self, window: SequenceWindow) -> list[PredictionDistribution]:
        """One normalized distribution per masked index (ascending order)."""
        if not window.masked_indices:
            raise ContractError("window must be masked before prediction")
        ids, positions, _ = windows_to_arrays([window])
        probs = self.predict_probs(ids, positions)[0]
        return [
            PredictionDistribution(
                probs=probs[j], provenance=f"{self.model_type}@{int(p)}"
            )
            for j, p in enumerate(positions[0])
        ]

    def canonicalize_precision(self) -> None:
        """Round parameters to float32 values (kept in float64 arrays).

        Checkpoints store float32 tensors; rounding here makes in-memory
        predictions bit-identical to predictions after a save/load cycle.
        """
        for name, value in self.params.items():
            self.params[name] = value.astype(np.float32).astype(np.float64)

    def _validate_batch(self, ids: np.ndarray, mask_positions: np.ndarray, vocab_size: int):
        ids = np.asarray(ids, dtype=np.int64)
        mask_positions = np.asarray(mask_positions, dtype=np.int64)
        if ids.ndim != 2 or mask_positions.ndim != 2 or ids.shape[0] != mask_positions.shape[0]:
            raise ShapeError("ids must be (B, w) and mask_positions (B, M)")
        if ids.min() < 0 or ids.max() >= vocab_size:
            raise ShapeError("event id out of range")
        if mask_positions.min() < 0 or mask_positions.max() >= ids.shape[1]:
            raise ShapeError("mask position out of range")
        return ids, mask_positions


class SelfAttentionForecaster(SequenceForecaster):
    """Post-norm Transformer encoder over event+position embeddings.

    Attends to all positions (no causal mask): masked pre-training and
    centered-target prediction both need the right-hand context.
    """

    model_type = "self_attn"

    def __init__(self, config: AttentionConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, dk, h, f = config.width, config.d_k, config.heads, config.d_ffn
        p = self.params
        p["emb_event"] = rng.normal(0.0, 0.02, size=(config.vocab_size, d))
        p["emb_pos"] = rng.normal(0.0, 0.02, size=(config.max_window, d))
        for i in range(config.layers):
            for name in ("wq", "wk", "wv"):
                p[f"l{i}.{name}"] = ops.xavier_uniform(rng, d, h * dk)
                p[f"l{i}.b{name[1]}"] = np.zeros(h * dk)
            p[f"l{i}.wo"] = ops.xavier_uniform(rng, h * dk, d)
            p[f"l{i}.bo"] = np.zeros(d)
            p[f"l{i}.ln1_g"] = np.ones(d)
            p[f"l{i}.ln1_b"] = np.zeros(d)
            p[f"l{i}.w1"] = ops.xavier_uniform(rng, d, f)
            p[f"l{i}.b1"] = np.zeros(f)
            p[f"l{i}.w2"] = ops.xavier_uniform(rng, f, d)
            p[f"l{i}.b2"] = np.zeros(d)
            p[f"l{i}.ln2_g"] = np.ones(d)
            p[f"l{i}.ln2_b"] = np.zeros(d)
        p["out_w"] = ops.xavier_uniform(rng, d, config.vocab_size)
        p["out_b"] = np.zeros(config.vocab_size)

    def embedding_tables(self) -> EmbeddingTables:
        return EmbeddingTables(self.params["emb_event"], self.params["emb_pos"])

    def forward_scores(self, ids, mask_positions, train=False, rng=None):
        cfg, p = self.config, self.params
        ids, mask_positions = self._validate_batch(ids, mask_positions, cfg.vocab_size)
        batch, w = ids.shape
        if w > cfg.max_window:
            raise ShapeError(f"window {w} exceeds max_window {cfg.max_window}")
        heads, dk = cfg.heads, cfg.d_k

        x = p["emb_event"][ids] + p["emb_pos"][:w][None, :, :]
        layer_caches = []
        for i in range(cfg.layers):
            x_in = x
            q = x_in @ p[f"l{i}.wq"] + p[f"l{i}.bq"]
            k = x_in @ p[f"l{i}.wk"] + p[f"l{i}.bk"]
            v = x_in @ p[f"l{i}.wv"] + p[f"l{i}.bv"]
            qh = q.reshape(batch, w, heads, dk).transpose(0, 2, 1, 3)
            kh = k.reshape(batch, w, heads, dk).transpose(0, 2, 1, 3)
            vh = v.reshape(batch, w, heads, dk).transpose(0, 2, 1, 3)
            ctx, att_cache = ops.attention_forward(qh, kh, vh, dk)
            ctx2 = ctx.transpose(0, 2, 1, 3).reshape(batch, w, heads * dk)
            attn_out = ctx2 @ p[f"l{i}.wo"] + p[f"l{i}.bo"]
            x1, ln1_cache = ops.layer_norm_forward(
                x_in + attn_out, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"]
            )
            pre = x1 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            hidden = ops.gelu(pre)
            ffn_out = hidden @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
            x2, ln2_cache = ops.layer_norm_forward(
                x1 + ffn_out, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"]
            )
            layer_caches.append(
                (x_in, att_cache, ctx2, x1, ln1_cache, pre, hidden, ln2_cache)
            )
            x = x2
        rows = np.arange(batch)[:, None]
        selected = x[rows, mask_positions]
        logits = selected @ p["out_w"] + p["out_b"]
        cache = (ids, mask_positions, (batch, w), layer_caches, selected)
        return logits, cache

    def backward(self, dlogits, cache):
        cfg, p = self.config, self.params
        ids, mask_positions, (batch, w), layer_caches, selected = cache
        heads, dk = cfg.heads, cfg.d_k
        g: dict[str, np.ndarray] = {}

        g["out_w"] = np.einsum("bmd,bmv->dv", selected, dlogits)
        g["out_b"] = dlogits.sum(axis=(0, 1))
        dsel = dlogits @ p["out_w"].T
        dx = np.zeros((batch, w, cfg.width))
        np.add.at(dx, (np.arange(batch)[:, None], mask_positions), dsel)

        for i in reversed(range(cfg.layers)):
            x_in, att_cache, ctx2, x1, ln1_cache, pre, hidden, ln2_cache = layer_caches[i]
            dres2, g[f"l{i}.ln2_g"], g[f"l{i}.ln2_b"] = ops.layer_norm_backward(dx, ln2_cache)
            dx1 = dres2.copy()
            g[f"l{i}.w2"] = np.einsum("bwf,bwd->fd", hidden, dres2)
            g[f"l{i}.b2"] = dres2.sum(axis=(0, 1))
            dpre = ops.gelu_backward(dres2 @ p[f"l{i}.w2"].T, pre)
            g[f"l{i}.w1"] = np.einsum("bwd,bwf->df", x1, dpre)
            g[f"l{i}.b1"] = dpre.sum(axis=(0, 1))
            dx1 += dpre @ p[f"l{i}.w1"].T
            dres1, g[f"l{i}.ln1_g"], g[f"l{i}.ln1_b"] = ops.layer_norm_backward(dx1, ln1_cache)
            dx_in = dres1.copy()
            g[f"l{i}.wo"] = np.einsum("bwh,bwd->hd", ctx2, dres1)
            g[f"l{i}.bo"] = dres1.sum(axis=(0, 1))
            dctx2 = dres1 @ p[f"l{i}.wo"].T
            dctx = dctx2.reshape(batch, w, heads, dk).transpose(0, 2, 1, 3)
            dqh, dkh, dvh = ops.attention_backward(dctx, att_cache)
            dq = dqh.transpose(0, 2, 1, 3).reshape(batch, w, heads * dk)
            dk_ = dkh.transpose(0, 2, 1, 3).reshape(batch, w, heads * dk)
            dv = dvh.transpose(0, 2, 1, 3).reshape(batch, w, heads * dk)
            for name, dvalue in (("wq", dq), ("wk", dk_), ("wv", dv)):
                g[f"l{i}.{name}"] = np.einsum("bwd,bwh->dh", x_in, dvalue)
                g[f"l{i}.b{name[1]}"] = dvalue.sum(axis=(0, 1))
                dx_in += dvalue @ p[f"l{i}.{name}"].T
            dx = dx_in

        g["emb_event"] = np.zeros_like(p["emb_event"])
        np.add.at(g["emb_event"], ids, dx)
        g["emb_pos"] = np.zeros_like(p["emb_pos"])
        g["emb_pos"][:w] = dx.sum(axis=0)
        return g


class RecurrentForecaster(SequenceForecaster):
    """Bidirectional LSTM stack; optional additive-attention pooled readout.

    Without attention, the output layer reads the concatenated directional
    states at each masked position.  With attention, every step is scored
    by v . tanh(W h_i), the softmax-weighted sum of steps is pooled, and
    the pooled vector feeds the output layer (one pooled readout per
    window, so all masked slots of a window share a distribution).
    """

    def __init__(self, config: RecurrentConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        h = config.hidden
        p = self.params
        p["emb_event"] = rng.normal(0.0, 0.02, size=(config.vocab_size, config.width))
        scale = 1.0 / np.sqrt(h)
        for i in range(config.layers):
            in_dim = config.width if i == 0 else 2 * h
            for direction in ("f", "b"):
                key = f"l{i}{direction}"
                p[f"{key}.wx"] = rng.uniform(-scale, scale, size=(in_dim, 4 * h))
                p[f"{key}.wh"] = rng.uniform(-scale, scale, size=(h, 4 * h))
                bias = rng.uniform(-scale, scale, size=4 * h)
                bias[h : 2 * h] += 1.0  # forget-gate bias
                p[f"{key}.b"] = bias
        if config.additive_attention:
            p["att_w"] = ops.xavier_uniform(rng, 2 * h, config.d_att)
            p["att_v"] = rng.uniform(-scale, scale, size=config.d_att)
        p["out_w"] = ops.xavier_uniform(rng, 2 * h, config.vocab_size)
        p["out_b"] = np.zeros(config.vocab_size)

    @property
    def model_type(self) -> str:
        return "lstm_attn" if self.config.additive_attention else "bilstm"

    def _lstm_direction(self, x, key, reverse):
        h_dim = self.config.hidden
        p = self.params
        batch, w, _ = x.shape
        xg = x @ p[f"{key}.wx"] + p[f"{key}.b"]
        outputs = np.zeros((batch, w, h_dim))
        h = np.zeros((batch, h_dim))
        c = np.zeros((batch, h_dim))
        steps = []
        times = range(w - 1, -1, -1) if reverse else range(w)
        for t in times:
            gates = xg[:, t] + h @ p[f"{key}.wh"]
            i_g = ops.sigmoid(gates[:, :h_dim])
            f_g = ops.sigmoid(gates[:, h_dim : 2 * h_dim])
            g_g = np.tanh(gates[:, 2 * h_dim : 3 * h_dim])
            o_g = ops.sigmoid(gates[:, 3 * h_dim :])
            c_new = f_g * c + i_g * g_g
            tanh_c = np.tanh(c_new)
            h_new = o_g * tanh_c
            steps.append((t, h, c, i_g, f_g, g_g, o_g, tanh_c))
            h, c = h_new, c_new
            outputs[:, t] = h
        return outputs, (key, x, steps)

    def _lstm_direction_backward(self, doutputs, cache):
        key, x, steps = cache
        h_dim = self.config.hidden
        p = self.params
        batch, w, _ = x.shape
        wh = p[f"{key}.wh"]
        dxg = np.zeros((batch, w, 4 * h_dim))
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((batch, h_dim))
        dc_next = np.zeros((batch, h_dim))
        for t, h_prev, c_prev, i_g, f_g, g_g, o_g, tanh_c in reversed(steps):
            dh = doutputs[:, t] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o_g * (1.0 - tanh_c**2)
            di = dc * g_g
            dg = dc * i_g
            df = dc * c_prev
            dc_next = dc * f_g
            dgates = np.concatenate(
                [
                    di * i_g * (1.0 - i_g),
                    df * f_g * (1.0 - f_g),
                    dg * (1.0 - g_g**2),
                    do * o_g * (1.0 - o_g),
                ],
                axis=1,
            )
            dxg[:, t] = dgates
            dwh += h_prev.T @ dgates
            dh_next = dgates @ wh.T
        grads = {
            f"{key}.wx": np.einsum("bwi,bwg->ig", x, dxg),
            f"{key}.wh": dwh,
            f"{key}.b": dxg.sum(axis=(0, 1)),
        }
        dx = dxg @ p[f"{key}.wx"].T
        return dx, grads

    def forward_scores(self, ids, mask_positions, train=False, rng=None):
        cfg, p = self.config, self.params
        ids, mask_positions = self._validate_batch(ids, mask_positions, cfg.vocab_size)
        if train and cfg.dropout > 0.0 and rng is None:
            raise ContractError("training-mode forward with dropout needs an rng")
        batch, w = ids.shape

        x = p["emb_event"][ids]
        layer_caches = []
        for i in range(cfg.layers):
            fwd, fwd_cache = self._lstm_direction(x, f"l{i}f", reverse=False)
            bwd, bwd_cache = self._lstm_direction(x, f"l{i}b", reverse=True)
            out = np.concatenate([fwd, bwd], axis=2)
            drop_mask = None
            if train and cfg.dropout > 0.0:
                out, drop_mask = ops.dropout_forward(out, cfg.dropout, rng)
            layer_caches.append((fwd_cache, bwd_cache, drop_mask))
            x = out

        if cfg.additive_attention:
            t_act = np.tanh(x @ p["att_w"])
            scores = t_act @ p["att_v"]
            alpha = ops.softmax(scores)
            pooled = np.einsum("bw,bwh->bh", alpha, x)
            logits_pooled = pooled @ p["out_w"] + p["out_b"]
            n_masks = mask_positions.shape[1]
            logits = np.repeat(logits_pooled[:, None, :], n_masks, axis=1)
            readout_cache = ("attention", x, t_act, alpha, pooled)
        else:
            rows = np.arange(batch)[:, None]
            selected = x[rows, mask_positions]
            logits = selected @ p["out_w"] + p["out_b"]
            readout_cache = ("positions", x, selected)

        cache = (ids, mask_positions, (batch, w), layer_caches, readout_cache)
        return logits, cache

    def backward(self, dlogits, cache):
        cfg, p = self.config, self.params
        ids, mask_positions, (batch, w), layer_caches, readout_cache = cache
        g: dict[str, np.ndarray] = {}

        if readout_cache[0] == "attention":
            _, x, t_act, alpha, pooled = readout_cache
            dpooled_logits = dlogits.sum(axis=1)
            g["out_w"] = pooled.T @ dpooled_logits
            g["out_b"] = dpooled_logits.sum(axis=0)
            dpooled = dpooled_logits @ p["out_w"].T
            dalpha = np.einsum("bh,bwh->bw", dpooled, x)
            dx = alpha[:, :, None] * dpooled[:, None, :]
            dscores = ops.softmax_backward(dalpha, alpha)
            g["att_v"] = np.einsum("bw,bwa->a", dscores, t_act)
            dt = dscores[:, :, None] * p["att_v"][None, None, :]
            dpre = dt * (1.0 - t_act**2)
            g["att_w"] = np.einsum("bwh,bwa->ha", x, dpre)
            dx += dpre @ p["att_w"].T
        else:
            _, x, selected = readout_cache
            g["out_w"] = np.einsum("bmd,bmv->dv", selected, dlogits)
            g["out_b"] = dlogits.sum(axis=(0, 1))
            dsel = dlogits @ p["out_w"].T
            dx = np.zeros_like(x)
            np.add.at(dx, (np.arange(batch)[:, None], mask_positions), dsel)

        h_dim = cfg.hidden
        for i in reversed(range(cfg.layers)):
            fwd_cache, bwd_cache, drop_mask = layer_caches[i]
            if drop_mask is not None:
                dx = ops.dropout_backward(dx, drop_mask)
            dx_fwd, g_fwd = self._lstm_direction_backward(dx[:, :, :h_dim], fwd_cache)
            dx_bwd, g_bwd = self._lstm_direction_backward(dx[:, :, h_dim:], bwd_cache)
            g.update(g_fwd)
            g.update(g_bwd)
            dx = dx_fwd + dx_bwd

        g["emb_event"] = np.zeros_like(p["emb_event"])
        np.add.at(g["emb_event"], ids, dx)
        return g


MODEL_TYPES = ("self_attn", "bilstm", "lstm_attn")


def build_model(
    model_type: str,
    vocab_size: int,
    max_window: int,
    seed: int = 0,
    **overrides,
) -> SequenceForecaster:
    """Construct one of the three architectures by name."""
    if model_type == "self_attn":
        return SelfAttentionForecaster(
            AttentionConfig(
                vocab_size=vocab_size, max_window=max_window, seed=seed, **overrides
            )
        )
    if model_type in ("bilstm", "lstm_attn"):
        return RecurrentForecaster(
            RecurrentConfig(
                vocab_size=vocab_size,
                max_window=max_window,
                seed=seed,
                additive_attention=(model_type == "lstm_attn"),
                **overrides,
            )
        )
    raise ContractError(f"unknown model type {model_type!r}")
