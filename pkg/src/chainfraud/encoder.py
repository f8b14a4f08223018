"""Text branch: summed token/position/type embeddings into a small
transformer encoder trained from scratch.

Each layer is post-norm: multi-head self-attention with residual and layer
norm, then a GELU feed-forward with residual and layer norm. Padding
positions receive a large negative additive bias before the attention
softmax, which underflows their weights to exactly zero in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ShapeError

ATTENTION_MASK_BIAS = -1e9


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 128
    dropout: float = 0.1
    pool: str = "cls"  # or "mean"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.pool not in ("cls", "mean"):
            raise ValueError(f"unknown pooling mode: {self.pool!r}")


class EmbeddingTables:
    """Word + position + token-type embedding tables, summed per position."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig, rng: np.random.Generator,
                 prefix: str = "embed"):
        d = cfg.d_model
        self.word = Parameter(ad.glorot_uniform((vocab_size, d), rng), f"{prefix}.word")
        self.position = Parameter(ad.glorot_uniform((cfg.max_len, d), rng), f"{prefix}.position")
        self.token_type = Parameter(ad.glorot_uniform((2, d), rng), f"{prefix}.token_type")
        self.vocab_size = vocab_size
        self.max_len = cfg.max_len

    def parameters(self) -> list[Parameter]:
        return [self.word, self.position, self.token_type]


def embed_tokens(ids: np.ndarray, type_ids: np.ndarray, tables: EmbeddingTables) -> Tensor:
    """Sum the three embedding tables per position: (B, L) ids -> (B, L, d)."""
    ids = np.asarray(ids)
    if ids.ndim != 2 or ids.shape[1] != tables.max_len:
        raise ShapeError(f"embed_tokens: expected (B, {tables.max_len}) ids, got {ids.shape}")
    word = ad.embedding_lookup(tables.word, ids)
    position = ad.embedding_lookup(tables.position, np.arange(ids.shape[1]))
    token_type = ad.embedding_lookup(tables.token_type, np.asarray(type_ids))
    return ad.add(ad.add(word, position), token_type)


def attention_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
    """(B, L) float mask, 1 at real tokens and 0 at padding."""
    return (np.asarray(ids) != pad_id).astype(np.float64)


class TransformerEncoder:
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "encoder"):
        self.cfg = cfg
        d, ff = cfg.d_model, cfg.d_ff
        self.layers = []
        for i in range(cfg.n_layers):
            p = f"{prefix}.layer{i}"
            layer = {
                "wq": Parameter(ad.glorot_uniform((d, d), rng), f"{p}.wq"),
                "bq": Parameter(np.zeros(d), f"{p}.bq"),
                "wk": Parameter(ad.glorot_uniform((d, d), rng), f"{p}.wk"),
                "bk": Parameter(np.zeros(d), f"{p}.bk"),
                "wv": Parameter(ad.glorot_uniform((d, d), rng), f"{p}.wv"),
                "bv": Parameter(np.zeros(d), f"{p}.bv"),
                "wo": Parameter(ad.glorot_uniform((d, d), rng), f"{p}.wo"),
                "bo": Parameter(np.zeros(d), f"{p}.bo"),
                "ln1_g": Parameter(np.ones(d), f"{p}.ln1_g"),
                "ln1_b": Parameter(np.zeros(d), f"{p}.ln1_b"),
                "w1": Parameter(ad.glorot_uniform((d, ff), rng), f"{p}.ff_w1"),
                "b1": Parameter(np.zeros(ff), f"{p}.ff_b1"),
                "w2": Parameter(ad.glorot_uniform((ff, d), rng), f"{p}.ff_w2"),
                "b2": Parameter(np.zeros(d), f"{p}.ff_b2"),
                "ln2_g": Parameter(np.ones(d), f"{p}.ln2_g"),
                "ln2_b": Parameter(np.zeros(d), f"{p}.ln2_b"),
            }
            self.layers.append(layer)

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.values()]

    def _heads(self, x: Tensor, batch: int, length: int) -> Tensor:
        h, dh = self.cfg.n_heads, self.cfg.d_model // self.cfg.n_heads
        return ad.transpose(ad.reshape(x, (batch, length, h, dh)), (0, 2, 1, 3))

    def _attention(self, layer, x: Tensor, mask_bias: np.ndarray, train: bool,
                   rng: np.random.Generator | None) -> Tensor:
        batch, length, d = x.shape
        dh = d // self.cfg.n_heads
        q = self._heads(ad.add(ad.matmul(x, layer["wq"]), layer["bq"]), batch, length)
        k = self._heads(ad.add(ad.matmul(x, layer["wk"]), layer["bk"]), batch, length)
        v = self._heads(ad.add(ad.matmul(x, layer["wv"]), layer["bv"]), batch, length)

        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        scores = ad.add(scores, Tensor(mask_bias))  # (B, 1, 1, L) broadcast
        weights = ad.softmax(scores, axis=-1)
        if train and self.cfg.dropout > 0:
            weights = ad.dropout(weights, self.cfg.dropout, rng)
        context = ad.matmul(weights, v)  # (B, H, L, dh)
        merged = ad.reshape(ad.transpose(context, (0, 2, 1, 3)), (batch, length, d))
        return ad.add(ad.matmul(merged, layer["wo"]), layer["bo"])

    def forward(self, x: Tensor, mask: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """(B, L, d) embeddings -> (B, L, d) contextual states."""
        if x.ndim != 3 or x.shape[2] != self.cfg.d_model:
            raise ShapeError(f"encoder: expected (B, L, {self.cfg.d_model}), got {x.shape}")
        if train and self.cfg.dropout > 0 and rng is None:
            raise ValueError("encoder: training forward needs an rng for dropout")
        mask_bias = (1.0 - np.asarray(mask, dtype=np.float64)[:, None, None, :]) * ATTENTION_MASK_BIAS

        for layer in self.layers:
            attended = self._attention(layer, x, mask_bias, train, rng)
            if train and self.cfg.dropout > 0:
                attended = ad.dropout(attended, self.cfg.dropout, rng)
            x = ad.layer_norm(ad.add(x, attended), layer["ln1_g"], layer["ln1_b"])

            ff = ad.gelu(ad.add(ad.matmul(x, layer["w1"]), layer["b1"]))
            ff = ad.add(ad.matmul(ff, layer["w2"]), layer["b2"])
            if train and self.cfg.dropout > 0:
                ff = ad.dropout(ff, self.cfg.dropout, rng)
            x = ad.layer_norm(ad.add(x, ff), layer["ln2_g"], layer["ln2_b"])
        return x


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over unmasked positions: (B, L, d) -> (B, d)."""
    mask = np.asarray(mask, dtype=np.float64)
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise ShapeError("masked_mean: a sequence has no unmasked positions")
    weighted = ad.mul(x, Tensor(mask[:, :, None]))
    return ad.mul(ad.sum_(weighted, axis=1), Tensor(1.0 / counts[:, None]))


def pool(hidden: Tensor, mask: np.ndarray, mode: str = "cls") -> Tensor:
    """Sequence states -> one vector per sequence (CLS row by default)."""
    if mode == "cls":
        return ad.take_index(hidden, 0, axis=1)
    return masked_mean(hidden, mask)
