# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""
Transformer encoder and the per-modality pipeline.

Every modality goes through the same pipeline: a linear projection into the common model
dimension, sinusoidal positional encoding, a stack of pre-norm encoder layers and a linear
classifier applied to the hidden state at the last valid position.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .layers import LayerNorm, Linear, Module
from .tensor import (
    Tensor,
    dropout,
    gather_rows,
    matmul,
    relu,
    reshape,
    scale,
    softmax,
    transpose,
)

NUM_CLASSES = 3


@dataclass(frozen=True)
class EncoderConfig:
    """Shape of one modality encoder.

    Attributes:
        model_dim (int): Common model dimension d, positive and even
        num_heads (int): Attention heads, must divide `model_dim`
        ff_dim (int): Hidden width of the feed-forward block
        num_layers (int): Number of encoder layers
        max_seq_len (int): Longest accepted sequence
        dropout_rate (float): Dropout on residual branches during training, in [0, 1)
    """

    model_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 128
    num_layers: int = 2
    max_seq_len: int = 64
    dropout_rate: float = 0.1

    def __post_init__(self) -> None:
        """Validate the configuration."""
        if self.model_dim <= 0 or self.model_dim % 2:
            msg = f"model_dim must be a positive even integer, got {self.model_dim}"
            raise ConfigError(msg)
        if self.num_heads <= 0 or self.model_dim % self.num_heads:
            msg = f"num_heads {self.num_heads} must be positive and divide {self.model_dim}"
            raise ConfigError(msg)
        for name in ("ff_dim", "num_layers", "max_seq_len"):
            if getattr(self, name) < 1:
                msg = f"{name} must be at least 1, got {getattr(self, name)}"
                raise ConfigError(msg)
        if not 0.0 <= self.dropout_rate < 1.0:
            msg = f"dropout_rate must be in [0, 1), got {self.dropout_rate}"
            raise ConfigError(msg)


@dataclass(frozen=True, eq=False)
class AttentionMask:
    """Per-position validity flags of a padded batch, shape (batch, seq_len)."""

    valid: np.ndarray

    def __post_init__(self) -> None:
        """Validate: boolean, rank 2, at least one valid position per sample."""
        valid = np.asarray(self.valid, dtype=bool)
        if valid.ndim != 2:  # noqa: PLR2004
            msg = f"AttentionMask needs shape (batch, seq_len), got {valid.shape}"
            raise ContractError(msg)
        if not np.all(valid.any(axis=1)):
            msg = "AttentionMask: every sample needs at least one valid position"
            raise ContractError(msg)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_lengths(cls, lengths: np.ndarray, seq_len: int) -> "AttentionMask":
        """Mask with the first `lengths[i]` positions of sample i valid."""
        lengths = np.asarray(lengths)
        return cls(np.arange(seq_len)[None, :] < lengths[:, None])

    @classmethod
    def all_valid(cls, batch: int, seq_len: int) -> "AttentionMask":
        """Mask without padding."""
        return cls(np.ones((batch, seq_len), dtype=bool))

    @property
    def seq_len(self) -> int:
        """Padded sequence length."""
        return self.valid.shape[1]

    @property
    def last_valid(self) -> np.ndarray:
        """Index of the last valid position of every sample."""
        return self.seq_len - 1 - np.argmax(self.valid[:, ::-1], axis=1)


@lru_cache(maxsize=32)
def _sinusoid_table(seq_len: int, d: int, dtype: str) -> np.ndarray:
    positions = np.arange(seq_len, dtype=np.float64)[:, None]
    rates = np.power(10000.0, np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.empty((seq_len, d), dtype=np.float64)
    table[:, 0::2] = np.sin(positions / rates)
    table[:, 1::2] = np.cos(positions / rates)
    table = table.astype(dtype)
    table.flags.writeable = False
    return table


def positional_encoding(seq_len: int, d: int, dtype: np.dtype | str = np.float64) -> Tensor:
    """
    Sinusoidal positional encoding.

    Entry (pos, 2i) is sin(pos / 10000^(2i/d)) and entry (pos, 2i+1) is cos of the same angle.

    Args:
        seq_len (int): Number of positions, at least 1
        d (int): Model dimension, even
        dtype (np.dtype | str): Scalar type of the table

    Returns:
        Tensor: Constant table of shape (seq_len, d)
    """
    if d <= 0 or d % 2:
        msg = f"positional encoding needs a positive even dimension, got {d}"
        raise ConfigError(msg)
    if seq_len < 1:
        msg = f"positional encoding needs seq_len >= 1, got {seq_len}"
        raise ConfigError(msg)
    return Tensor(_sinusoid_table(seq_len, d, np.dtype(dtype).name))


class MultiHeadAttention(Module):
    """Query, key, value and output projections of multi-head self-attention."""

    def __init__(
        self, model_dim: int, num_heads: int, rng: np.random.Generator, dtype: np.dtype | str
    ) -> None:
        """Initialize MultiHeadAttention."""
        if model_dim % num_heads:
            msg = f"num_heads {num_heads} must divide model_dim {model_dim}"
            raise ConfigError(msg)
        self.num_heads = num_heads
        self.query = Linear(model_dim, model_dim, rng, dtype)
        self.key = Linear(model_dim, model_dim, rng, dtype)
        self.value = Linear(model_dim, model_dim, rng, dtype)
        self.output = Linear(model_dim, model_dim, rng, dtype)


def attention_with_weights(
    x: Tensor, mask: AttentionMask, params: MultiHeadAttention
) -> tuple[Tensor, Tensor]:
    """
    Scaled dot-product self-attention over `num_heads` heads.

    Scores are scaled by 1/sqrt(d/h); invalid key positions get zero weight. Heads are
    concatenated and passed through the output projection.

    Args:
        x (Tensor): Input of shape (b, s, d)
        mask (AttentionMask): Validity of the s positions of every sample
        params (MultiHeadAttention): Projections

    Returns:
        tuple[Tensor, Tensor]: Output of shape (b, s, d) and attention weights (b, h, s, s)
    """
    b, s, d = x.shape
    h = params.num_heads
    if mask.valid.shape != (b, s):
        msg = f"attention mask of shape {mask.valid.shape} does not match input {x.shape}"
        raise ContractError(msg)
    head_dim = d // h

    def split_heads(t: Tensor) -> Tensor:
        return transpose(reshape(t, (b, s, h, head_dim)), (0, 2, 1, 3))

    queries = split_heads(params.query(x))
    keys = split_heads(params.key(x))
    values = split_heads(params.value(x))
    scores = scale(matmul(queries, transpose(keys, (0, 1, 3, 2))), 1.0 / np.sqrt(head_dim))
    weights = softmax(scores, axis=-1, mask=mask.valid[:, None, None, :])
    context = transpose(matmul(weights, values), (0, 2, 1, 3))
    out = params.output(reshape(context, (b, s, d)))
    return out, weights


def multi_head_attention(x: Tensor, mask: AttentionMask, params: MultiHeadAttention) -> Tensor:
    """Multi-head self-attention output, see `attention_with_weights`."""
    out, _ = attention_with_weights(x, mask, params)
    return out


class EncoderLayer(Module):
    """Parameters of one pre-norm encoder layer."""

    def __init__(
        self, config: EncoderConfig, rng: np.random.Generator, dtype: np.dtype | str
    ) -> None:
        """Initialize EncoderLayer."""
        d = config.model_dim
        self.attention_norm = LayerNorm(d, dtype)
        self.attention = MultiHeadAttention(d, config.num_heads, rng, dtype)
        self.ff_norm = LayerNorm(d, dtype)
        self.ff_in = Linear(d, config.ff_dim, rng, dtype)
        self.ff_out = Linear(config.ff_dim, d, rng, dtype)


def encoder_layer_forward(
    x: Tensor,
    mask: AttentionMask,
    params: EncoderLayer,
    *,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """
    Pre-norm residual encoder layer: `x + MHA(LN(x))`, then `+ FF(LN(.))`.

    FF is linear(d -> ff_dim), ReLU, linear(ff_dim -> d). Dropout is applied to both residual
    branches only when `rng` is given.
    """
    attended = multi_head_attention(params.attention_norm(x), mask, params.attention)
    x = x + dropout(attended, dropout_rate, rng)
    hidden = relu(params.ff_in(params.ff_norm(x)))
    return x + dropout(params.ff_out(hidden), dropout_rate, rng)


class ModalityEncoder(Module):
    """Input projection, encoder stack and classifier of one modality."""

    def __init__(
        self,
        input_dim: int,
        config: EncoderConfig,
        rng: np.random.Generator,
        dtype: np.dtype | str = np.float32,
    ) -> None:
        """Initialize ModalityEncoder."""
        if input_dim < 1:
            msg = f"input_dim must be at least 1, got {input_dim}"
            raise ConfigError(msg)
        self.input_dim = input_dim
        self.config = config
        self.dtype = np.dtype(dtype)
        self.projection = Linear(input_dim, config.model_dim, rng, dtype)
        self.layers = [EncoderLayer(config, rng, dtype) for _ in range(config.num_layers)]
        self.classifier = Linear(config.model_dim, NUM_CLASSES, rng, dtype)


def modality_encode(
    features: Tensor,
    mask: AttentionMask,
    enc: ModalityEncoder,
    *,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Run projection, positional encoding and the encoder stack; return the pooled (b, d)
    hidden state at the last valid position of every sample."""
    if features.ndim != 3 or features.shape[2] != enc.input_dim:  # noqa: PLR2004
        msg = f"features of shape {features.shape} do not match input_dim {enc.input_dim}"
        raise DimensionError(msg)
    seq_len = features.shape[1]
    if seq_len > enc.config.max_seq_len:
        msg = f"sequence length {seq_len} exceeds max_seq_len {enc.config.max_seq_len}"
        raise ConfigError(msg)
    x = enc.projection(features) + positional_encoding(seq_len, enc.config.model_dim, enc.dtype)
    for layer in enc.layers:
        x = encoder_layer_forward(x, mask, layer, dropout_rate=enc.config.dropout_rate, rng=rng)
    return gather_rows(x, mask.last_valid)


def modality_forward(
    features: Tensor,
    mask: AttentionMask,
    enc: ModalityEncoder,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """
    Full per-modality pipeline.

    Args:
        features (Tensor): Features of shape (b, s, input_dim), s <= max_seq_len
        mask (AttentionMask): Valid positions
        enc (ModalityEncoder): Parameters
        rng (np.random.Generator | None): Dropout randomness; None disables dropout

    Returns:
        tuple[Tensor, Tensor]: Pooled representation (b, d) and logits (b, 3)
    """
    pooled = modality_encode(features, mask, enc, rng=rng)
    return pooled, enc.classifier(pooled)
