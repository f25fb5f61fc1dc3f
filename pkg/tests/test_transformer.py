# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for the transformer module."""

import numpy as np
import pytest

from mmfusion.errors import ConfigError, ContractError, DimensionError
from mmfusion.tensor import Tensor
from mmfusion.transformer import (
    AttentionMask,
    EncoderConfig,
    ModalityEncoder,
    MultiHeadAttention,
    attention_with_weights,
    modality_forward,
    positional_encoding,
)


def test_positional_encoding_values() -> None:
    """Position 0 alternates sin(0)=0 and cos(0)=1; later positions follow the formula."""
    table = positional_encoding(5, 4).data
    np.testing.assert_array_equal(table[0], [0.0, 1.0, 0.0, 1.0])
    assert table[3, 0] == pytest.approx(np.sin(3.0))
    assert table[3, 3] == pytest.approx(np.cos(3.0 / 100.0))
    assert np.all(np.abs(table) <= 1.0)


@pytest.mark.parametrize(("seq_len", "d"), [(4, 3), (4, 0), (0, 4)])
def test_positional_encoding_rejects_bad_shapes(seq_len: int, d: int) -> None:
    """Odd or empty model dimensions and empty sequences are config errors."""
    with pytest.raises(ConfigError):
        positional_encoding(seq_len, d)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"model_dim": 7},
        {"model_dim": 8, "num_heads": 3},
        {"num_layers": 0},
        {"dropout_rate": 1.0},
    ],
)
def test_encoder_config_validation(kwargs: dict) -> None:
    """Invalid encoder shapes are rejected."""
    with pytest.raises(ConfigError):
        EncoderConfig(**kwargs)


def test_attention_mask_from_lengths() -> None:
    """Masks mark the first l positions and report the last valid index."""
    mask = AttentionMask.from_lengths(np.array([3, 1]), 4)
    np.testing.assert_array_equal(mask.valid, [[1, 1, 1, 0], [1, 0, 0, 0]])
    np.testing.assert_array_equal(mask.last_valid, [2, 0])
    with pytest.raises(ContractError):
        AttentionMask.from_lengths(np.array([2, 0]), 4)


def test_attention_weights_normalized_and_masked(rng: np.random.Generator) -> None:
    """Per-query weights sum to one and padded keys get zero weight."""
    params = MultiHeadAttention(8, 2, rng, np.float64)
    mask = AttentionMask.from_lengths(np.array([5, 2]), 5)
    out, weights = attention_with_weights(Tensor(rng.standard_normal((2, 5, 8))), mask, params)
    assert out.shape == (2, 5, 8)
    assert weights.shape == (2, 2, 5, 5)
    np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(weights.data[1, :, :, 2:] == 0.0)


def test_attention_mask_shape_mismatch(rng: np.random.Generator) -> None:
    """The mask must match the input's batch and sequence extents."""
    params = MultiHeadAttention(4, 2, rng, np.float64)
    with pytest.raises(ContractError, match="does not match"):
        attention_with_weights(
            Tensor(np.zeros((1, 3, 4))), AttentionMask.all_valid(1, 4), params
        )


def test_padding_does_not_change_logits(rng: np.random.Generator) -> None:
    """Appending padded positions changes no logit by more than 1e-6."""
    config = EncoderConfig(model_dim=8, num_heads=2, ff_dim=16, num_layers=2, max_seq_len=10)
    encoder = ModalityEncoder(3, config, rng, np.float64)
    features = rng.standard_normal((1, 4, 3))
    _, short = modality_forward(Tensor(features), AttentionMask.all_valid(1, 4), encoder)

    padded = np.concatenate([features, rng.standard_normal((1, 3, 3))], axis=1)
    mask = AttentionMask.from_lengths(np.array([4]), 7)
    _, long = modality_forward(Tensor(padded), mask, encoder)
    np.testing.assert_allclose(long.data, short.data, atol=1e-6)


def test_modality_forward_shapes_and_errors(rng: np.random.Generator) -> None:
    """Pooled (b, d) and logits (b, 3); wrong feature width or long sequences are rejected."""
    config = EncoderConfig(model_dim=8, num_heads=2, ff_dim=16, num_layers=1, max_seq_len=6)
    encoder = ModalityEncoder(3, config, rng)
    pooled, logits = modality_forward(
        Tensor(rng.standard_normal((2, 6, 3)), dtype=np.float32),
        AttentionMask.all_valid(2, 6),
        encoder,
    )
    assert pooled.shape == (2, 8)
    assert logits.shape == (2, 3)
    assert logits.dtype == np.float32

    with pytest.raises(DimensionError):
        modality_forward(Tensor(np.zeros((2, 6, 4))), AttentionMask.all_valid(2, 6), encoder)
    with pytest.raises(ConfigError, match="max_seq_len"):
        modality_forward(Tensor(np.zeros((2, 7, 3))), AttentionMask.all_valid(2, 7), encoder)


def test_dropout_only_with_rng(rng: np.random.Generator) -> None:
    """Without a generator the encoder is deterministic; with one, dropout changes outputs."""
    config = EncoderConfig(model_dim=8, num_heads=2, ff_dim=16, num_layers=1, dropout_rate=0.5)
    encoder = ModalityEncoder(3, config, rng, np.float64)
    x = Tensor(rng.standard_normal((2, 4, 3)))
    mask = AttentionMask.all_valid(2, 4)
    first = modality_forward(x, mask, encoder)[1].data
    second = modality_forward(x, mask, encoder)[1].data
    np.testing.assert_array_equal(first, second)
    dropped = modality_forward(x, mask, encoder, rng=np.random.default_rng(0))[1].data
    assert not np.array_equal(first, dropped)
