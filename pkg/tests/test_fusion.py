# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for the fusion strategies."""

from collections import Counter

import numpy as np
import pytest

from mmfusion.data import MODALITIES, Batch, SyntheticConfig, collate, generate_synthetic
from mmfusion.errors import ContractError
from mmfusion.fusion import (
    Approach,
    FusionMode,
    FusionModel,
    UnimodalModel,
    attention_fusion_forward,
    attention_fusion_with_weights,
    create_model,
    early_fusion_forward,
    late_fusion_predict,
    model_logits,
    predict,
    unimodal_logits,
)
from mmfusion.tensor import Tensor, concat, mean, reshape
from mmfusion.transformer import EncoderConfig, modality_encode

DIMS = (3, 4, 5)

NEG, NEU, POS = 0, 1, 2


def _one_hot_logits(classes: list[int]) -> np.ndarray:
    logits = np.zeros((len(classes), 3))
    logits[np.arange(len(classes)), classes] = 5.0
    return logits


def _vote_oracle(logits: list[np.ndarray]) -> int:
    """Reference vote of one sample, written independently of the library."""
    votes = [int(np.argmax(lg)) for lg in logits]
    label, count = Counter(votes).most_common(1)[0]
    if count >= 2:
        return label
    mass = [0.0, 0.0, 0.0]
    for lg in logits:
        exps = np.exp(lg - np.max(lg))
        for c in range(3):
            mass[c] += exps[c] / exps.sum()
    best = max(mass)
    return min(c for c in range(3) if mass[c] == best)


@pytest.mark.parametrize(
    ("votes", "expected"),
    [((POS, POS, NEG), POS), ((NEG, NEG, NEG), NEG), ((NEU, POS, NEU), NEU)],
)
def test_majority_vote(votes: tuple[int, int, int], expected: int) -> None:
    """A class with two or three votes wins."""
    logits = [_one_hot_logits([v]) for v in votes]
    assert late_fusion_predict(*logits).tolist() == [expected]


def test_three_way_tie_uses_summed_probabilities() -> None:
    """Votes (neg, neu, pos) with summed softmax mass [0.9, 1.1, 1.0] pick neutral."""
    probs = np.array(
        [
            [0.50, 0.30, 0.20],
            [0.20, 0.45, 0.35],
            [0.20, 0.35, 0.45],
        ]
    )
    np.testing.assert_allclose(probs.sum(axis=0), [0.9, 1.1, 1.0])
    logits = [np.log(p)[None, :] for p in probs]
    assert late_fusion_predict(*logits).tolist() == [NEU]


def test_vote_matches_oracle_on_random_logits() -> None:
    """Zero mismatches against the reference vote over 1000 random logit triples."""
    rng = np.random.default_rng(42)
    logits = [rng.standard_normal((1000, 3)) * 2 for _ in MODALITIES]
    predicted = late_fusion_predict(*logits)
    expected = [_vote_oracle([lg[i] for lg in logits]) for i in range(1000)]
    assert predicted.tolist() == expected


def test_vote_is_invariant_to_positive_scaling() -> None:
    """Scaling a modality's logits by a positive constant never changes its vote."""
    rng = np.random.default_rng(3)
    logits = [rng.standard_normal((200, 3)) for _ in MODALITIES]
    base = late_fusion_predict(*logits)
    majority = np.array(
        [max(Counter(int(np.argmax(lg[i])) for lg in logits).values()) >= 2 for i in range(200)]
    )
    scaled = late_fusion_predict(logits[0] * 7.5, logits[1], logits[2])
    np.testing.assert_array_equal(scaled[majority], base[majority])


def test_vote_batch_mismatch() -> None:
    """All three logits must share the batch size."""
    with pytest.raises(ContractError):
        late_fusion_predict(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((3, 3)))


def test_late_vote_has_no_fusion_parameters(tiny_config: EncoderConfig) -> None:
    """A late-vote model only holds the three encoders."""
    model = create_model(Approach.A0, DIMS, tiny_config)
    assert isinstance(model, FusionModel)
    assert model.mode is FusionMode.LATE_VOTE
    assert all(name.startswith("encoders.") for name in model.parameters())


def test_from_unimodal_matches_fresh_late_vote(tiny_config: EncoderConfig) -> None:
    """Single-modality models share initialization streams with the fused encoders."""
    unimodal = [create_model(m, DIMS, tiny_config, seed=9) for m in MODALITIES]
    assembled = FusionModel.from_unimodal(unimodal)  # type: ignore[arg-type]
    fresh = create_model(Approach.A0, DIMS, tiny_config, seed=9)
    assert assembled.parameters().keys() == fresh.parameters().keys()
    for name, param in fresh.parameters().items():
        np.testing.assert_array_equal(assembled.parameters()[name].data, param.data)
    with pytest.raises(ContractError):
        FusionModel.from_unimodal(unimodal[:2])  # type: ignore[arg-type]


def test_late_vote_predict_replays_unimodal_votes(
    tiny_config: EncoderConfig, tiny_batch: Batch
) -> None:
    """predict on a late-vote model equals the vote over its stored unimodal logits."""
    model = create_model(Approach.A0, DIMS, tiny_config, seed=4)
    logits = unimodal_logits(model, tiny_batch)
    expected = late_fusion_predict(*(logits[m] for m in MODALITIES))
    np.testing.assert_array_equal(predict(model, tiny_batch), expected)
    with pytest.raises(ContractError):
        model_logits(model, tiny_batch)


def test_early_head_width(tiny_config: EncoderConfig) -> None:
    """The early head consumes exactly the 3*d concatenation."""
    for hidden in (0, 6):
        model = create_model(Approach.A1, DIMS, tiny_config, head_hidden_dim=hidden)
        assert model.early_head.in_dim == 3 * tiny_config.model_dim  # type: ignore[union-attr]


def test_early_zero_classifier_is_uniform(tiny_config: EncoderConfig, tiny_batch: Batch) -> None:
    """Zeroing the final layer of the early head gives uniform softmax output."""
    model = create_model(Approach.A1, DIMS, tiny_config, dtype=np.float64)
    head = model.early_head  # type: ignore[union-attr]
    head.output.weight.data[:] = 0.0
    head.output.bias.data[:] = 0.0
    logits = early_fusion_forward(model, tiny_batch).data  # type: ignore[arg-type]
    np.testing.assert_array_equal(logits, 0.0)


@pytest.mark.parametrize(
    ("bias", "expected"), [([0.1, 0.9, 0.2], 1), ([0.5, 0.5, 0.1], 0)]
)
def test_predict_argmax_and_tie(
    bias: list[float], expected: int, tiny_config: EncoderConfig, tiny_batch: Batch
) -> None:
    """predict takes the argmax of fused logits, ties go to the lowest class."""
    model = create_model(Approach.A1, DIMS, tiny_config, dtype=np.float64)
    head = model.early_head  # type: ignore[union-attr]
    head.output.weight.data[:] = 0.0
    head.output.bias.data[:] = bias
    assert predict(model, tiny_batch).tolist() == [expected] * len(tiny_batch)


def test_early_fusion_modality_relabeling() -> None:
    """Swapping two modalities together with their weight blocks leaves logits unchanged."""
    config = EncoderConfig(model_dim=8, num_heads=2, ff_dim=8, num_layers=1, max_seq_len=4)
    samples = generate_synthetic(
        SyntheticConfig(n_samples=4, seq_lens=(3, 3, 3), feat_dims=(4, 4, 4), seed=2)
    )
    batch = collate(samples)
    model = create_model(Approach.A1, (4, 4, 4), config, head_hidden_dim=0, dtype=np.float64)
    reference = early_fusion_forward(model, batch).data  # type: ignore[arg-type]

    # relabel video <-> audio in data and model
    batch.features["video"], batch.features["audio"] = (
        batch.features["audio"],
        batch.features["video"],
    )
    batch.masks["video"], batch.masks["audio"] = batch.masks["audio"], batch.masks["video"]
    encoders = model.encoders  # type: ignore[union-attr]
    encoders["video"], encoders["audio"] = encoders["audio"], encoders["video"]
    weight = model.early_head.output.weight  # type: ignore[union-attr]
    d = config.model_dim
    weight.data = np.concatenate([weight.data[d : 2 * d], weight.data[:d], weight.data[2 * d :]])

    relabeled = early_fusion_forward(model, batch).data  # type: ignore[arg-type]
    np.testing.assert_allclose(relabeled, reference, atol=1e-12)


def test_attention_fusion_shapes_and_weights(
    tiny_config: EncoderConfig, tiny_batch: Batch
) -> None:
    """Logits are (b, 3); attention over the three modality tokens sums to one."""
    model = create_model(Approach.A2, DIMS, tiny_config, dtype=np.float64)
    logits, weights = attention_fusion_with_weights(model, tiny_batch)  # type: ignore[arg-type]
    assert logits.shape == (len(tiny_batch), 3)
    assert weights.shape == (len(tiny_batch), tiny_config.num_heads, 3, 3)
    np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-6)


def test_attention_residual_path(tiny_config: EncoderConfig, tiny_batch: Batch) -> None:
    """With the output projection zeroed, the head classifies the mean of embedded tokens."""
    model = create_model(Approach.A2, DIMS, tiny_config, dtype=np.float64)
    assert isinstance(model, FusionModel)
    output = model.fusion_attention.output  # type: ignore[union-attr]
    output.weight.data[:] = 0.0
    output.bias.data[:] = 0.0

    pooled = [
        modality_encode(
            Tensor(tiny_batch.features[m], dtype=np.float64),
            tiny_batch.masks[m],
            model.encoders[m],
        )
        for m in MODALITIES
    ]
    b, d = pooled[0].shape
    tokens = concat([reshape(p, (b, 1, d)) for p in pooled], axis=1)
    tokens = tokens + model.modality_embedding  # type: ignore[operator]
    expected = model.attention_head(mean(tokens, axis=1)).data  # type: ignore[misc]
    np.testing.assert_allclose(attention_fusion_forward(model, tiny_batch).data, expected)


def test_wrong_mode_is_rejected(tiny_config: EncoderConfig, tiny_batch: Batch) -> None:
    """Each fusion forward only accepts its own mode."""
    early = create_model(Approach.A1, DIMS, tiny_config)
    attention = create_model(Approach.A2, DIMS, tiny_config)
    with pytest.raises(ContractError):
        attention_fusion_forward(early, tiny_batch)  # type: ignore[arg-type]
    with pytest.raises(ContractError):
        early_fusion_forward(attention, tiny_batch)  # type: ignore[arg-type]


def test_all_modes_give_finite_outputs(tiny_config: EncoderConfig, tiny_batch: Batch) -> None:
    """Every approach produces finite predictions on the same batch."""
    for approach in Approach:
        model = create_model(approach, DIMS, tiny_config, seed=1)
        classes = predict(model, tiny_batch)
        assert classes.shape == (len(tiny_batch),)
        assert set(classes.tolist()) <= {0, 1, 2}
        if approach is not Approach.A0:
            assert np.all(np.isfinite(model_logits(model, tiny_batch).data))


def test_unimodal_model_approach(tiny_config: EncoderConfig) -> None:
    """Single-modality models report their approach and only hold one encoder."""
    model = create_model("audio", DIMS, tiny_config)
    assert isinstance(model, UnimodalModel)
    assert model.approach is Approach.AUDIO
    assert model.encoder.input_dim == DIMS[1]
    assert Approach.A1.fusion_mode is FusionMode.EARLY_CONCAT
    assert Approach.TEXT.modality == "text"
    assert Approach.A2.modality is None
