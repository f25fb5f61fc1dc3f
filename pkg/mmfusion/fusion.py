# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""
Models over the three modality encoders and the fusion strategies combining them.

* late vote: every modality classifies on its own, the classes are combined by majority vote
* early concat: the pooled representations are concatenated and classified jointly
* attention: the pooled representations form three tokens that attend to each other before
  they are averaged and classified
"""

from collections.abc import Sequence
from enum import Enum

import numpy as np

from .data import MODALITIES, Batch
from .errors import ConfigError, ContractError
from .layers import ClassifierHead, LayerNorm, Module, uniform_init
from .tensor import Tensor, concat, mean, reshape, softmax
from .transformer import (
    NUM_CLASSES,
    AttentionMask,
    EncoderConfig,
    ModalityEncoder,
    MultiHeadAttention,
    attention_with_weights,
    modality_encode,
    modality_forward,
)
from .utils import Stream, make_rng

# Init stream index of the fusion parameters; 0..2 are the modality encoders
FUSION_INIT_INDEX = len(MODALITIES)


class FusionMode(str, Enum):
    """How the modalities of a multimodal model are combined."""

    LATE_VOTE = "late_vote"
    EARLY_CONCAT = "early_concat"
    ATTENTION = "attention"


class Approach(str, Enum):
    """What a training run builds: a single-modality model or one of the fusion approaches."""

    VIDEO = "video"
    AUDIO = "audio"
    TEXT = "text"
    A0 = "a0"
    A1 = "a1"
    A2 = "a2"

    @property
    def fusion_mode(self) -> FusionMode | None:
        """Fusion mode of a multimodal approach, None for single modalities."""
        return {
            Approach.A0: FusionMode.LATE_VOTE,
            Approach.A1: FusionMode.EARLY_CONCAT,
            Approach.A2: FusionMode.ATTENTION,
        }.get(self)

    @property
    def modality(self) -> str | None:
        """Modality name of a single-modality approach, None otherwise."""
        return self.value if self.value in MODALITIES else None


class UnimodalModel(Module):
    """Encoder and classifier of a single modality."""

    def __init__(
        self,
        modality: str,
        input_dim: int,
        config: EncoderConfig,
        *,
        seed: int = 0,
        dtype: np.dtype | str = np.float32,
    ) -> None:
        """Initialize UnimodalModel; the init stream is shared with the matching fused encoder."""
        if modality not in MODALITIES:
            msg = f"Unknown modality '{modality}', expected one of {MODALITIES}"
            raise ConfigError(msg)
        self.modality = modality
        self.dtype = np.dtype(dtype)
        self.encoder = ModalityEncoder(
            input_dim, config, make_rng(seed, Stream.INIT, MODALITIES.index(modality)), dtype
        )

    @property
    def approach(self) -> Approach:
        """The approach this model implements."""
        return Approach(self.modality)


class FusionModel(Module):
    """Three modality encoders plus the parameters of one fusion mode.

    Attributes:
        encoders (dict[str, ModalityEncoder]): Encoders keyed by modality
        mode (FusionMode): Active fusion mode
        early_head (ClassifierHead | None): Head over the 3*d concatenation (EARLY_CONCAT)
        modality_embedding (Tensor | None): (3, d) learned token offsets (ATTENTION)
        fusion_norm (LayerNorm | None): Pre-norm of the token attention block (ATTENTION)
        fusion_attention (MultiHeadAttention | None): Attention across tokens (ATTENTION)
        attention_head (ClassifierHead | None): Head over the averaged tokens (ATTENTION)
    """

    def __init__(
        self,
        input_dims: Sequence[int],
        config: EncoderConfig,
        mode: FusionMode,
        *,
        head_hidden_dim: int = 64,
        seed: int = 0,
        dtype: np.dtype | str = np.float32,
    ) -> None:
        """Initialize FusionModel."""
        if len(input_dims) != len(MODALITIES):
            msg = f"Need one input dimension per modality, got {tuple(input_dims)}"
            raise ConfigError(msg)
        if head_hidden_dim < 0:
            msg = f"head_hidden_dim must be non-negative, got {head_hidden_dim}"
            raise ConfigError(msg)
        self.mode = FusionMode(mode)
        self.config = config
        self.head_hidden_dim = head_hidden_dim
        self.dtype = np.dtype(dtype)
        self.encoders = {
            modality: ModalityEncoder(dim, config, make_rng(seed, Stream.INIT, index), dtype)
            for index, (modality, dim) in enumerate(zip(MODALITIES, input_dims, strict=True))
        }

        d = config.model_dim
        rng = make_rng(seed, Stream.INIT, FUSION_INIT_INDEX)
        self.early_head = None
        self.modality_embedding = None
        self.fusion_norm = None
        self.fusion_attention = None
        self.attention_head = None
        if self.mode is FusionMode.EARLY_CONCAT:
            self.early_head = ClassifierHead(
                len(MODALITIES) * d, head_hidden_dim, NUM_CLASSES, rng, dtype
            )
        elif self.mode is FusionMode.ATTENTION:
            self.modality_embedding = uniform_init(rng, d, (len(MODALITIES), d), dtype)
            self.fusion_norm = LayerNorm(d, dtype)
            self.fusion_attention = MultiHeadAttention(d, config.num_heads, rng, dtype)
            self.attention_head = ClassifierHead(d, head_hidden_dim, NUM_CLASSES, rng, dtype)

    @classmethod
    def from_unimodal(cls, models: Sequence[UnimodalModel]) -> "FusionModel":
        """Assemble a late-vote model from trained single-modality models (one per modality)."""
        by_modality = {model.modality: model for model in models}
        if sorted(by_modality) != sorted(MODALITIES):
            msg = f"Late vote needs one model per modality, got {sorted(by_modality)}"
            raise ContractError(msg)
        first = by_modality[MODALITIES[0]]
        fused = cls.__new__(cls)
        fused.mode = FusionMode.LATE_VOTE
        fused.config = first.encoder.config
        fused.head_hidden_dim = 0
        fused.dtype = first.dtype
        fused.encoders = {m: by_modality[m].encoder for m in MODALITIES}
        fused.early_head = None
        fused.modality_embedding = None
        fused.fusion_norm = None
        fused.fusion_attention = None
        fused.attention_head = None
        return fused

    @property
    def approach(self) -> Approach:
        """The approach this model implements."""
        return {
            FusionMode.LATE_VOTE: Approach.A0,
            FusionMode.EARLY_CONCAT: Approach.A1,
            FusionMode.ATTENTION: Approach.A2,
        }[self.mode]

    @property
    def input_dims(self) -> tuple[int, ...]:
        """Feature dimension per modality."""
        return tuple(self.encoders[m].input_dim for m in MODALITIES)


Model = UnimodalModel | FusionModel


def create_model(
    approach: Approach | str,
    input_dims: Sequence[int],
    config: EncoderConfig,
    *,
    head_hidden_dim: int = 64,
    seed: int = 0,
    dtype: np.dtype | str = np.float32,
) -> Model:
    """
    Create a freshly initialized model for an approach.

    Args:
        approach (Approach | str): video, audio, text, a0, a1 or a2
        input_dims (Sequence[int]): Feature dimension of video, audio and text
        config (EncoderConfig): Shape of every modality encoder
        head_hidden_dim (int): Hidden width of fused classifier heads, 0 for a linear head
        seed (int): Run seed; initialization uses the INIT stream
        dtype (np.dtype | str): Parameter precision

    Returns:
        Model: The model
    """
    approach = Approach(approach)
    if approach.modality is not None:
        index = MODALITIES.index(approach.modality)
        return UnimodalModel(
            approach.modality, input_dims[index], config, seed=seed, dtype=dtype
        )
    return FusionModel(
        input_dims,
        config,
        approach.fusion_mode,  # type: ignore[arg-type]
        head_hidden_dim=head_hidden_dim,
        seed=seed,
        dtype=dtype,
    )


def _features(batch: Batch, modality: str, dtype: np.dtype) -> Tensor:
    return Tensor(batch.features[modality], dtype=dtype)


def _require_mode(model: FusionModel, mode: FusionMode) -> None:
    if not isinstance(model, FusionModel) or model.mode is not mode:
        found = getattr(model, "mode", type(model).__name__)
        msg = f"Operation needs a {mode.value} model, got {found}"
        raise ContractError(msg)


def _pooled(
    model: FusionModel, batch: Batch, rng: np.random.Generator | None
) -> list[Tensor]:
    return [
        modality_encode(
            _features(batch, m, model.dtype), batch.masks[m], model.encoders[m], rng=rng
        )
        for m in MODALITIES
    ]


def unimodal_logits(
    model: Model, batch: Batch, *, rng: np.random.Generator | None = None
) -> dict[str, Tensor]:
    """Logits of every modality classifier contained in the model, keyed by modality."""
    if isinstance(model, UnimodalModel):
        encoders = {model.modality: model.encoder}
    else:
        encoders = model.encoders
    return {
        m: modality_forward(_features(batch, m, model.dtype), batch.masks[m], enc, rng=rng)[1]
        for m, enc in encoders.items()
    }


def late_fusion_predict(
    logits_v: Tensor | np.ndarray, logits_a: Tensor | np.ndarray, logits_t: Tensor | np.ndarray
) -> np.ndarray:
    """
    Combine the three unimodal predictions by majority vote.

    Every modality votes for the argmax of its logits. A class with at least two votes wins.
    When all three votes differ, the class with the highest softmax probability summed over
    the modalities wins; exact ties go to the lowest class index.

    Args:
        logits_v (Tensor | np.ndarray): (b, 3) video logits
        logits_a (Tensor | np.ndarray): (b, 3) audio logits
        logits_t (Tensor | np.ndarray): (b, 3) text logits

    Returns:
        np.ndarray: (b,) predicted classes

    Raises:
        ContractError: If the shapes differ or are not (b, 3)
    """
    arrays = [
        np.asarray(x.data if isinstance(x, Tensor) else x) for x in (logits_v, logits_a, logits_t)
    ]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1 or arrays[0].shape[1:] != (NUM_CLASSES,):
        msg = f"late_fusion_predict needs three (b, 3) logits, got {[a.shape for a in arrays]}"
        raise ContractError(msg)

    votes = np.stack([a.argmax(axis=1) for a in arrays], axis=1)
    counts = (votes[:, :, None] == np.arange(NUM_CLASSES)).sum(axis=1)
    mass = np.sum([softmax(Tensor(a, dtype=np.float64)).data for a in arrays], axis=0)
    majority = counts.max(axis=1) >= 2  # noqa: PLR2004
    return np.where(majority, counts.argmax(axis=1), mass.argmax(axis=1)).astype(np.int64)


def early_fusion_forward(
    model: FusionModel, batch: Batch, *, rng: np.random.Generator | None = None
) -> Tensor:
    """Classify the concatenation of the pooled video, audio and text representations."""
    _require_mode(model, FusionMode.EARLY_CONCAT)
    joint = concat(_pooled(model, batch, rng), axis=1)
    return model.early_head(joint)  # type: ignore[misc]


def attention_fusion_with_weights(
    model: FusionModel, batch: Batch, *, rng: np.random.Generator | None = None
) -> tuple[Tensor, Tensor]:
    """
    Attention across the three modality tokens.

    The pooled representations plus their modality embedding form a (b, 3, d) token sequence.
    One pre-norm residual self-attention block mixes the tokens, which are then averaged and
    classified. There is no positional encoding and no padding among the tokens.

    Returns:
        tuple[Tensor, Tensor]: Logits (b, 3) and attention weights (b, h, 3, 3)
    """
    _require_mode(model, FusionMode.ATTENTION)
    pooled = _pooled(model, batch, rng)
    b, d = pooled[0].shape
    tokens = concat([reshape(p, (b, 1, d)) for p in pooled], axis=1)
    tokens = tokens + model.modality_embedding  # type: ignore[operator]
    mask = AttentionMask.all_valid(b, len(MODALITIES))
    attended, weights = attention_with_weights(
        model.fusion_norm(tokens),  # type: ignore[misc]
        mask,
        model.fusion_attention,  # type: ignore[arg-type]
    )
    mixed = tokens + attended
    return model.attention_head(mean(mixed, axis=1)), weights  # type: ignore[misc]


def attention_fusion_forward(
    model: FusionModel, batch: Batch, *, rng: np.random.Generator | None = None
) -> Tensor:
    """Logits of attention fusion, see `attention_fusion_with_weights`."""
    logits, _ = attention_fusion_with_weights(model, batch, rng=rng)
    return logits


def model_logits(
    model: Model, batch: Batch, *, rng: np.random.Generator | None = None
) -> Tensor:
    """
    Logits of a jointly trainable model.

    Raises:
        ContractError: For late-vote models, which have no single set of logits
    """
    if isinstance(model, UnimodalModel):
        return unimodal_logits(model, batch, rng=rng)[model.modality]
    if model.mode is FusionMode.EARLY_CONCAT:
        return early_fusion_forward(model, batch, rng=rng)
    if model.mode is FusionMode.ATTENTION:
        return attention_fusion_forward(model, batch, rng=rng)
    msg = "Late-vote models have no joint logits; use unimodal_logits"
    raise ContractError(msg)


def predict(model: Model, batch: Batch) -> np.ndarray:
    """Predicted class per sample; argmax ties go to the lowest class index."""
    if isinstance(model, FusionModel) and model.mode is FusionMode.LATE_VOTE:
        logits = unimodal_logits(model, batch)
        return late_fusion_predict(*(logits[m] for m in MODALITIES))
    return model_logits(model, batch).data.argmax(axis=1).astype(np.int64)
