# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""
Multimodal samples: sentiment discretization, the binary dataset file, splits, batching and a
synthetic generator.

Dataset file layout (all integers u32 little-endian, all reals float32 little-endian):

    header:  b"MMSA" | format_version | n_samples | (seq_len, feat_dim) x 3 (video, audio, text)
    record:  score | valid_len x 3 | video s_v*d_v | audio s_a*d_a | text s_t*d_t (row-major)
"""

import logging
import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, FormatError
from .transformer import AttentionMask
from .utils import ByteReader, Stream, make_rng

MODALITIES = ("video", "audio", "text")
MAGIC = b"MMSA"
FORMAT_VERSION = 1
HEADER_FORMAT = "<4s2I6I"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
SCORE_RANGE = (-3.0, 3.0)


class Sentiment(IntEnum):
    """The three sentiment classes."""

    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2


# Representative score of every class, used by the synthetic generator
CLASS_SCORES = {Sentiment.NEGATIVE: -2.0, Sentiment.NEUTRAL: 0.0, Sentiment.POSITIVE: 2.0}


def discretize_sentiment(score: float) -> Sentiment:
    """
    Map a sentiment score in [-3, 3] to its class.

    [-3, -1) is negative, [-1, 1] is neutral (both bounds inclusive) and (1, 3] is positive.

    Args:
        score (float): Continuous sentiment score

    Returns:
        Sentiment: The class

    Raises:
        DataError: If the score is outside [-3, 3] or not finite
    """
    if not math.isfinite(score) or not SCORE_RANGE[0] <= score <= SCORE_RANGE[1]:
        msg = f"Sentiment score {score} outside [-3, 3]"
        raise DataError(msg)
    if score < -1.0:
        return Sentiment.NEGATIVE
    if score > 1.0:
        return Sentiment.POSITIVE
    return Sentiment.NEUTRAL


@dataclass(eq=False)
class MultimodalSample:
    """Three aligned feature sequences with their valid lengths and sentiment.

    Attributes:
        video_feats (np.ndarray): (s_v, d_v) features, rows beyond the valid length are padding
        audio_feats (np.ndarray): (s_a, d_a) features
        text_feats (np.ndarray): (s_t, d_t) features
        valid_lens (tuple[int, int, int]): Valid lengths per modality, 1 <= l_m <= s_m
        score (float): Sentiment score in [-3, 3]
        label (Sentiment | None): Class; derived from `score` when not given
    """

    video_feats: np.ndarray
    audio_feats: np.ndarray
    text_feats: np.ndarray
    valid_lens: tuple[int, int, int]
    score: float
    label: Sentiment | None = None

    def __post_init__(self) -> None:
        """Validate the sample and derive the label."""
        self.valid_lens = tuple(int(n) for n in self.valid_lens)  # type: ignore[assignment]
        if len(self.valid_lens) != len(MODALITIES):
            msg = f"valid_lens needs one entry per modality, got {self.valid_lens}"
            raise DataError(msg)
        for modality, length in zip(MODALITIES, self.valid_lens, strict=True):
            feats = np.asarray(self.features(modality), dtype=np.float32)
            setattr(self, f"{modality}_feats", feats)
            if feats.ndim != 2:  # noqa: PLR2004
                msg = f"{modality} features need shape (seq_len, feat_dim), got {feats.shape}"
                raise DataError(msg)
            if not 1 <= length <= feats.shape[0]:
                msg = f"{modality} valid length {length} outside [1, {feats.shape[0]}]"
                raise DataError(msg)
            if not np.all(np.isfinite(feats)):
                msg = f"{modality} features contain non-finite values"
                raise DataError(msg)
        derived = discretize_sentiment(self.score)
        self.label = derived if self.label is None else Sentiment(int(self.label))

    def features(self, modality: str) -> np.ndarray:
        """Feature matrix of one modality."""
        return getattr(self, f"{modality}_feats")

    @property
    def shapes(self) -> tuple[tuple[int, int], ...]:
        """(seq_len, feat_dim) per modality."""
        return tuple(self.features(m).shape for m in MODALITIES)  # type: ignore[return-value]


@dataclass(frozen=True)
class DatasetHeader:
    """Header of a dataset file."""

    n_samples: int
    shapes: tuple[tuple[int, int], ...]
    format_version: int = FORMAT_VERSION

    @property
    def record_size(self) -> int:
        """Bytes per sample record."""
        return 4 + 4 * len(MODALITIES) + sum(4 * s * d for s, d in self.shapes)

    def pack(self) -> bytes:
        """Serialize the header."""
        flat = [n for shape in self.shapes for n in shape]
        return struct.pack(HEADER_FORMAT, MAGIC, self.format_version, self.n_samples, *flat)

    @classmethod
    def unpack(cls, reader: ByteReader) -> "DatasetHeader":
        """Read and validate a header."""
        raw = reader.take(HEADER_SIZE)
        magic, version, n_samples, *flat = struct.unpack(HEADER_FORMAT, raw)
        if magic != MAGIC:
            msg = f"{reader.source}: bad magic {magic!r}, expected {MAGIC!r}"
            raise FormatError(msg)
        if version != FORMAT_VERSION:
            msg = f"{reader.source}: unsupported format version {version}"
            raise FormatError(msg)
        shapes = tuple((flat[i], flat[i + 1]) for i in range(0, len(flat), 2))
        return cls(n_samples=n_samples, shapes=shapes, format_version=version)


def read_header(path: str | Path) -> DatasetHeader:
    """Read only the header of a dataset file."""
    with Path(path).open("rb") as f:
        return DatasetHeader.unpack(ByteReader(f.read(HEADER_SIZE), source=str(path)))


def write_dataset(
    samples: Sequence[MultimodalSample],
    path: str | Path,
    shapes: Sequence[tuple[int, int]] | None = None,
) -> None:
    """
    Write samples in the binary dataset layout.

    Args:
        samples (Sequence[MultimodalSample]): Samples sharing per-modality shapes
        path (str | Path): Output file
        shapes (Sequence[tuple[int, int]] | None): Per-modality (seq_len, feat_dim); taken from
            the first sample when omitted, zeros for an empty list

    Raises:
        ContractError: If samples disagree on shapes
    """
    if shapes is None:
        shapes = samples[0].shapes if samples else ((0, 0),) * len(MODALITIES)
    shapes = tuple((int(s), int(d)) for s, d in shapes)
    for index, sample in enumerate(samples):
        if sample.shapes != shapes:
            msg = f"Sample {index} has shapes {sample.shapes}, expected {shapes}"
            raise ContractError(msg)

    header = DatasetHeader(n_samples=len(samples), shapes=shapes)
    chunks = [header.pack()]
    for sample in samples:
        chunks.append(struct.pack("<f3I", sample.score, *sample.valid_lens))
        chunks.extend(sample.features(m).astype("<f4").tobytes() for m in MODALITIES)
    Path(path).write_bytes(b"".join(chunks))
    logging.debug("Wrote %d samples to %s", len(samples), path)


def load_dataset(path: str | Path, labels: Sequence[int] | None = None) -> list[MultimodalSample]:
    """
    Load a dataset file.

    Args:
        path (str | Path): Dataset file
        labels (Sequence[int] | None): Explicit class labels overriding the ones derived from
            the stored scores (for corpora without raw scores)

    Returns:
        list[MultimodalSample]: The samples

    Raises:
        FormatError: On bad magic or version
        LengthError: If the file ends before the declared samples
        DataError: On non-finite features or scores outside [-3, 3], naming the sample
    """
    reader = ByteReader(Path(path).read_bytes(), source=str(path))
    header = DatasetHeader.unpack(reader)
    if labels is not None and len(labels) != header.n_samples:
        msg = f"Got {len(labels)} explicit labels for {header.n_samples} samples"
        raise DataError(msg)

    samples = []
    for index in range(header.n_samples):
        (score,) = struct.unpack("<f", reader.take(4))
        valid_lens = reader.u32(len(MODALITIES))
        feats = [reader.f32_array(shape) for shape in header.shapes]
        try:
            sample = MultimodalSample(
                *feats,
                valid_lens=valid_lens,  # type: ignore[arg-type]
                score=score,
                label=None if labels is None else Sentiment(int(labels[index])),
            )
        except (DataError, ValueError) as e:
            msg = f"{path}: sample {index}: {e}"
            raise DataError(msg) from e
        samples.append(sample)
    reader.expect_end()
    logging.debug("Loaded %d samples with shapes %s from %s", len(samples), header.shapes, path)
    return samples


# absorbs rounding in ratio sums and products like 40 * 0.15
RATIO_TOLERANCE = 1e-9


def split_dataset(
    samples: Sequence[MultimodalSample],
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> tuple[list[MultimodalSample], list[MultimodalSample], list[MultimodalSample]]:
    """
    Shuffle with a seeded generator, then split contiguously into train, validation and test.

    Validation and test sizes are floor(n * ratio); the remainder goes to train.

    Raises:
        ContractError: If ratios are not positive or do not sum to 1
        DataError: With fewer than 3 samples
    """
    if (
        len(ratios) != 3  # noqa: PLR2004
        or any(r <= 0 for r in ratios)
        or abs(sum(ratios) - 1.0) > RATIO_TOLERANCE
    ):
        msg = f"Split ratios must be three positive numbers summing to 1, got {ratios}"
        raise ContractError(msg)
    n = len(samples)
    if n < 3:  # noqa: PLR2004
        msg = f"Need at least 3 samples to split, got {n}"
        raise DataError(msg)
    order = make_rng(seed, Stream.SPLIT).permutation(n)
    n_val = math.floor(n * ratios[1] + RATIO_TOLERANCE)
    n_test = math.floor(n * ratios[2] + RATIO_TOLERANCE)
    n_train = n - n_val - n_test
    shuffled = [samples[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


# -----------------------------------------------------------------
# Synthetic data
# -----------------------------------------------------------------


class Coupling(str, Enum):
    """How the label is spread over the modalities of synthetic data."""

    INDEPENDENT = "independent"
    JOINT = "joint"


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic generator.

    Attributes:
        n_samples (int): Number of samples
        seq_lens (tuple[int, int, int]): Sequence length per modality
        feat_dims (tuple[int, int, int]): Feature dimension per modality
        coupling (Coupling): INDEPENDENT or JOINT
        noise_std (float): Standard deviation of the Gaussian feature noise
        seed (int): Generator seed
        min_valid_fraction (float): Valid lengths are drawn from
            [ceil(fraction * seq_len), seq_len]
    """

    n_samples: int = 300
    seq_lens: tuple[int, int, int] = (20, 20, 50)
    feat_dims: tuple[int, int, int] = (35, 74, 300)
    coupling: Coupling = Coupling.JOINT
    noise_std: float = 0.3
    seed: int = 0
    min_valid_fraction: float = 0.5

    def __post_init__(self) -> None:
        """Validate the configuration."""
        object.__setattr__(self, "coupling", Coupling(self.coupling))
        if self.n_samples < 0:
            msg = f"n_samples must be non-negative, got {self.n_samples}"
            raise ContractError(msg)
        dims = (*self.seq_lens, *self.feat_dims)
        if len(dims) != 2 * len(MODALITIES) or any(int(n) < 1 for n in dims):
            msg = f"seq_lens and feat_dims need three positive entries, got {dims}"
            raise ContractError(msg)
        if self.noise_std < 0:
            msg = f"noise_std must be non-negative, got {self.noise_std}"
            raise ContractError(msg)
        if not 0.0 < self.min_valid_fraction <= 1.0:
            msg = f"min_valid_fraction must be in (0, 1], got {self.min_valid_fraction}"
            raise ContractError(msg)

    @property
    def shapes(self) -> tuple[tuple[int, int], ...]:
        """(seq_len, feat_dim) per modality."""
        return tuple(zip(self.seq_lens, self.feat_dims, strict=True))


def _balanced_symbol_pairs(count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, 2) pairs of symbols in {0,1,2}, every block of 9 holding each pair once."""
    blocks = [rng.permutation(9) for _ in range(-(-count // 9))]
    flat = np.concatenate(blocks)[:count] if blocks else np.empty(0, dtype=np.int64)
    return np.stack([flat // 3, flat % 3], axis=1)


def generate_synthetic_with_latents(
    cfg: SyntheticConfig,
) -> tuple[list[MultimodalSample], np.ndarray]:
    """
    Generate synthetic samples together with their latent symbols.

    Every modality m has a fixed random +-1 pattern; a sample's valid rows are
    `(symbol_m - 1) * pattern_m + noise`, so the sequence mean encodes a symbol in {0,1,2}.
    In INDEPENDENT coupling every symbol equals the label. In JOINT coupling the label is
    `(s_video + s_audio + s_text) mod 3`: per class, the (video, audio) pairs cycle through all
    nine combinations and the text symbol completes the sum, so any single symbol and any pair
    is independent of the label while all three determine it.

    Returns:
        tuple[list[MultimodalSample], np.ndarray]: Samples and their (n, 3) symbols
    """
    rng = make_rng(cfg.seed, Stream.SYNTHETIC)
    patterns = [rng.choice(np.array([-1.0, 1.0]), size=d) for d in cfg.feat_dims]
    labels = np.arange(cfg.n_samples) % len(Sentiment)
    rng.shuffle(labels)

    symbols = np.zeros((cfg.n_samples, len(MODALITIES)), dtype=np.int64)
    if cfg.coupling is Coupling.INDEPENDENT:
        symbols[:] = labels[:, None]
    else:
        for label in Sentiment:
            rows = np.flatnonzero(labels == label)
            pairs = _balanced_symbol_pairs(len(rows), rng)
            symbols[rows, :2] = pairs
            symbols[rows, 2] = (label - pairs.sum(axis=1)) % 3

    samples = []
    for index, label in enumerate(labels):
        feats, lengths = [], []
        for m, (seq_len, dim) in enumerate(cfg.shapes):
            length = int(rng.integers(math.ceil(cfg.min_valid_fraction * seq_len), seq_len + 1))
            block = np.zeros((seq_len, dim), dtype=np.float32)
            level = float(symbols[index, m] - 1)
            noise = cfg.noise_std * rng.standard_normal((length, dim))
            block[:length] = level * patterns[m] + noise
            feats.append(block)
            lengths.append(length)
        samples.append(
            MultimodalSample(
                *feats,
                valid_lens=tuple(lengths),  # type: ignore[arg-type]
                score=CLASS_SCORES[Sentiment(int(label))],
            )
        )
    return samples, symbols


def generate_synthetic(cfg: SyntheticConfig) -> list[MultimodalSample]:
    """Generate a balanced synthetic dataset, see `generate_synthetic_with_latents`."""
    samples, _ = generate_synthetic_with_latents(cfg)
    return samples


# -----------------------------------------------------------------
# Batching
# -----------------------------------------------------------------


@dataclass(eq=False)
class Batch:
    """Padded features, masks and labels of a group of samples.

    Attributes:
        features (dict[str, np.ndarray]): Per modality (b, s, d) float32 arrays
        masks (dict[str, AttentionMask]): Per modality validity of the s positions
        labels (np.ndarray): (b,) class indices
        indices (np.ndarray): Positions of the samples in the source list
    """

    features: dict[str, np.ndarray]
    masks: dict[str, AttentionMask]
    labels: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        """Number of samples."""
        return len(self.labels)


def collate(samples: Sequence[MultimodalSample], indices: Sequence[int] | None = None) -> Batch:
    """Pad samples to the batch-maximum valid length of every modality."""
    features, masks = {}, {}
    for m, modality in enumerate(MODALITIES):
        lengths = np.array([s.valid_lens[m] for s in samples], dtype=np.int64)
        width = int(lengths.max())
        dim = samples[0].features(modality).shape[1]
        padded = np.zeros((len(samples), width, dim), dtype=np.float32)
        for row, (sample, length) in enumerate(zip(samples, lengths, strict=True)):
            padded[row, :length] = sample.features(modality)[:length]
        features[modality] = padded
        masks[modality] = AttentionMask.from_lengths(lengths, width)
    return Batch(
        features=features,
        masks=masks,
        labels=np.array([int(s.label) for s in samples], dtype=np.int64),  # type: ignore[arg-type]
        indices=np.arange(len(samples)) if indices is None else np.asarray(indices),
    )


def make_batches(
    samples: Sequence[MultimodalSample],
    batch_size: int,
    rng: np.random.Generator | None = None,
) -> list[Batch]:
    """
    Group samples into padded batches; the final partial batch is kept.

    Args:
        samples (Sequence[MultimodalSample]): Samples to batch
        batch_size (int): Maximum batch size, at least 1
        rng (np.random.Generator | None): Shuffles the sample order when given

    Returns:
        list[Batch]: The batches
    """
    if batch_size < 1:
        msg = f"batch_size must be at least 1, got {batch_size}"
        raise ContractError(msg)
    order = np.arange(len(samples)) if rng is None else rng.permutation(len(samples))
    batches = []
    for start in range(0, len(samples), batch_size):
        chunk = order[start : start + batch_size]
        batches.append(collate([samples[i] for i in chunk], chunk))
    return batches


def class_counts(samples: Sequence[MultimodalSample]) -> dict[Sentiment, int]:
    """Number of samples per class."""
    counts = dict.fromkeys(Sentiment, 0)
    for sample in samples:
        counts[Sentiment(int(sample.label))] += 1  # type: ignore[arg-type]
    return counts
