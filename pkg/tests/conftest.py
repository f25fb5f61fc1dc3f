# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Pytest fixtures: tiny encoder shapes, synthetic samples and batches."""

from pathlib import Path

import numpy as np
import pytest

from mmfusion.data import (
    Batch,
    MultimodalSample,
    SyntheticConfig,
    collate,
    generate_synthetic,
    write_dataset,
)
from mmfusion.transformer import EncoderConfig

TINY_SEQ_LENS = (4, 3, 5)
TINY_FEAT_DIMS = (3, 4, 5)


@pytest.fixture(name="rng")
def fixture_rng() -> np.random.Generator:
    """Seeded generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture(name="tiny_config")
def fixture_tiny_config() -> EncoderConfig:
    """Small encoder shape used for gradient checks and fast training."""
    return EncoderConfig(
        model_dim=8, num_heads=2, ff_dim=16, num_layers=2, max_seq_len=8, dropout_rate=0.0
    )


@pytest.fixture(name="tiny_samples")
def fixture_tiny_samples() -> list[MultimodalSample]:
    """Twelve balanced JOINT samples with small shapes."""
    return generate_synthetic(
        SyntheticConfig(n_samples=12, seq_lens=TINY_SEQ_LENS, feat_dims=TINY_FEAT_DIMS, seed=1)
    )


@pytest.fixture(name="tiny_batch")
def fixture_tiny_batch(tiny_samples: list[MultimodalSample]) -> Batch:
    """Padded batch of the first two tiny samples."""
    return collate(tiny_samples[:2])


@pytest.fixture(name="dataset_file")
def fixture_dataset_file(tmp_path: Path) -> Path:
    """A small INDEPENDENT-coupling dataset written to disk."""
    samples = generate_synthetic(
        SyntheticConfig(
            n_samples=30,
            seq_lens=TINY_SEQ_LENS,
            feat_dims=TINY_FEAT_DIMS,
            coupling="independent",
            seed=3,
        )
    )
    path = tmp_path / "tiny.mmsa"
    write_dataset(samples, path)
    return path
