# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for the run configuration."""

from pathlib import Path

import pytest

from mmfusion.config import RunConfig
from mmfusion.data import Coupling
from mmfusion.errors import ConfigError
from mmfusion.fusion import Approach


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults() -> None:
    """Without file and overrides the documented defaults apply."""
    config = RunConfig.from_yaml_and_args(None)
    train = config.to_train_config("a1")
    assert (train.learning_rate, train.beta1, train.beta2, train.eps) == (1e-3, 0.9, 0.999, 1e-8)
    assert (train.batch_size, train.epochs, train.seed) == (32, 50, 0)
    encoder = config.to_encoder_config()
    assert (encoder.model_dim, encoder.num_heads, encoder.num_layers) == (64, 4, 2)
    assert config.split_ratios == (0.7, 0.15, 0.15)
    synthetic = config.to_synthetic_config()
    assert synthetic.feat_dims == (35, 74, 300)
    assert synthetic.seq_lens == (20, 20, 50)
    assert synthetic.coupling is Coupling.JOINT


def test_yaml_is_loaded_case_insensitively(tmp_path: Path) -> None:
    """Keys may be written in any case."""
    path = _write(tmp_path, "epochs: 3\nModel_Dim: 16\nnum_heads: 2\ncoupling: independent\n")
    config = RunConfig.from_yaml_and_args(path)
    assert config.EPOCHS == 3
    assert config.to_encoder_config().model_dim == 16
    assert config.to_synthetic_config().coupling is Coupling.INDEPENDENT


def test_command_line_wins_over_yaml(tmp_path: Path) -> None:
    """Explicit values override the file; None means not given."""
    path = _write(tmp_path, "epochs: 3\nseed: 5\n")
    config = RunConfig.from_yaml_and_args(path, {"epochs": 7, "seed": None, "batch_size": 4})
    train = config.to_train_config(Approach.A2)
    assert (train.epochs, train.seed, train.batch_size) == (7, 5, 4)
    assert train.approach is Approach.A2


def test_unknown_yaml_key_is_named(tmp_path: Path) -> None:
    """Misspelled keys are rejected and reported."""
    path = _write(tmp_path, "epoch: 3\n")
    with pytest.raises(ConfigError, match="EPOCH"):
        RunConfig.from_yaml_and_args(path)


def test_unknown_override_is_named() -> None:
    """Overrides must name known settings."""
    with pytest.raises(ConfigError, match="COLOR"):
        RunConfig.from_yaml_and_args(None, {"color": "red"})


@pytest.mark.parametrize(
    "text",
    [
        "learning_rate: 0\n",
        "batch_size: 0\n",
        "model_dim: 7\n",
        "coupling: partial\n",
        "dtype: float16\n",
        "feat_dims: [1, 2]\n",
    ],
)
def test_invalid_values(tmp_path: Path, text: str) -> None:
    """Out-of-range or malformed values fail schema validation."""
    with pytest.raises(ConfigError):
        RunConfig.from_yaml_and_args(_write(tmp_path, text))


def test_invalid_override() -> None:
    """Overrides are validated like file values."""
    with pytest.raises(ConfigError):
        RunConfig.from_yaml_and_args(None, {"epochs": -1})


def test_malformed_files(tmp_path: Path) -> None:
    """Broken YAML and non-mapping documents are config errors; missing files are not found."""
    with pytest.raises(ConfigError):
        RunConfig.from_yaml_and_args(_write(tmp_path, "epochs: [3\n"))
    with pytest.raises(ConfigError, match="mapping"):
        RunConfig.from_yaml_and_args(_write(tmp_path, "- 1\n- 2\n"))
    with pytest.raises(FileNotFoundError):
        RunConfig.from_yaml_and_args(tmp_path / "missing.yaml")


def test_empty_file_keeps_defaults(tmp_path: Path) -> None:
    """An empty file is a valid configuration."""
    config = RunConfig.from_yaml_and_args(_write(tmp_path, ""))
    assert config.as_dict() == RunConfig().as_dict()
