# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Run configuration for mmfusion."""

import json
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any, ClassVar

import yaml
from jsonschema import FormatChecker, validate
from jsonschema.exceptions import ValidationError

from .data import Coupling, SyntheticConfig
from .errors import ConfigError
from .fusion import Approach
from .training import TrainConfig
from .transformer import EncoderConfig


def _load_config_schema() -> dict:
    """Load the configuration schema from JSON file.

    Returns:
        Dictionary with the configuration schema
    """
    schema_path = Path(__file__).parent / "config_schema.json"
    with schema_path.open(encoding="utf-8") as f:
        return json.load(f)


CONFIG_SCHEMA = _load_config_schema()


class RunConfig:  # pylint: disable=too-few-public-methods
    """Settings of generate, train, eval and compare runs, with defaults."""

    # Optimizer and loop
    LEARNING_RATE: float = 1e-3
    BETA1: float = 0.9
    BETA2: float = 0.999
    EPS: float = 1e-8
    BATCH_SIZE: int = 32
    EPOCHS: int = 50
    SEED: int = 0

    # Encoder shape
    MODEL_DIM: int = 64
    NUM_HEADS: int = 4
    FF_DIM: int = 128
    NUM_LAYERS: int = 2
    MAX_SEQ_LEN: int = 64
    DROPOUT_RATE: float = 0.1
    HEAD_HIDDEN_DIM: int = 64  # 0 gives a purely linear fused classifier

    # Data handling
    SPLIT_RATIOS: ClassVar[list[float]] = [0.7, 0.15, 0.15]
    DTYPE: str = "float32"
    WORKERS: int = 1

    # Synthetic data
    N_SAMPLES: int = 300
    SEQ_LENS: ClassVar[list[int]] = [20, 20, 50]
    FEAT_DIMS: ClassVar[list[int]] = [35, 74, 300]
    COUPLING: str = "joint"
    NOISE_STD: float = 0.3

    @classmethod
    def validate_config_schema(cls, cfg: dict, schema: dict) -> None:
        """Validate the config against a JSON schema."""
        try:
            validate(instance=cfg, schema=schema, format_checker=FormatChecker())
        except ValidationError as e:
            logging.critical("Config validation failed: %s", e.message)
            raise ConfigError(e.message) from None
        logging.debug("Config validated successfully against schema.")

    @classmethod
    def load_from_yaml(cls, yaml_path: str | Path) -> dict[str, Any]:
        """Load configuration from YAML file.

        Keys are case-insensitive and returned in upper case.

        Args:
            yaml_path: Path to YAML configuration file

        Returns:
            Dictionary with configuration values
        """
        logging.debug("Loading configuration from YAML file: %s", yaml_path)
        try:
            with Path(yaml_path).open(encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except FileNotFoundError:
            logging.critical("Configuration file not found: %s", yaml_path)
            raise
        except yaml.YAMLError as e:
            logging.critical("Error parsing YAML configuration file: %s", e)
            raise ConfigError(str(e)) from None
        if not isinstance(data, dict):
            msg = f"Configuration file {yaml_path} must hold a key: value mapping"
            logging.critical(msg)
            raise ConfigError(msg)
        data = {str(key).upper(): value for key, value in data.items()}
        cls.validate_config_schema(data, CONFIG_SCHEMA)
        return data

    @classmethod
    def from_yaml_and_args(
        cls, yaml_path: str | Path | None, overrides: Mapping[str, Any] | None = None
    ) -> "RunConfig":
        """Create RunConfig from class defaults, a YAML file and command line values.

        Args:
            yaml_path (str | Path | None): YAML configuration file, skipped if None
            overrides (Mapping[str, Any] | None): Values given on the command line; None values
                count as not given

        Returns:
            RunConfig instance with merged configuration
        """
        config = cls()
        if yaml_path:
            for key, value in cls.load_from_yaml(yaml_path).items():
                setattr(config, key, value)

        given = {k.upper(): v for k, v in (overrides or {}).items() if v is not None}
        unknown = sorted(key for key in given if not hasattr(config, key))
        if unknown:
            msg = f"Unknown configuration keys: {', '.join(unknown)}"
            raise ConfigError(msg)
        merged = config.as_dict() | given
        cls.validate_config_schema(merged, CONFIG_SCHEMA)
        for key, value in given.items():
            setattr(config, key, value)
        return config

    def as_dict(self) -> dict[str, Any]:
        """All settings keyed by upper-case name."""
        return {
            key: getattr(self, key)
            for key in CONFIG_SCHEMA["properties"]
            if hasattr(self, key)
        }

    def to_train_config(self, approach: Approach | str) -> TrainConfig:
        """Optimizer and loop settings for one approach."""
        return TrainConfig(
            learning_rate=float(self.LEARNING_RATE),
            beta1=float(self.BETA1),
            beta2=float(self.BETA2),
            eps=float(self.EPS),
            batch_size=int(self.BATCH_SIZE),
            epochs=int(self.EPOCHS),
            seed=int(self.SEED),
            approach=Approach(approach),
        )

    def to_encoder_config(self) -> EncoderConfig:
        """Shape of the modality encoders."""
        return EncoderConfig(
            model_dim=int(self.MODEL_DIM),
            num_heads=int(self.NUM_HEADS),
            ff_dim=int(self.FF_DIM),
            num_layers=int(self.NUM_LAYERS),
            max_seq_len=int(self.MAX_SEQ_LEN),
            dropout_rate=float(self.DROPOUT_RATE),
        )

    def to_synthetic_config(self) -> SyntheticConfig:
        """Parameters of the synthetic generator."""
        return SyntheticConfig(
            n_samples=int(self.N_SAMPLES),
            seq_lens=tuple(int(n) for n in self.SEQ_LENS),  # type: ignore[arg-type]
            feat_dims=tuple(int(n) for n in self.FEAT_DIMS),  # type: ignore[arg-type]
            coupling=Coupling(self.COUPLING),
            noise_std=float(self.NOISE_STD),
            seed=int(self.SEED),
        )

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        """Train, validation and test fractions."""
        return tuple(float(r) for r in self.SPLIT_RATIOS)  # type: ignore[return-value]
