# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""
Model checkpoint files.

Layout (integers u32 little-endian):

    b"MMFC" | format_version | config text (length-prefixed UTF-8, canonical key=value lines)
    | tensor count | per tensor: name (length-prefixed UTF-8), rank, extents, float32 LE data

Tensors are stored in the model's parameter order.
"""

import logging
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fusion import Approach, FusionModel, Model, UnimodalModel, create_model
from .transformer import EncoderConfig
from .utils import ByteReader, decode_key_values, encode_key_values

MAGIC = b"MMFC"
FORMAT_VERSION = 1

# Keys describing the model architecture; anything else in the config block is informational
ARCHITECTURE_KEYS = (
    "approach",
    "input_dims",
    "model_dim",
    "num_heads",
    "ff_dim",
    "num_layers",
    "max_seq_len",
    "dropout_rate",
    "head_hidden_dim",
    "dtype",
)


def model_config(model: Model) -> dict[str, object]:
    """Architecture description of a model, enough to rebuild it."""
    if isinstance(model, UnimodalModel):
        config = model.encoder.config
        input_dims = (model.encoder.input_dim,)
        head_hidden_dim = 0
    else:
        config = model.config
        input_dims = model.input_dims
        head_hidden_dim = model.head_hidden_dim
    return {
        "approach": model.approach.value,
        "input_dims": ",".join(str(d) for d in input_dims),
        "model_dim": config.model_dim,
        "num_heads": config.num_heads,
        "ff_dim": config.ff_dim,
        "num_layers": config.num_layers,
        "max_seq_len": config.max_seq_len,
        "dropout_rate": float(config.dropout_rate),
        "head_hidden_dim": head_hidden_dim,
        "dtype": model.dtype.name,
    }


def build_model_from_config(values: Mapping[str, str]) -> Model:
    """
    Rebuild an (untrained) model from a decoded config block.

    Raises:
        FormatError: If architecture keys are missing or malformed
    """
    missing = [key for key in ARCHITECTURE_KEYS if key not in values]
    if missing:
        msg = f"Checkpoint config lacks keys {missing}"
        raise FormatError(msg)
    try:
        approach = Approach(values["approach"])
        dims = [int(d) for d in values["input_dims"].split(",")]
        encoder = EncoderConfig(
            model_dim=int(values["model_dim"]),
            num_heads=int(values["num_heads"]),
            ff_dim=int(values["ff_dim"]),
            num_layers=int(values["num_layers"]),
            max_seq_len=int(values["max_seq_len"]),
            dropout_rate=float(values["dropout_rate"]),
        )
        dtype = np.dtype(values["dtype"])
        head_hidden_dim = int(values["head_hidden_dim"])
    except (ValueError, TypeError) as e:
        msg = f"Malformed checkpoint config: {e}"
        raise FormatError(msg) from e

    if approach.modality is not None:
        if len(dims) != 1:
            msg = f"Single-modality checkpoint needs one input dim, got {dims}"
            raise FormatError(msg)
        return UnimodalModel(approach.modality, dims[0], encoder, dtype=dtype)
    if len(dims) != 3:  # noqa: PLR2004
        msg = f"Multimodal checkpoint needs three input dims, got {dims}"
        raise FormatError(msg)
    return create_model(approach, dims, encoder, head_hidden_dim=head_hidden_dim, dtype=dtype)


def save_checkpoint(
    model: Model, path: str | Path, extra: Mapping[str, object] | None = None
) -> None:
    """
    Write a model checkpoint.

    Args:
        model (Model): The model
        path (str | Path): Output file
        extra (Mapping[str, object] | None): Additional informational config entries, e.g. the
            training seed; they must not collide with architecture keys
    """
    config = model_config(model)
    for key, value in (extra or {}).items():
        if key in config:
            msg = f"Extra checkpoint entry '{key}' collides with an architecture key"
            raise FormatError(msg)
        config[key] = value
    config_text = encode_key_values(config).encode("utf-8")

    params = model.parameters()
    chunks = [MAGIC, struct.pack("<2I", FORMAT_VERSION, len(config_text)), config_text]
    chunks.append(struct.pack("<I", len(params)))
    for name, param in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<{param.ndim + 1}I", param.ndim, *param.shape))
        chunks.append(param.data.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))
    logging.debug("Saved %d tensors of %s model to %s", len(params), model.approach.value, path)


def load_checkpoint(path: str | Path) -> tuple[Model, dict[str, str]]:
    """
    Read a checkpoint and rebuild its model.

    Args:
        path (str | Path): Checkpoint file

    Returns:
        tuple[Model, dict[str, str]]: The model with the stored parameters and the full
            decoded config block

    Raises:
        FormatError: On bad magic, version, config or tensor names/shapes
        LengthError: If the file is truncated
    """
    reader = ByteReader(Path(path).read_bytes(), source=str(path))
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        msg = f"{path}: bad magic {magic!r}, expected {MAGIC!r}"
        raise FormatError(msg)
    (version,) = reader.u32()
    if version != FORMAT_VERSION:
        msg = f"{path}: unsupported checkpoint version {version}"
        raise FormatError(msg)
    config = decode_key_values(reader.text())
    model = build_model_from_config(config)

    (count,) = reader.u32()
    arrays = {}
    for _ in range(count):
        name = reader.text()
        (rank,) = reader.u32()
        shape = reader.u32(rank) if rank else ()
        if name in arrays:
            msg = f"{path}: duplicate tensor '{name}'"
            raise FormatError(msg)
        arrays[name] = reader.f32_array(shape)
    reader.expect_end()
    model.load_parameters(arrays)
    logging.debug("Loaded %s model from %s", model.approach.value, path)
    return model, config


def copy_encoder(source: UnimodalModel, target: FusionModel) -> None:
    """Copy the trained encoder of a single-modality model into a multimodal model."""
    encoder = target.encoders[source.modality]
    arrays = {name: param.data for name, param in source.encoder.named_parameters()}
    encoder.load_parameters(arrays)
