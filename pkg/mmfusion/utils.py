# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Utility functions shared by the mmfusion modules."""

import logging
import re
import struct
from collections.abc import Mapping
from enum import IntEnum
from pathlib import Path

import numpy as np
from platformdirs import user_config_path

from .errors import FormatError, LengthError


class Stream(IntEnum):
    """Identifiers of the independent random streams derived from one run seed."""

    SPLIT = 0
    DATA_ORDER = 1
    INIT = 2
    DROPOUT = 3
    SYNTHETIC = 4


def derive_seed(seed: int, stream: Stream, index: int = 0) -> np.random.SeedSequence:
    """Derive the seed sequence of one random stream.

    Streams are independent of each other, so e.g. changing the number of dropout draws never
    changes the data order. `index` separates sub-models that share a stream, like the three
    unimodal models of late fusion.

    Args:
        seed (int): The run seed (64-bit unsigned)
        stream (Stream): Which stream to derive
        index (int): Sub-model index within the stream

    Returns:
        np.random.SeedSequence: Seed sequence to pass to `np.random.default_rng`
    """
    return np.random.SeedSequence([int(seed), int(stream), int(index)])


def make_rng(seed: int, stream: Stream, index: int = 0) -> np.random.Generator:
    """Create a generator for one random stream, see `derive_seed`."""
    return np.random.default_rng(derive_seed(seed, stream, index))


def format_percent(fraction: float) -> str:
    """Format a fraction in [0, 1] as a percentage with two decimals, e.g. "71.87%"."""
    return f"{fraction * 100:.2f}%"


def parse_int_list(value: str, expected: int | None = None) -> list[int]:
    """
    Parse a comma-separated list of non-negative integers as given on the command line.

    Args:
        value (str): Input like "1,2,3"
        expected (int | None): If set, the exact number of entries required

    Returns:
        list[int]: The parsed integers

    Raises:
        ValueError: If the format is not recognized
    """
    if not re.fullmatch(r"\s*\d+(\s*,\s*\d+)*\s*", value):
        msg = f"Invalid list '{value}'. Use comma-separated integers, e.g. '1,2,3'."
        raise ValueError(msg)
    numbers = [int(part) for part in value.split(",")]
    if expected is not None and len(numbers) != expected:
        msg = f"Expected {expected} comma-separated integers, got {len(numbers)} in '{value}'"
        raise ValueError(msg)
    return numbers


def get_user_config_path(name: str = "mmfusion", file: str = "") -> str:
    """
    Get the user configuration directory for the application.

    Args:
        name (str): The name of the application
        file (str): Optional filename to append to the config directory
    Returns:
        str: The path to the user configuration directory
    """
    config_path = Path(user_config_path(appname=name, ensure_exists=False))
    if file:
        config_path = config_path / file
    return str(config_path)


def encode_key_values(values: Mapping[str, object]) -> str:
    """
    Encode a flat mapping as canonical key=value text.

    Keys are sorted, one entry per line, each line terminated by a newline. Floats use `repr`
    so decoding them again is exact.

    Args:
        values (Mapping[str, object]): Flat mapping of scalar values

    Returns:
        str: The canonical text block
    """
    lines = []
    for key in sorted(values):
        value = values[key]
        if "=" in key or "\n" in key or "\n" in str(value):
            msg = f"Key or value not representable as key=value text: {key!r}"
            raise FormatError(msg)
        lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return "".join(line + "\n" for line in lines)


def decode_key_values(text: str) -> dict[str, str]:
    """Decode canonical key=value text into a dict of strings."""
    values: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            msg = f"Line {number} of key=value block has no '=': {line!r}"
            raise FormatError(msg)
        values[key] = value
    return values


class ByteReader:
    """Sequential little-endian reader over an in-memory binary file."""

    def __init__(self, buffer: bytes, source: str = "<bytes>") -> None:
        """Initialize ByteReader."""
        self.buffer = buffer
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        """Return the next `size` bytes, raising `LengthError` if the file ends early."""
        end = self.offset + size
        if end > len(self.buffer):
            msg = (
                f"{self.source}: file truncated at byte offset {len(self.buffer)}, "
                f"needed {size} bytes at offset {self.offset}"
            )
            raise LengthError(msg)
        chunk = self.buffer[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, count: int = 1) -> tuple[int, ...]:
        """Read `count` unsigned 32-bit little-endian integers."""
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def f32_array(self, shape: tuple[int, ...]) -> np.ndarray:
        """Read a float32 little-endian array of the given shape."""
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)

    def text(self) -> str:
        """Read a u32 length-prefixed UTF-8 string."""
        (length,) = self.u32()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            msg = f"{self.source}: invalid UTF-8 text at byte offset {self.offset - length}"
            raise FormatError(msg) from e

    def expect_end(self) -> None:
        """Warn when trailing bytes follow the declared content."""
        if self.offset != len(self.buffer):
            logging.warning(
                "%s: %d trailing bytes after declared content",
                self.source,
                len(self.buffer) - self.offset,
            )
