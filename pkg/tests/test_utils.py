# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Tests for the utils module."""

import struct
from pathlib import Path

import numpy as np
import pytest

from mmfusion.errors import FormatError, LengthError
from mmfusion.utils import (
    ByteReader,
    Stream,
    decode_key_values,
    derive_seed,
    encode_key_values,
    format_percent,
    get_user_config_path,
    make_rng,
    parse_int_list,
)


@pytest.mark.parametrize(
    ("fraction", "expected"), [(0.71875, "71.88%"), (1.0, "100.00%"), (0.0, "0.00%")]
)
def test_format_percent(fraction: float, expected: str) -> None:
    """Accuracies are shown with two decimals."""
    assert format_percent(fraction) == expected


def test_parse_int_list() -> None:
    """Comma-separated integers, optionally with a required count."""
    assert parse_int_list("35,74,300") == [35, 74, 300]
    assert parse_int_list(" 1, 2 ,3 ", expected=3) == [1, 2, 3]
    with pytest.raises(ValueError, match="Expected 3"):
        parse_int_list("1,2", expected=3)
    for bad in ("", "1,,2", "a,b", "-1,2"):
        with pytest.raises(ValueError, match="Invalid list"):
            parse_int_list(bad)


def test_key_values_are_canonical() -> None:
    """Keys are sorted and floats keep every bit through encode and decode."""
    text = encode_key_values({"seed": 3, "approach": "a1", "dropout_rate": 0.1 + 0.2})
    assert text == "approach=a1\ndropout_rate=0.30000000000000004\nseed=3\n"
    decoded = decode_key_values(text)
    assert float(decoded["dropout_rate"]) == 0.1 + 0.2
    assert decoded["seed"] == "3"


def test_key_values_errors() -> None:
    """Values with newlines cannot be encoded; lines without '=' cannot be decoded."""
    with pytest.raises(FormatError):
        encode_key_values({"note": "two\nlines"})
    with pytest.raises(FormatError, match="Line 2"):
        decode_key_values("a=1\nbroken\n")


def test_derived_streams_are_independent() -> None:
    """Streams and indices of one seed give different numbers; equal inputs repeat."""
    first = make_rng(7, Stream.INIT, 0).random(4)
    assert np.array_equal(first, make_rng(7, Stream.INIT, 0).random(4))
    assert not np.array_equal(first, make_rng(7, Stream.INIT, 1).random(4))
    assert not np.array_equal(first, make_rng(7, Stream.DROPOUT, 0).random(4))
    assert not np.array_equal(first, make_rng(8, Stream.INIT, 0).random(4))
    expected = np.random.SeedSequence([7, 0, 0]).generate_state(4)
    np.testing.assert_array_equal(derive_seed(7, Stream.SPLIT).generate_state(4), expected)


def test_byte_reader_reports_truncation() -> None:
    """Reading past the end names the file size as the truncation offset."""
    reader = ByteReader(struct.pack("<2I", 5, 6) + b"\x01", source="x.bin")
    assert reader.u32(2) == (5, 6)
    with pytest.raises(LengthError, match="truncated at byte offset 9"):
        reader.u32()


def test_byte_reader_text_and_arrays(caplog: pytest.LogCaptureFixture) -> None:
    """Length-prefixed text, float arrays and trailing-byte warnings."""
    values = np.arange(6, dtype="<f4")
    buffer = struct.pack("<I", 3) + b"abc" + values.tobytes() + b"\x00"
    reader = ByteReader(buffer)
    assert reader.text() == "abc"
    np.testing.assert_array_equal(reader.f32_array((2, 3)), values.reshape(2, 3))
    reader.expect_end()
    assert "1 trailing bytes" in caplog.text


def test_byte_reader_rejects_bad_utf8() -> None:
    """Invalid UTF-8 in text fields is a format error."""
    with pytest.raises(FormatError, match="UTF-8"):
        ByteReader(struct.pack("<I", 2) + b"\xff\xfe").text()


def test_get_user_config_path() -> None:
    """The config file lives in the per-user mmfusion directory."""
    path = Path(get_user_config_path(file="config.yaml"))
    assert path.name == "config.yaml"
    assert path.parent.name == "mmfusion"
