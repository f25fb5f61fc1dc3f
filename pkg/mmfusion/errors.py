# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Exception hierarchy for mmfusion.

Every error raised on purpose by the library derives from `MMFusionError`, so the CLI can turn
them into exit codes without swallowing programming errors.
"""


class MMFusionError(Exception):
    """Base class for all errors raised by mmfusion."""


class DimensionError(MMFusionError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class AxisError(MMFusionError, IndexError):
    """An axis index is out of range for a tensor."""


class ContractError(MMFusionError, ValueError):
    """A caller violated a documented precondition."""


class NumericError(MMFusionError, ArithmeticError):
    """A NaN or infinity appeared in a forward or backward computation."""


class ConfigError(MMFusionError, ValueError):
    """A configuration value is invalid or incompatible with the data."""


class DataError(MMFusionError, ValueError):
    """Input data is invalid (empty, out of range or non-finite)."""


class FormatError(DataError):
    """A binary file does not follow the expected layout."""


class LengthError(FormatError):
    """A binary file ended before the declared content was read."""
