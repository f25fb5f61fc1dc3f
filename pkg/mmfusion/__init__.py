# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Multimodal sentiment classification with transformer encoders and fusion strategies."""

from importlib.metadata import version

__version__ = version("mmfusion")
