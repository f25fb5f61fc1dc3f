# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Finite-difference verification of the analytic gradients."""

import logging
from collections.abc import Callable, Sequence

import numpy as np

from .errors import ContractError
from .tensor import GradTape, Tensor, backward


def finite_difference_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-4,
    tol: float | None = None,
) -> float:
    """
    Compare analytic gradients of a scalar function against central differences.

    The relative error of one scalar is `|analytic - numeric| / max(1, |analytic|)` with
    `numeric = (f(x + h) - f(x - h)) / 2h`. Inputs are perturbed in place and restored. Run in
    float64; float32 inputs make the check meaningless at small `h`.

    Args:
        f (Callable): Function of the input tensors returning a scalar tensor
        inputs (Sequence[Tensor]): Tensors to differentiate against; they are marked as
            requiring gradients and their `grad` is reset
        h (float): Perturbation step
        tol (float | None): If given, a warning is logged when the error exceeds it

    Returns:
        float: Maximum relative error over all input scalars

    Raises:
        ContractError: If `h` is not positive
    """
    if not h > 0:
        msg = f"Perturbation step h must be positive, got {h}"
        raise ContractError(msg)
    for tensor in inputs:
        tensor.data = np.ascontiguousarray(tensor.data)
        tensor.requires_grad = True
        tensor.grad = None

    with GradTape() as tape:
        out = f(inputs)
    backward(out, tape)
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.reshape(t.shape) for t in inputs
    ]

    worst = 0.0
    for tensor, grad in zip(inputs, analytic, strict=True):
        flat = tensor.data.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = f(inputs).item()
            flat[i] = original - h
            minus = f(inputs).item()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            error = abs(flat_grad[i] - numeric) / max(1.0, abs(flat_grad[i]))
            worst = max(worst, float(error))

    if tol is not None and worst > tol:
        logging.warning("Gradient check error %.3g exceeds tolerance %.3g", worst, tol)
    return worst
