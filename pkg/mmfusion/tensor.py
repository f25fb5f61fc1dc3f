# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""
Dense tensors with reverse-mode differentiation.

A `Tensor` wraps a numpy array plus an optional gradient. Operations record themselves on the
active `GradTape` (entered as a context manager) whenever one of their inputs requires a
gradient; without an active tape they only compute values, which is how inference runs.
`backward` replays the recorded backward rules in reverse execution order.

Broadcasting is limited to the trailing-suffix case (a bias of shape `(d,)` or a table of shape
`(s, d)` added to a `(b, s, d)` tensor); all other shapes must match exactly. Every forward and
backward result is checked for NaN/Inf and raises `NumericError` immediately.
"""

from __future__ import annotations

import contextvars
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import TypeAlias

import numpy as np

from .errors import AxisError, ContractError, DimensionError, NumericError

ArrayLike: TypeAlias = "np.ndarray | Sequence | float | int"
BackwardRule: TypeAlias = "Callable[[np.ndarray], Sequence[np.ndarray | None]]"

_ACTIVE_TAPE: contextvars.ContextVar[GradTape | None] = contextvars.ContextVar(
    "mmfusion_active_tape", default=None
)


class Tensor:
    """A dense array of real scalars with an optional gradient slot.

    Attributes:
        data (np.ndarray): The values, row-major.
        grad (np.ndarray | None): Accumulated gradient, same shape as `data`.
        requires_grad (bool): Whether operations on this tensor are recorded for backward.
    """

    __array_priority__ = 1000

    def __init__(
        self, data: ArrayLike, requires_grad: bool = False, dtype: np.dtype | str | None = None
    ) -> None:
        """Initialize Tensor. Non-floating input is converted to float64."""
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @classmethod
    def zeros(cls, shape: tuple[int, ...], dtype: np.dtype | str = np.float64) -> Tensor:
        """Create a tensor of zeros."""
        return cls(np.zeros(shape, dtype=dtype))

    @property
    def shape(self) -> tuple[int, ...]:
        """Extents of the tensor."""
        return self.data.shape

    @property
    def ndim(self) -> int:
        """Rank of the tensor."""
        return self.data.ndim

    @property
    def size(self) -> int:
        """Number of scalars."""
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        """Scalar type of the data."""
        return self.data.dtype

    def item(self) -> float:
        """Return the value of a single-scalar tensor."""
        if self.size != 1:
            msg = f"item() needs a single-scalar tensor, got shape {self.shape}"
            raise ContractError(msg)
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return the underlying array (no copy)."""
        return self.data

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        """Add `grad` to the gradient slot."""
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            msg = f"Gradient of shape {grad.shape} does not match tensor of shape {self.shape}"
            raise DimensionError(msg)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def __repr__(self) -> str:
        """Represent the tensor compactly."""
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other: Tensor | float) -> Tensor:
        """Elementwise sum, see `add`."""
        return add(self, other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        """Elementwise difference, see `sub`."""
        return sub(self, other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        """Elementwise product, see `mul`."""
        return mul(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        """Matrix product, see `matmul`."""
        return matmul(self, other)

    def __neg__(self) -> Tensor:
        """Negation."""
        return scale(self, -1.0)


@dataclass
class _Node:
    """One recorded operation."""

    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardRule


class GradTape:
    """Ordered record of executed operations and their backward rules.

    Use as a context manager; operations executed inside the block are recorded when one of
    their inputs requires a gradient. A tape can be replayed by `backward` exactly once.
    """

    def __init__(self) -> None:
        """Initialize GradTape."""
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()
        self._token: contextvars.Token | None = None
        self.consumed = False

    def __enter__(self) -> GradTape:
        """Activate the tape for the current execution context."""
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        """Deactivate the tape."""
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        """Number of recorded operations."""
        return len(self.nodes)

    def __contains__(self, tensor: object) -> bool:
        """Whether `tensor` is the output of a recorded operation."""
        return id(tensor) in self._outputs

    def record(self, node: _Node) -> None:
        """Append an executed operation."""
        if self.consumed:
            msg = "Cannot record on a tape that was already replayed"
            raise ContractError(msg)
        self.nodes.append(node)
        self._outputs.add(id(node.output))


def _check_finite(array: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(array)):
        msg = f"{op} produced non-finite values (NaN or Inf)"
        raise NumericError(msg)


def _as_tensor(value: Tensor | float, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full((), value, dtype=like.dtype))


def _result(data: np.ndarray, inputs: Sequence[Tensor], rule: BackwardRule, op: str) -> Tensor:
    """Wrap an op result and record it on the active tape if needed."""
    _check_finite(data, op)
    tape = _ACTIVE_TAPE.get()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track and tape is not None:
        tape.record(_Node(op=op, output=out, inputs=tuple(inputs), backward=rule))
    return out


def _normalize_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        msg = f"{op}: axis {axis} out of range for tensor of rank {ndim}"
        raise AxisError(msg)
    return axis % ndim


def _suffix_shapes(a: Tensor, b: Tensor, op: str) -> None:
    """Validate exact or trailing-suffix broadcast between two operands."""
    if a.shape == b.shape or b.ndim == 0 or a.ndim == 0:
        return
    small, large = (b, a) if b.ndim <= a.ndim else (a, b)
    if large.shape[large.ndim - small.ndim :] != small.shape:
        msg = f"{op}: shapes {a.shape} and {b.shape} are not broadcast compatible"
        raise DimensionError(msg)


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back to the operand's shape."""
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    if grad.shape != shape:
        grad = grad.sum(axis=tuple(i for i, n in enumerate(shape) if n == 1), keepdims=True)
    return grad.reshape(shape)


# -----------------------------------------------------------------
# Elementwise arithmetic
# -----------------------------------------------------------------


def add(a: Tensor, b: Tensor | float) -> Tensor:
    """Elementwise sum with trailing-suffix broadcast."""
    b = _as_tensor(b, a)
    _suffix_shapes(a, b, "add")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(a.data + b.data, (a, b), rule, "add")


def sub(a: Tensor, b: Tensor | float) -> Tensor:
    """Elementwise difference with trailing-suffix broadcast."""
    b = _as_tensor(b, a)
    _suffix_shapes(a, b, "sub")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _result(a.data - b.data, (a, b), rule, "sub")


def mul(a: Tensor, b: Tensor | float) -> Tensor:
    """Elementwise product with trailing-suffix broadcast."""
    b = _as_tensor(b, a)
    _suffix_shapes(a, b, "mul")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), rule, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""
    factor_cast = x.dtype.type(factor)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * factor_cast,)

    return _result(x.data * factor_cast, (x,), rule, "scale")


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    positive = x.data > 0

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * positive,)

    return _result(np.where(positive, x.data, x.dtype.type(0)), (x,), rule, "relu")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. Identity when `rng` is None (evaluation) or `rate` is 0."""
    if rng is None or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        msg = f"dropout rate must be in [0, 1), got {rate}"
        raise ContractError(msg)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * keep,)

    return _result(x.data * keep, (x,), rule, "dropout")


# -----------------------------------------------------------------
# Linear algebra and shape manipulation
# -----------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product.

    Supports `(m, k) @ (k, n)`, a batched left operand `(..., m, k)` with a shared right matrix
    `(k, n)`, and batched products where both operands carry identical leading extents.

    Args:
        a (Tensor): Left operand, rank >= 2
        b (Tensor): Right operand, rank 2 or same rank as `a`

    Returns:
        Tensor: The product

    Raises:
        DimensionError: If the inner extents or the batch extents differ
    """
    shared_right = b.ndim == 2  # noqa: PLR2004
    compatible = (
        a.ndim >= 2  # noqa: PLR2004
        and b.ndim >= 2  # noqa: PLR2004
        and a.shape[-1] == b.shape[-2]
        and (shared_right or a.shape[:-2] == b.shape[:-2])
    )
    if not compatible:
        msg = f"matmul: shapes {a.shape} and {b.shape} are not compatible"
        raise DimensionError(msg)

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        if shared_right:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.swapaxes(a.data, -1, -2) @ g
        return grad_a, grad_b

    return _result(a.data @ b.data, (a, b), rule, "matmul")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reshape without changing the row-major data order."""
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        msg = f"reshape: cannot reshape {x.shape} into {shape}"
        raise DimensionError(msg) from e

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return _result(out, (x,), rule, "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    """Permute axes."""
    if sorted(axes) != list(range(x.ndim)):
        msg = f"transpose: {tuple(axes)} is not a permutation of the axes of {x.shape}"
        raise AxisError(msg)
    inverse = np.argsort(axes)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.transpose(inverse),)

    return _result(x.data.transpose(axes), (x,), rule, "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along `axis`, preserving order."""
    if not tensors:
        msg = "concat: need at least one tensor"
        raise DimensionError(msg)
    first = tensors[0]
    axis = _normalize_axis(axis, first.ndim, "concat")
    for t in tensors[1:]:
        other = t.shape[:axis] + t.shape[axis + 1 :]
        if t.ndim != first.ndim or other != first.shape[:axis] + first.shape[axis + 1 :]:
            shapes = ", ".join(str(s.shape) for s in tensors)
            msg = f"concat: shapes {shapes} differ outside axis {axis}"
            raise DimensionError(msg)
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, boundaries, axis=axis)

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), rule, "concat"
    )


def take_slice(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Select the half-open range [start, stop) along `axis`."""
    axis = _normalize_axis(axis, x.ndim, "take_slice")
    if not 0 <= start < stop <= x.shape[axis]:
        msg = f"take_slice: range [{start}, {stop}) invalid for extent {x.shape[axis]}"
        raise DimensionError(msg)
    index = tuple(slice(start, stop) if i == axis else slice(None) for i in range(x.ndim))

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _result(x.data[index], (x,), rule, "take_slice")


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Split along `axis` into consecutive parts of the given extents (inverse of `concat`)."""
    axis = _normalize_axis(axis, x.ndim, "split")
    if int(np.sum(sizes)) != x.shape[axis]:
        msg = f"split: sizes {tuple(sizes)} do not add up to extent {x.shape[axis]}"
        raise DimensionError(msg)
    parts, start = [], 0
    for size in sizes:
        parts.append(take_slice(x, start, start + size, axis))
        start += size
    return parts


def gather_rows(x: Tensor, positions: np.ndarray) -> Tensor:
    """Select one position per batch element: `(b, s, d)` and `(b,)` indices give `(b, d)`."""
    positions = np.asarray(positions, dtype=np.int64)
    if x.ndim != 3 or positions.shape != (x.shape[0],):  # noqa: PLR2004
        msg = f"gather_rows: cannot gather positions {positions.shape} from {x.shape}"
        raise DimensionError(msg)
    if positions.size and (positions.min() < 0 or positions.max() >= x.shape[1]):
        msg = f"gather_rows: positions out of range for sequence length {x.shape[1]}"
        raise ContractError(msg)
    batch = np.arange(x.shape[0])

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[batch, positions] = g
        return (full,)

    return _result(x.data[batch, positions], (x,), rule, "gather_rows")


def pick(x: Tensor, indices: np.ndarray) -> Tensor:
    """Select one entry per row: `(b, c)` and `(b,)` indices give `(b,)`."""
    indices = np.asarray(indices, dtype=np.int64)
    if x.ndim != 2 or indices.shape != (x.shape[0],):  # noqa: PLR2004
        msg = f"pick: cannot pick indices {indices.shape} from {x.shape}"
        raise DimensionError(msg)
    rows = np.arange(x.shape[0])

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[rows, indices] = g
        return (full,)

    return _result(x.data[rows, indices], (x,), rule, "pick")


# -----------------------------------------------------------------
# Reductions and normalizations
# -----------------------------------------------------------------


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    """Sum of all entries, or along one axis."""
    if axis is not None:
        axis = _normalize_axis(axis, x.ndim, "sum")

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        expanded = g if axis is None else np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, x.shape).copy(),)

    return _result(np.asarray(x.data.sum(axis=axis)), (x,), rule, "sum")


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    """Mean of all entries, or along one axis."""
    count = x.size if axis is None else x.shape[_normalize_axis(axis, x.ndim, "mean")]
    return scale(sum(x, axis), 1.0 / count)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equally shaped tensors."""
    if a.shape != b.shape:
        msg = f"dot: shapes {a.shape} and {b.shape} differ"
        raise DimensionError(msg)
    return sum(mul(a, b))


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """
    Softmax along `axis`, computed with max-subtraction.

    Args:
        x (Tensor): Scores
        axis (int): Axis to normalize over
        mask (np.ndarray | None): Optional boolean validity flags broadcastable to `x`; invalid
            entries are treated as -inf and receive exactly zero probability

    Returns:
        Tensor: Probabilities; every slice along `axis` sums to 1

    Raises:
        AxisError: If `axis` is out of range
        ContractError: If a slice along `axis` has no valid entry
    """
    axis = _normalize_axis(axis, x.ndim, "softmax")
    scores = x.data
    if mask is not None:
        valid = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not np.all(valid.any(axis=axis)):
            msg = "softmax: a slice has no valid (unmasked) position"
            raise ContractError(msg)
        scores = np.where(valid, scores, -np.inf)
    shifted = scores - scores.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=axis, keepdims=True)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),)

    return _result(probs, (x,), rule, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Logarithm of the softmax, via the stabilized log-sum-exp form."""
    axis = _normalize_axis(axis, x.ndim, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), rule, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalize every slice along the last axis to zero mean and unit variance, then apply
    `gain` and `bias`.

    Zero-variance slices are handled by `eps` alone.

    Raises:
        DimensionError: If the last extent is 0 or does not match `gain`/`bias`
        ContractError: If `eps` is not positive
    """
    if x.ndim == 0 or x.shape[-1] == 0:
        msg = f"layer_norm: empty normalized dimension in shape {x.shape}"
        raise DimensionError(msg)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        msg = f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last extent {d}"
        raise DimensionError(msg)
    if eps <= 0:
        msg = f"layer_norm: eps must be positive, got {eps}"
        raise ContractError(msg)
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = (centered * inv_std).astype(x.dtype, copy=False)

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_normed = g * gain.data
        grad_x = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        return grad_x, _reduce_to(g * normed, gain.shape), _reduce_to(g, bias.shape)

    return _result(normed * gain.data + bias.data, (x, gain, bias), rule, "layer_norm")


# -----------------------------------------------------------------
# Reverse pass
# -----------------------------------------------------------------


def backward(loss: Tensor, tape: GradTape) -> None:
    """
    Populate `grad` of every tensor that requires a gradient and is reachable from `loss`.

    Gradients are added to existing `grad` values, so a tensor used several times (or in
    several backward passes) receives the sum of the contributions.

    Args:
        loss (Tensor): Scalar result recorded on `tape`
        tape (GradTape): The tape that recorded the forward computation

    Raises:
        ContractError: If `loss` is not a scalar, not on the tape, or the tape was replayed
    """
    if loss.size != 1:
        msg = f"backward: loss must be a scalar, got shape {loss.shape}"
        raise ContractError(msg)
    if loss not in tape:
        msg = "backward: loss was not recorded on the given tape"
        raise ContractError(msg)
    if tape.consumed:
        msg = "backward: tape was already replayed"
        raise ContractError(msg)
    tape.consumed = True
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(tape.nodes):
        grad = node.output.grad
        if grad is None:
            continue
        for tensor, input_grad in zip(node.inputs, node.backward(grad), strict=True):
            if input_grad is None or not tensor.requires_grad:
                continue
            _check_finite(input_grad, f"{node.op} backward")
            tensor.accumulate_grad(input_grad)
