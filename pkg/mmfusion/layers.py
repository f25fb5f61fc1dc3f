# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Parameter containers: the base `Module`, linear layers, layer norm and classifier heads."""

from collections.abc import Iterator, Mapping

import numpy as np

from .errors import FormatError
from .tensor import Tensor, layer_norm, matmul, relu


def uniform_init(
    rng: np.random.Generator, fan_in: int, shape: tuple[int, ...], dtype: np.dtype | str
) -> Tensor:
    """Parameter drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Module:
    """Base class for objects holding trainable parameters.

    Parameters are the `Tensor` attributes with `requires_grad`; nested modules may be stored
    directly, in lists or in dicts. Iteration follows attribute insertion order, so parameter
    names and order are stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Yield (dotted name, tensor) for every parameter."""
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self) -> dict[str, Tensor]:
        """Return all parameters keyed by dotted name."""
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        """Drop accumulated gradients of all parameters."""
        for _, param in self.named_parameters():
            param.zero_grad()

    def load_parameters(self, arrays: Mapping[str, np.ndarray]) -> None:
        """
        Overwrite parameter values in place.

        Args:
            arrays (Mapping[str, np.ndarray]): Values keyed by dotted name; must cover exactly
                the parameters of this module with matching shapes

        Raises:
            FormatError: If names or shapes do not match
        """
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        unexpected = sorted(set(arrays) - set(params))
        if missing or unexpected:
            msg = f"Parameter mismatch: missing {missing}, unexpected {unexpected}"
            raise FormatError(msg)
        for name, param in params.items():
            value = np.asarray(arrays[name])
            if value.shape != param.shape:
                msg = f"Parameter {name}: stored shape {value.shape}, expected {param.shape}"
                raise FormatError(msg)
            param.data = value.astype(param.dtype, copy=True)
            param.grad = None


def _walk(value: object, name: str) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{name}.")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from _walk(item, f"{name}.{index}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(item, f"{name}.{key}")


class Linear(Module):
    """Affine map `x @ weight + bias` over the last axis."""

    def __init__(
        self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype: np.dtype | str
    ) -> None:
        """Initialize Linear with uniform weights and zero bias."""
        self.weight = uniform_init(rng, in_dim, (in_dim, out_dim), dtype)
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        """Apply the map."""
        return matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    """Layer normalization over the last axis with learned gain and bias."""

    def __init__(self, dim: int, dtype: np.dtype | str, eps: float = 1e-5) -> None:
        """Initialize LayerNorm with unit gain and zero bias."""
        self.gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        """Normalize."""
        return layer_norm(x, self.gain, self.bias, self.eps)


class ClassifierHead(Module):
    """Maps a representation to class logits.

    With `hidden_dim == 0` this is a single linear layer; otherwise linear, ReLU, linear.
    """

    def __init__(
        self,
        in_dim: int,
        hidden_dim: int,
        num_classes: int,
        rng: np.random.Generator,
        dtype: np.dtype | str,
    ) -> None:
        """Initialize ClassifierHead."""
        self.hidden = Linear(in_dim, hidden_dim, rng, dtype) if hidden_dim > 0 else None
        self.output = Linear(hidden_dim or in_dim, num_classes, rng, dtype)

    @property
    def in_dim(self) -> int:
        """Width of the accepted representation."""
        return self.first_layer.weight.shape[0]

    @property
    def first_layer(self) -> Linear:
        """The layer that consumes the representation."""
        return self.hidden or self.output

    def __call__(self, x: Tensor) -> Tensor:
        """Compute logits."""
        if self.hidden is not None:
            x = relu(self.hidden(x))
        return self.output(x)
