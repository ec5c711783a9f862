"""Dense float tensors with tape-based reverse-mode automatic differentiation.

The engine supports exactly the operators the enhancement network needs
(see :mod:`luxtune.engine.ops`); it is deliberately not a general autodiff
system. Tensors default to float32; tests that need tighter numerics build
float64 tensors and every op preserves the input dtype.

Tensors are value-semantic at the API boundary: no operation mutates its
inputs, and a tensor's data must be treated as frozen once it has been fed
into an op. Gradient recording is thread-local, so concurrent no-grad
inference calls never share state.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from ..errors import GradientError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that disables tape recording on the current thread."""

    def __enter__(self):
        self._prev = grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


def _as_array(data: ArrayLike, dtype) -> np.ndarray:
    if isinstance(data, np.ndarray) and dtype is None:
        if data.dtype in (np.float32, np.float64):
            return np.array(data, copy=True)
        return data.astype(np.float32)
    return np.array(data, dtype=dtype or np.float32)


class Tensor:
    """N-dimensional float array plus an optional gradient tape node.

    Attributes:
        data: the underlying numpy array (float32 unless built otherwise).
        grad: gradient buffer with the same shape, allocated by backward().
        requires_grad: whether this tensor participates in differentiation.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        name: str = "",
    ):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        """Copy of the value with no tape history."""
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
                + (f" for '{self.name}'" if self.name else "")
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Reverse-mode sweep from this tensor through the recorded tape.

        Without an explicit seed the tensor must be a scalar (the usual
        loss case). Gradients accumulate into ``.grad`` of every tensor on
        the tape that requires grad.
        """
        if seed is None:
            if self.data.size != 1:
                raise GradientError(
                    f"backward() without a seed needs a scalar, got shape {self.shape}"
                )
            seed = np.ones_like(self.data)
        if self._backward is None and not self.requires_grad:
            raise GradientError(
                "backward() called on a tensor with no recorded history; "
                "the forward pass ran in no-grad mode"
            )

        order = _topo_order(self)
        self.accumulate_grad(np.asarray(seed, dtype=self.data.dtype))
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        head = f"Tensor(shape={self.shape}, dtype={self.dtype.name}"
        if self.name:
            head += f", name={self.name!r}"
        if self.requires_grad:
            head += ", requires_grad=True"
        return head + ")"


def _topo_order(root: Tensor) -> list:
    """Reverse topological order of the tape reachable from ``root``."""
    order: list = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def record(
    out: Tensor,
    parents: Iterable[Tensor],
    backward: Callable[[np.ndarray], None],
) -> Tensor:
    """Attach a backward closure to ``out`` if recording is active.

    The closure receives the upstream gradient and must call
    ``accumulate_grad`` on the relevant parents. When grad mode is off, or
    no parent requires grad, nothing is saved (inference skips activation
    retention entirely).
    """
    parents = tuple(parents)
    if grad_enabled() and any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out
