"""Dense float64 arrays with a small reverse-mode autodiff tape.

Arrays are numpy ndarrays. A 2-D array is one set (rows are elements); any
leading axes are treated as a batch of independent sets, so every op below
works unchanged on ``(batch, n, k)`` inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


class ContractError(RuntimeError):
    """Raised when an autodiff precondition is violated."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node on the autodiff tape.

    Leaves are created directly; interior nodes come out of the op functions
    and remember their parents plus a closure that pushes the incoming
    gradient back to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
        # never mutate in place: the same array may be handed to several parents
        self.grad = g if self.grad is None else self.grad + g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(tensor(other)))

    def __rsub__(self, other):
        return add(tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p: float):
        return power(self, p)

    @property
    def T(self):
        return transpose(self)


def tensor(x, requires_grad: bool = False) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=requires_grad)


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data, _parents=parents)
    if out.requires_grad:
        out._backward = backward
    else:
        out._parents = ()
    return out


# ---------------------------------------------------------------------------
# ops


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return _node(out_data, (a, b), backward)


def transpose(a) -> Tensor:
    a = tensor(a)

    def backward(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _node(np.swapaxes(a.data, -1, -2), (a,), backward)


def _broadcast_op(op, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    try:
        return op(x, y)
    except ValueError:
        raise ValueError(f"cannot broadcast shapes {x.shape} and {y.shape}") from None


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def backward(g):
        a._accumulate(g)
        b._accumulate(g)

    return _node(_broadcast_op(np.add, a.data, b.data), (a, b), backward)


def neg(a) -> Tensor:
    a = tensor(a)

    def backward(g):
        a._accumulate(-g)

    return _node(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with row/column broadcasting."""
    a, b = tensor(a), tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _node(_broadcast_op(np.multiply, a.data, b.data), (a, b), backward)


def power(a, p: float) -> Tensor:
    a = tensor(a)

    def backward(g):
        a._accumulate(g * p * a.data ** (p - 1))

    return _node(a.data**p, (a,), backward)


def relu(a) -> Tensor:
    a = tensor(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (out > 0))

    return _node(out, (a,), backward)


def row_max(a) -> Tensor:
    """Columnwise maximum over the set axis, keeping it as a single row.

    The gradient goes to the first row attaining the maximum.
    """
    a = tensor(a)
    idx = np.argmax(a.data, axis=-2)[..., None, :]
    out_data = np.take_along_axis(a.data, idx, axis=-2)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx, g, axis=-2)
        a._accumulate(full)

    return _node(out_data, (a,), backward)


def row_mean(a) -> Tensor:
    """Mean over the set axis as a single row, i.e. ``(1/n) 1^T X``."""
    a = tensor(a)
    n = a.data.shape[-2]

    def backward(g):
        a._accumulate(np.broadcast_to(g / n, a.data.shape))

    return _node(a.data.mean(axis=-2, keepdims=True), (a,), backward)


def row_sum(a) -> Tensor:
    """Sum over the set axis as a single row, i.e. ``1^T X``."""
    a = tensor(a)

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _node(a.data.sum(axis=-2, keepdims=True), (a,), backward)


def total_sum(a) -> Tensor:
    a = tensor(a)

    def backward(g):
        a._accumulate(np.broadcast_to(g.reshape(()), a.data.shape))

    return _node(a.data.sum().reshape(1, 1), (a,), backward)


def mean(a) -> Tensor:
    a = tensor(a)
    size = a.data.size

    def backward(g):
        a._accumulate(np.broadcast_to(g.reshape(()) / size, a.data.shape))

    return _node(a.data.mean().reshape(1, 1), (a,), backward)


def concat(parts, axis: int = -1) -> Tensor:
    """Concatenate along the feature axis; set axes must already agree."""
    parts = [tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            p._accumulate(piece)

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def broadcast_rows(a, n: int) -> Tensor:
    """Repeat a single row ``n`` times: ``1 v^T``."""
    a = tensor(a)
    shape = a.data.shape[:-2] + (n, a.data.shape[-1])

    def backward(g):
        a._accumulate(g.sum(axis=-2, keepdims=True))

    return _node(np.broadcast_to(a.data, shape).copy(), (a,), backward)


def reshape(a, shape: tuple) -> Tensor:
    a = tensor(a)
    old = a.data.shape

    def backward(g):
        a._accumulate(g.reshape(old))

    return _node(a.data.reshape(shape), (a,), backward)


# ---------------------------------------------------------------------------
# backward pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise ContractError("backward already ran on this loss; rebuild the graph first")
    loss._consumed = True
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# finite-difference check


@dataclass(frozen=True)
class GradCheck:
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def grad_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheck:
    """Compare tape gradients of a scalar ``f(params)`` with central differences.

    Returns the worst relative error
    ``|auto - central| / (|auto| + |central| + 1e-12)`` over all entries.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    leaves = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in params.items()}
    loss = f(leaves)
    backward(loss)
    worst = 0.0
    for name, leaf in leaves.items():
        auto = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        base = leaf.data
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + step
            up = float(f(leaves).data.reshape(()))
            base[idx] = orig - step
            down = float(f(leaves).data.reshape(()))
            base[idx] = orig
            central = (up - down) / (2 * step)
            a = float(auto[idx])
            err = abs(a - central) / (abs(a) + abs(central) + 1e-12)
            worst = max(worst, err)
    return GradCheck(worst, tolerance)
