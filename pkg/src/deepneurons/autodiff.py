"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Every operation appends a node to the tape shared by its operands, so the tape
order is a topological order of the graph. ``Tape.backward`` walks it once in
reverse and returns gradients for the requested leaves only.

This engine is the general (and slow) route: it is the reference the fused
kernels are checked against, and it backs the gradient checker.
"""
from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "tape", "parents", "grad_fns", "forward_fn", "name", "index")

    def __init__(self, data, tape, parents=(), grad_fns=(), forward_fn=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.parents = parents
        self.grad_fns = grad_fns
        self.forward_fn = forward_fn
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__


class Tape:
    def __init__(self):
        self.nodes: list[Tensor] = []

    def leaf(self, data, name=None) -> Tensor:
        return Tensor(np.array(data, dtype=np.float64), self, name=name)

    def constant(self, data) -> Tensor:
        return Tensor(np.array(data, dtype=np.float64), self)

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor, wrt) -> dict:
        """Gradients of scalar ``loss`` for each tensor in ``wrt``.

        ``wrt`` is a dict of name -> leaf (returns name -> array) or an
        iterable of tensors (returns a list in the same order).
        """
        if loss.tape is not self:
            raise ContractError("loss was not recorded on this tape")
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: list = [None] * len(self.nodes)
        grads[loss.index] = np.ones_like(loss.data)
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads[node.index]
            if g is None or not node.parents:
                continue
            for parent, fn in zip(node.parents, node.grad_fns):
                contrib = fn(g)
                if grads[parent.index] is None:
                    grads[parent.index] = contrib
                else:
                    grads[parent.index] = grads[parent.index] + contrib

        def pick(t):
            g = grads[t.index]
            return np.zeros_like(t.data) if g is None else np.asarray(g).reshape(t.shape)

        if isinstance(wrt, dict):
            return {k: pick(t) for k, t in wrt.items()}
        return [pick(t) for t in wrt]

    def replay(self) -> list[np.ndarray]:
        """Recompute every non-leaf node from its parents, in tape order."""
        values = []
        for node in self.nodes:
            if node.forward_fn is None:
                values.append(node.data)
            else:
                values.append(node.forward_fn(*(values[p.index] for p in node.parents)))
        return values


def _record(forward_fn, parents, grad_fns, *args):
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise ContractError("operands live on different tapes")
    out = forward_fn(*(p.data for p in parents))
    return Tensor(out, tape, tuple(parents), tuple(grad_fns), forward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data
    if A.ndim == 1:
        return _record(
            np.matmul,
            (a, b),
            (lambda g: B @ g, lambda g: np.outer(A, g)),
        )
    return _record(np.matmul, (a, b), (lambda g: g @ B.T, lambda g: A.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}")
    return _record(np.add, (a, b), (lambda g: g, lambda g: g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"cannot subtract shapes {a.shape} and {b.shape}")
    return _record(np.subtract, (a, b), (lambda g: g, lambda g: -g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(lambda x: c * x, (a,), (lambda g: c * g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(np.tanh, (a,), (lambda g: g * (1.0 - y * y),))


def take(a: Tensor, i: int) -> Tensor:
    """``a[i]`` along the leading axis."""
    if not 0 <= i < a.shape[0]:
        raise IndexError(f"index {i} out of range for leading axis {a.shape[0]}")

    def grad(g):
        out = np.zeros_like(a.data)
        out[i] = g
        return out

    return _record(lambda x: x[i].copy(), (a,), (grad,))


def slice(a: Tensor, start: int, length: int) -> Tensor:  # noqa: A001 - mirrors numpy naming
    if a.data.ndim != 1:
        raise DimensionError(f"slice expects a vector, got shape {a.shape}")
    if start < 0 or length < 0 or start + length > a.size:
        raise IndexError(f"slice [{start}, {start + length}) out of range for length {a.size}")
    n = a.size

    def grad(g):
        out = np.zeros(n)
        out[start:start + length] = g
        return out

    return _record(lambda x: x[start:start + length].copy(), (a,), (grad,))


def concat(parts) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat needs at least one part")
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError(f"concat expects vectors, got shape {p.shape}")
    bounds = np.cumsum([0] + [p.size for p in parts])
    grad_fns = [
        (lambda lo, hi: (lambda g: g[lo:hi]))(bounds[i], bounds[i + 1]) for i in range(len(parts))
    ]
    return _record(lambda *xs: np.concatenate(xs), tuple(parts), grad_fns)


def total(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(lambda x: np.sum(x).reshape(()), (a,), (lambda g: np.full(shape, float(g)),))


def sum_of_squares(a: Tensor) -> Tensor:
    x = a.data
    return _record(lambda v: np.sum(v * v).reshape(()), (a,), (lambda g: 2.0 * float(g) * x,))


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise DimensionError("mse_loss of empty tensors")
    return scale(sum_of_squares(sub(pred, target)), 1.0 / pred.size)
