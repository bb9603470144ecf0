"""Reverse-mode differentiation over float64 numpy arrays.

One computation graph per training step: ops record their parents and a
vector-Jacobian closure on the node itself, `backward` walks the graph
once in reverse topological order. Dense payloads are numpy arrays; only
the operations below are differentiable, which is exactly the set the
encoders, the InfoNCE loss, and the linear probe need.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from tagcl.errors import NumericsError
from tagcl.sparse import SparseMatrixCSR


class Node:
    """One value in the computation graph, with a gradient slot."""

    __slots__ = ("value", "parents", "_vjp", "requires_grad", "grad", "name")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents: tuple[Node, ...] = tuple(parents)
        self._vjp = vjp
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag})"


class Parameter(Node):
    """Trainable leaf; `backward` reports gradients keyed by its name."""

    def __init__(self, value, name: str):
        super().__init__(value, requires_grad=True, name=name)


def lift(x) -> Node:
    """Wrap a raw array as a constant node (no-op on nodes)."""
    return x if isinstance(x, Node) else Node(x)


def lift_parameters(arrays: dict[str, np.ndarray]) -> dict[str, Parameter]:
    return {name: Parameter(arr, name) for name, arr in arrays.items()}


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Node:
    a, b = lift(a), lift(b)
    value = a.value + b.value

    def vjp(g):
        return (
            _unbroadcast(g, a.value.shape) if a.requires_grad else None,
            _unbroadcast(g, b.value.shape) if b.requires_grad else None,
        )

    return Node(value, (a, b), vjp)


def subtract(a, b) -> Node:
    a, b = lift(a), lift(b)
    value = a.value - b.value

    def vjp(g):
        return (
            _unbroadcast(g, a.value.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.value.shape) if b.requires_grad else None,
        )

    return Node(value, (a, b), vjp)


def multiply(a, b) -> Node:
    a, b = lift(a), lift(b)
    value = a.value * b.value

    def vjp(g):
        return (
            _unbroadcast(g * b.value, a.value.shape) if a.requires_grad else None,
            _unbroadcast(g * a.value, b.value.shape) if b.requires_grad else None,
        )

    return Node(value, (a, b), vjp)


def scale(a, c: float) -> Node:
    a = lift(a)
    c = float(c)

    def vjp(g):
        return (c * g if a.requires_grad else None,)

    return Node(c * a.value, (a,), vjp)


def neg(a) -> Node:
    return scale(a, -1.0)


def matmul(a, b) -> Node:
    a, b = lift(a), lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}")
    value = a.value @ b.value

    def vjp(g):
        return (
            g @ b.value.T if a.requires_grad else None,
            a.value.T @ g if b.requires_grad else None,
        )

    return Node(value, (a, b), vjp)


def sparse_dense_matmul(s: SparseMatrixCSR, b) -> Node:
    """s @ b for a constant sparse matrix and a dense (possibly trainable) one."""
    b = lift(b)
    value = s.matmul_dense(b.value)

    def vjp(g):
        return (s.transpose_matmul_dense(g) if b.requires_grad else None,)

    return Node(value, (b,), vjp)


def relu(a) -> Node:
    a = lift(a)
    value = np.maximum(a.value, 0.0)

    def vjp(g):
        return (g * (a.value > 0.0) if a.requires_grad else None,)

    return Node(value, (a,), vjp)


def add_bias(x, bias) -> Node:
    """Row-broadcast bias add: (n, d) + (d,)."""
    x, bias = lift(x), lift(bias)
    if x.value.ndim != 2 or bias.value.shape != (x.value.shape[1],):
        raise ValueError(
            f"add_bias shape mismatch: {x.value.shape} + {bias.value.shape}"
        )
    return add(x, bias)


def transpose(a) -> Node:
    a = lift(a)
    if a.value.ndim != 2:
        raise ValueError("transpose expects a 2-D array")

    def vjp(g):
        return (g.T if a.requires_grad else None,)

    return Node(a.value.T, (a,), vjp)


def reshape(a, shape) -> Node:
    a = lift(a)
    value = a.value.reshape(shape)

    def vjp(g):
        return (g.reshape(a.value.shape) if a.requires_grad else None,)

    return Node(value, (a,), vjp)


def concat(parts) -> Node:
    """Concatenate 1-D nodes along axis 0."""
    parts = [lift(p) for p in parts]
    for p in parts:
        if p.value.ndim != 1:
            raise ValueError("concat expects 1-D nodes")
    value = np.concatenate([p.value for p in parts])
    sizes = [p.value.shape[0] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            g[bounds[i]:bounds[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return Node(value, tuple(parts), vjp)


def gather_rows(a, indices) -> Node:
    """Select rows of a 2-D node by a constant index array."""
    a = lift(a)
    idx = np.asarray(indices, dtype=np.int64)
    if a.value.ndim != 2:
        raise ValueError("gather_rows expects a 2-D array")
    value = a.value[idx]

    def vjp(g):
        if not a.requires_grad:
            return (None,)
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return Node(value, (a,), vjp)


def reduce_sum(a, axis: int | None = None) -> Node:
    a = lift(a)
    value = np.sum(a.value, axis=axis)

    def vjp(g):
        if not a.requires_grad:
            return (None,)
        if axis is None:
            return (np.broadcast_to(g, a.value.shape).copy(),)
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.value.shape).copy(),)

    return Node(value, (a,), vjp)


def reduce_mean(a) -> Node:
    a = lift(a)
    n = a.value.size
    if n == 0:
        raise ValueError("mean of an empty array")
    return scale(reduce_sum(a), 1.0 / n)


def logsumexp(a, axis: int | None = None) -> Node:
    """Numerically stable log-sum-exp along `axis` (or over everything)."""
    a = lift(a)
    x = a.value
    m = np.max(x, axis=axis, keepdims=True)
    shifted = np.exp(x - m)
    total = np.sum(shifted, axis=axis, keepdims=True)
    value_keep = m + np.log(total)
    value = np.squeeze(value_keep, axis=axis) if axis is not None else value_keep.reshape(())
    softmax = shifted / total

    def vjp(g):
        if not a.requires_grad:
            return (None,)
        if axis is None:
            return (g * softmax,)
        return (np.expand_dims(g, axis) * softmax,)

    return Node(value, (a,), vjp)


def l2_normalize_rows(a) -> Node:
    """Scale each row of a 2-D node to unit length; zero rows pass through.

    The gradient at a zero row is defined as zero, which removes the
    singularity for empty-text embeddings.
    """
    a = lift(a)
    x = a.value
    if x.ndim != 2:
        raise ValueError("l2_normalize_rows expects a 2-D array")
    norms = np.sqrt(np.sum(x * x, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    y = x / safe[:, None]

    def vjp(g):
        if not a.requires_grad:
            return (None,)
        dot = np.sum(g * y, axis=1)
        grad = (g - dot[:, None] * y) / safe[:, None]
        grad[norms == 0.0] = 0.0
        return (grad,)

    return Node(y, (a,), vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    done: set[int] = set()
    in_progress: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        nid = id(node)
        if processed:
            in_progress.discard(nid)
            done.add(nid)
            order.append(node)
            continue
        if nid in done:
            continue
        if nid in in_progress:
            raise NumericsError("cycle detected in computation graph")
        in_progress.add(nid)
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in done:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> dict[str, np.ndarray]:
    """Accumulate gradients of a scalar loss into every reachable node.

    Returns the gradient map over trainable leaves, keyed by parameter name.
    """
    if loss.value.shape != ():
        raise ValueError(f"backward expects a scalar loss, got shape {loss.value.shape}")
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.array(1.0)
    for node in reversed(order):
        if node.grad is None or node._vjp is None:
            continue
        for parent, pgrad in zip(node.parents, node._vjp(node.grad)):
            if pgrad is None or not parent.requires_grad:
                continue
            pgrad = np.asarray(pgrad, dtype=np.float64)
            parent.grad = pgrad if parent.grad is None else parent.grad + pgrad
    grads: dict[str, np.ndarray] = {}
    for node in order:
        if isinstance(node, Parameter):
            if node.name in grads:
                raise NumericsError(f"duplicate parameter name {node.name!r}")
            grads[node.name] = (
                node.grad if node.grad is not None else np.zeros_like(node.value)
            )
    return grads


def finite_diff_gradient(
    f: Callable[[dict[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function, coordinate by coordinate.

    Test oracle: independent of the tape. `f` is called with the params
    dict whose arrays are perturbed in place and restored.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads: dict[str, np.ndarray] = {}
    for name, theta in params.items():
        theta = np.asarray(theta, dtype=np.float64)
        params[name] = theta
        grad = np.zeros_like(theta)
        flat, gflat = theta.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(params)
            flat[i] = orig - eps
            f_minus = f(params)
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * eps)
        grads[name] = grad
    return grads
