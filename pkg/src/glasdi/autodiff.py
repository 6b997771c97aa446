"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery to differentiate the joint autoencoder / latent-dynamics
loss exactly: tensor-valued nodes, a handful of primitives, and a topological
backward sweep. Values are float64 ndarrays except for loss-style scalars,
which are python floats.
"""

from __future__ import annotations

import numpy as np


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "parents", "vjp", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def leaf(value: np.ndarray) -> Var:
    """Differentiable leaf (a trainable parameter)."""
    return Var(value, requires_grad=True)


def const(value) -> Var:
    return Var(value)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _accumulate(node: Var, g):
    if not node.requires_grad:
        return
    node.grad = g if node.grad is None else node.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if shape == ():
        return float(np.sum(g))
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value + b.value, parents=(a, b))

    def vjp():
        _accumulate(a, _unbroadcast(np.asarray(out.grad), a.shape))
        _accumulate(b, _unbroadcast(np.asarray(out.grad), b.shape))

    out.vjp = vjp
    return out


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value - b.value, parents=(a, b))

    def vjp():
        _accumulate(a, _unbroadcast(np.asarray(out.grad), a.shape))
        _accumulate(b, _unbroadcast(-np.asarray(out.grad), b.shape))

    out.vjp = vjp
    return out


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value * b.value, parents=(a, b))

    def vjp():
        _accumulate(a, _unbroadcast(np.asarray(out.grad) * b.value, a.shape))
        _accumulate(b, _unbroadcast(np.asarray(out.grad) * a.value, b.shape))

    out.vjp = vjp
    return out


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value @ b.value, parents=(a, b))

    def vjp():
        _accumulate(a, out.grad @ b.value.T)
        _accumulate(b, a.value.T @ out.grad)

    out.vjp = vjp
    return out


def tanh(a: Var) -> Var:
    val = np.tanh(a.value)
    out = Var(val, parents=(a,))

    def vjp():
        _accumulate(a, out.grad * (1.0 - val * val))

    out.vjp = vjp
    return out


def sigmoid(a: Var) -> Var:
    val = 1.0 / (1.0 + np.exp(-a.value))
    out = Var(val, parents=(a,))

    def vjp():
        _accumulate(a, out.grad * val * (1.0 - val))

    out.vjp = vjp
    return out


def scale(a: Var, c: float) -> Var:
    out = Var(a.value * c, parents=(a,))

    def vjp():
        _accumulate(a, out.grad * c)

    out.vjp = vjp
    return out


def sum_squares(a: Var) -> Var:
    """Scalar sum of squared entries."""
    out = Var(float(np.sum(a.value * a.value)), parents=(a,))

    def vjp():
        _accumulate(a, (2.0 * out.grad) * a.value)

    out.vjp = vjp
    return out


def rows(a: Var, start: int, stop: int) -> Var:
    out = Var(a.value[start:stop], parents=(a,))

    def vjp():
        g = np.zeros_like(a.value)
        g[start:stop] = out.grad
        _accumulate(a, g)

    out.vjp = vjp
    return out


def concat_rows(parts: list[Var]) -> Var:
    out = Var(np.concatenate([p.value for p in parts], axis=0), parents=tuple(parts))

    def vjp():
        offset = 0
        for p in parts:
            n = p.value.shape[0]
            _accumulate(p, out.grad[offset : offset + n])
            offset += n

    out.vjp = vjp
    return out


def poly_features(z: Var, exponents: np.ndarray) -> Var:
    """Monomial features of each row of z; exponents is (n_features, n_vars)."""
    zb = z.value
    theta = np.stack(
        [np.prod(zb ** exponents[c][None, :], axis=1) for c in range(len(exponents))],
        axis=1,
    )
    out = Var(theta, parents=(z,))

    def vjp():
        g = np.zeros_like(zb)
        for c, expo in enumerate(exponents):
            gc = out.grad[:, c]
            for i in np.flatnonzero(expo):
                partial = float(expo[i]) * zb[:, i] ** (expo[i] - 1)
                for j in np.flatnonzero(expo):
                    if j != i:
                        partial = partial * zb[:, j] ** expo[j]
                g[:, i] += gc * partial
        _accumulate(z, g)

    out.vjp = vjp
    return out


def backward(root: Var) -> None:
    """Populate .grad on every reachable node that requires gradients."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    root.grad = 1.0
    for node in reversed(order):
        if node.vjp is not None:
            node.vjp()
