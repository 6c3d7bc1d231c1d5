"""Small reverse-mode differentiation core.

Only the handful of operations used by the two factor generators are
supported: same-padded 2-D and 1-D convolutions, ReLU, per-channel bias and
fixed linear combinations.  Every node caches its forward value; calling
:func:`backward` on an output pushes adjoints through the recorded graph in
reverse topological order.

All arithmetic is float64.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "tensor",
    "conv2d",
    "conv1d",
    "relu",
    "add_bias",
    "linear_combine",
    "backward",
]

_OPS = ("input", "conv2d", "conv1d", "relu", "add-bias", "linear-combine")


class Tensor:
    """Graph node holding a float64 array, its parents and its adjoint."""

    __slots__ = ("data", "grad", "op", "parents", "_pullback")

    def __init__(
        self,
        data,
        op: str = "input",
        parents: Sequence["Tensor"] = (),
        pullback: Callable[[np.ndarray], Sequence[np.ndarray]] | None = None,
    ):
        if op not in _OPS:
            raise ValueError(f"unknown op kind {op!r}")
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.op = op
        self.parents = tuple(parents)
        self._pullback = pullback
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"


def tensor(data) -> Tensor:
    """Wrap an array as a leaf (input) node."""
    return Tensor(data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_conv_shapes(x, w, b, ndim: int, name: str):
    if x.data.ndim != ndim + 1:
        raise ValueError(f"{name}: input must have shape (C_in, {'H, W' if ndim == 2 else 'L'}), got {x.shape}")
    if w.data.ndim != ndim + 2:
        raise ValueError(f"{name}: weights must be {ndim + 2}-D (C_out, C_in, k...), got {w.shape}")
    c_out, c_in = w.shape[:2]
    ks = w.shape[2:]
    if c_in != x.shape[0]:
        raise ValueError(f"{name}: weights expect {c_in} input channels but input has {x.shape[0]}")
    if len(set(ks)) != 1 or ks[0] % 2 == 0:
        raise ValueError(f"{name}: kernel must be square with odd size, got {ks}")
    if b.shape != (c_out,):
        raise ValueError(f"{name}: bias must have shape ({c_out},), got {b.shape}")
    return c_out, c_in, ks[0]


def conv2d(x, w, b) -> Tensor:
    """Same-padded, stride-1 cross-correlation ``(C_in,H,W) -> (C_out,H,W)``."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    c_out, c_in, k = _check_conv_shapes(x, w, b, 2, "conv2d")
    _, h, wd = x.shape
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    # (C, H, W, k, k) -> (C*k*k, H*W)
    cols = sliding_window_view(xp, (k, k), axis=(1, 2)).transpose(0, 3, 4, 1, 2).reshape(c_in * k * k, h * wd)
    wmat = w.data.reshape(c_out, -1)
    out = (wmat @ cols + b.data[:, None]).reshape(c_out, h, wd)

    def pullback(g):
        g2 = g.reshape(c_out, -1)
        gw = (g2 @ cols.T).reshape(w.shape)
        gb = g2.sum(axis=1)
        gcols = (wmat.T @ g2).reshape(c_in, k, k, h, wd)
        gxp = np.zeros_like(xp)
        for dy in range(k):
            for dx in range(k):
                gxp[:, dy:dy + h, dx:dx + wd] += gcols[:, dy, dx]
        return gxp[:, p:p + h, p:p + wd], gw, gb

    return Tensor(out, "conv2d", (x, w, b), pullback)


def conv1d(x, w, b) -> Tensor:
    """Same-padded, stride-1 cross-correlation ``(C_in,L) -> (C_out,L)``."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    c_out, c_in, k = _check_conv_shapes(x, w, b, 1, "conv1d")
    n = x.shape[1]
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (p, p)))
    cols = sliding_window_view(xp, k, axis=1).transpose(0, 2, 1).reshape(c_in * k, n)
    wmat = w.data.reshape(c_out, -1)
    out = wmat @ cols + b.data[:, None]

    def pullback(g):
        gw = (g @ cols.T).reshape(w.shape)
        gb = g.sum(axis=1)
        gcols = (wmat.T @ g).reshape(c_in, k, n)
        gxp = np.zeros_like(xp)
        for d in range(k):
            gxp[:, d:d + n] += gcols[:, d]
        return gxp[:, p:p + n], gw, gb

    return Tensor(out, "conv1d", (x, w, b), pullback)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0  # derivative at exactly 0 is 0
    return Tensor(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def add_bias(x, b) -> Tensor:
    """Add a per-channel bias along the leading axis."""
    x, b = _as_tensor(x), _as_tensor(b)
    if b.shape != (x.shape[0],):
        raise ValueError(f"add_bias: bias shape {b.shape} does not match {x.shape[0]} channels")
    expand = (slice(None),) + (None,) * (x.data.ndim - 1)
    axes = tuple(range(1, x.data.ndim))
    return Tensor(x.data + b.data[expand], "add-bias", (x, b), lambda g: (g, g.sum(axis=axes)))


def linear_combine(xs: Sequence, coeffs: Sequence[float]) -> Tensor:
    """Return ``sum(c * x for c, x in zip(coeffs, xs))`` for same-shaped inputs."""
    xs = [_as_tensor(x) for x in xs]
    if len(xs) != len(coeffs) or not xs:
        raise ValueError("linear_combine: need one coefficient per input")
    shape = xs[0].shape
    for x in xs[1:]:
        if x.shape != shape:
            raise ValueError(f"linear_combine: shape mismatch {x.shape} vs {shape}")
    coeffs = [float(c) for c in coeffs]
    out = np.zeros(shape)
    for c, x in zip(coeffs, xs):
        out += c * x.data
    return Tensor(out, "linear-combine", xs, lambda g: tuple(c * g for c in coeffs))


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output: Tensor, seed=None) -> None:
    """Accumulate d<seed, output>/d(node) into ``node.grad`` for every ancestor.

    Gradients from previous calls are discarded.
    """
    seed = np.ones(output.shape) if seed is None else np.asarray(seed, dtype=np.float64)
    if seed.shape != output.shape:
        raise ValueError(f"backward: seed shape {seed.shape} does not match output shape {output.shape}")
    order = _topological_order(output)
    for node in order:
        node.grad = None
    output.grad = seed.copy()
    for node in reversed(order):
        if node._pullback is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node._pullback(node.grad)):
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64)
            else:
                parent.grad += g
    for node in order:
        if node.grad is None:
            node.grad = np.zeros(node.shape)
