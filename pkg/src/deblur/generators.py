"""Convolutional generators for the spatial and temporal factors.

The spatial generator maps a ``2r x H x W`` seed (real/imaginary channel
pairs of an initial spatial factor) to ``2r`` channels read back as the
complex columns of ``U``.  The temporal generator maps the latent
trajectory ``Z`` (``d x n_frames``) to ``r`` channels along the frame axis,
read back as the rows of ``V``.  Both are four same-padded convolutions
with ReLU after the first three.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import difftensor as dt

__all__ = [
    "GeneratorNet",
    "LatentTrajectory",
    "spatial_net",
    "temporal_net",
    "identity_spatial_net",
    "seed_from_factors",
    "factors_from_channels",
    "spatial_forward",
    "temporal_forward",
    "l1_weight_norm",
    "soft_threshold",
]

N_LAYERS = 4


@dataclass
class GeneratorNet:
    """Ordered conv layers; ``kind`` is ``"spatial"`` (2-D) or ``"temporal"`` (1-D)."""

    kind: str
    weights: list
    biases: list

    def __post_init__(self):
        if self.kind not in ("spatial", "temporal"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if len(self.weights) != N_LAYERS or len(self.biases) != N_LAYERS:
            raise ValueError(f"a generator has exactly {N_LAYERS} conv layers")
        nd = 4 if self.kind == "spatial" else 3
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != nd:
                raise ValueError(f"layer {l}: {self.kind} weights must be {nd}-D, got {w.shape}")
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {l}: bias shape {b.shape} does not match {w.shape[0]} outputs")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: expects {w.shape[1]} channels, previous layer gives {self.weights[l - 1].shape[0]}")

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters in serialisation order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_params(self, params) -> "GeneratorNet":
        params = list(params)
        return GeneratorNet(self.kind, params[0::2], params[1::2])

    def copy(self) -> "GeneratorNet":
        return self.with_params([p.copy() for p in self.params])

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def build(self, x):
        """Record the forward graph on input ``x``.

        Returns ``(output_node, parameter_nodes)`` with parameter nodes in
        :attr:`params` order, ready for :func:`difftensor.backward`.
        """
        conv = dt.conv2d if self.kind == "spatial" else dt.conv1d
        nodes = [dt.tensor(p) for p in self.params]
        h = x if isinstance(x, dt.Tensor) else dt.tensor(x)
        for l in range(N_LAYERS):
            h = conv(h, nodes[2 * l], nodes[2 * l + 1])
            if l < N_LAYERS - 1:
                h = dt.relu(h)
        return h, nodes

    def __call__(self, x) -> np.ndarray:
        return self.build(x)[0].data


@dataclass
class LatentTrajectory:
    Z: np.ndarray

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.float64)
        if self.Z.ndim != 2:
            raise ValueError(f"Z must be (d, n_frames), got {self.Z.shape}")
        if not np.all(np.isfinite(self.Z)):
            raise ValueError("latent trajectory contains non-finite entries")

    @property
    def d(self) -> int:
        return self.Z.shape[0]

    @property
    def n_frames(self) -> int:
        return self.Z.shape[1]


def _uniform_layers(widths, k, ndim, rng):
    weights, biases = [], []
    for c_in, c_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(c_in * k ** ndim)
        weights.append(rng.uniform(-bound, bound, size=(c_out, c_in) + (k,) * ndim))
        biases.append(rng.uniform(-bound, bound, size=c_out))
    return weights, biases


def spatial_net(r: int, k: int = 3, seed: int = 0, hidden: int | None = None) -> GeneratorNet:
    """Randomly initialised spatial generator with ``2r`` channels throughout."""
    c = 2 * r
    hidden = c if hidden is None else hidden
    w, b = _uniform_layers([c, hidden, hidden, hidden, c], k, 2, np.random.default_rng(seed))
    return GeneratorNet("spatial", w, b)


def temporal_net(d: int, r: int, k: int = 3, seed: int = 0, hidden: int = 16) -> GeneratorNet:
    """Randomly initialised temporal generator ``d -> hidden x3 -> r``."""
    w, b = _uniform_layers([d, hidden, hidden, hidden, r], k, 1, np.random.default_rng(seed))
    return GeneratorNet("temporal", w, b)


def identity_spatial_net(channels: int, k: int = 3, offset: float = 0.0) -> GeneratorNet:
    """Network whose output equals its input whenever ``input + offset >= 0``.

    Every layer is a centred delta kernel; ``offset`` is added by the first
    bias and removed by the last, which keeps inputs bounded below by
    ``-offset`` away from the ReLU cut.
    """
    w = np.zeros((channels, channels, k, k))
    w[np.arange(channels), np.arange(channels), k // 2, k // 2] = 1.0
    zero = np.zeros(channels)
    return GeneratorNet("spatial", [w.copy() for _ in range(N_LAYERS)],
                        [zero + offset, zero.copy(), zero.copy(), zero - offset])


def seed_from_factors(U, shape) -> np.ndarray:
    """Complex ``U`` (N_pix x r) to channel pairs ``(2r, H, W)``."""
    U = np.asarray(U, dtype=np.complex128)
    h, w = shape
    r = U.shape[1]
    out = np.empty((2 * r, h, w))
    out[0::2] = U.real.T.reshape(r, h, w)
    out[1::2] = U.imag.T.reshape(r, h, w)
    return out


def factors_from_channels(x) -> np.ndarray:
    """Inverse of :func:`seed_from_factors`."""
    x = np.asarray(x)
    if x.shape[0] % 2:
        raise ValueError(f"expected an even number of channels, got {x.shape[0]}")
    r = x.shape[0] // 2
    return (x[0::2] + 1j * x[1::2]).reshape(r, -1).T


def spatial_forward(net: GeneratorNet, seed) -> np.ndarray:
    if net.kind != "spatial":
        raise ValueError("spatial_forward needs a spatial generator")
    seed = np.asarray(seed, dtype=np.float64)
    if seed.ndim != 3 or seed.shape[0] != net.widths[0]:
        raise ValueError(f"seed shape {seed.shape} does not fit a net with {net.widths[0]} input channels")
    return factors_from_channels(net(seed))


def temporal_forward(net: GeneratorNet, Z) -> np.ndarray:
    if net.kind != "temporal":
        raise ValueError("temporal_forward needs a temporal generator")
    Z = Z.Z if isinstance(Z, LatentTrajectory) else np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != net.widths[0]:
        raise ValueError(f"Z shape {Z.shape} does not fit a net with {net.widths[0]} input channels")
    return net(Z).T


def l1_weight_norm(net: GeneratorNet, include_bias: bool = True) -> float:
    total = sum(float(np.sum(np.abs(w))) for w in net.weights)
    if include_bias:
        total += sum(float(np.sum(np.abs(b))) for b in net.biases)
    return total


def soft_threshold(w, t: float | np.ndarray) -> np.ndarray:
    """Proximal map of ``t * ||.||_1``: ``sign(w) * max(|w| - t, 0)``."""
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)
