"""Multi-coil Fourier sampling operators and the bilinear data-consistency term.

Two encodings are supported:

* ``radial``: exact non-uniform DFT on golden-angle spokes,
  ``b[m] = sum_p x(p) exp(-i k_m . p)`` with the pixel grid centred so that
  the DC sample carries no phase.  The sum is evaluated directly (no
  gridding); the two spatial axes are factored so the cost is
  ``O(M * H * W)`` with ``O(M * (H + W))`` memory.
* ``cartesian``: centred orthonormal 2-D DFT followed by a binary mask.

For training, the data term of a factor pair is evaluated in the factor
domain through :class:`FactorGram`.  The per-frame normal operator
``A_i^H A_i`` of the radial encoding is a Toeplitz convolution and is
embedded exactly in a circulant of twice the image size, so one FFT per
(coil, factor column) replaces one FFT per (coil, frame).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "CoilMaps",
    "TrajectorySchedule",
    "KSpaceDataset",
    "FactorGram",
    "pixel_coords",
    "spoke_points",
    "nudft_forward",
    "nudft_adjoint",
    "masked_fft_forward",
    "masked_fft_adjoint",
    "basis_measure",
    "frame_measure",
    "dc_gradient",
]


@dataclass
class CoilMaps:
    """Complex coil sensitivities, ``maps[c]`` is an ``H x W`` image."""

    maps: np.ndarray

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=np.complex128)
        if self.maps.ndim != 3:
            raise ValueError(f"coil maps must be (n_coils, H, W), got {self.maps.shape}")

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def sum_of_squares(self) -> np.ndarray:
        return np.sum(np.abs(self.maps) ** 2, axis=0)


@dataclass
class TrajectorySchedule:
    """Spoke angles per frame; ``navigator[i, s]`` flags navigator spokes."""

    angles: np.ndarray
    navigator: np.ndarray
    n_readout: int

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.navigator = np.asarray(self.navigator, dtype=bool)
        if self.angles.shape != self.navigator.shape or self.angles.ndim != 2:
            raise ValueError("angles and navigator flags must both be (n_frames, spokes_per_frame)")

    @property
    def n_frames(self) -> int:
        return self.angles.shape[0]

    @property
    def spokes_per_frame(self) -> int:
        return self.angles.shape[1]

    def frame_points(self, i: int) -> np.ndarray:
        return spoke_points(self.angles[i], self.n_readout)

    def navigator_index(self) -> np.ndarray:
        """Sample indices (within a frame) that belong to navigator spokes."""
        nav = self.navigator[0]
        if not np.all(self.navigator == nav) or not nav.any():
            raise ValueError("navigator spokes must sit at the same slots in every frame")
        idx = np.arange(self.spokes_per_frame * self.n_readout).reshape(self.spokes_per_frame, self.n_readout)
        return idx[nav].ravel()


def pixel_coords(n: int) -> np.ndarray:
    """Integer pixel positions with the centre pixel (index ``n // 2``) at 0."""
    return np.arange(n, dtype=np.float64) - n // 2


def spoke_points(angles, n_readout: int) -> np.ndarray:
    """k-space locations ``(kx, ky)`` of full spokes, readouts in ``[-pi, pi)``."""
    kr = -np.pi + 2 * np.pi * np.arange(n_readout) / n_readout
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    kx = np.cos(angles)[:, None] * kr[None, :]
    ky = np.sin(angles)[:, None] * kr[None, :]
    return np.stack([kx.ravel(), ky.ravel()], axis=1)


def _phase_factors(points, h, w, sign):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ex = np.exp(sign * 1j * np.outer(points[:, 0], pixel_coords(w)))
    ey = np.exp(sign * 1j * np.outer(points[:, 1], pixel_coords(h)))
    return ex, ey


def nudft_forward(image, points) -> np.ndarray:
    """Exact non-uniform DFT of ``image[..., H, W]`` at ``points`` (M x 2)."""
    image = np.asarray(image, dtype=np.complex128)
    h, w = image.shape[-2:]
    ex, ey = _phase_factors(points, h, w, -1)
    # t[..., m, y] = sum_x image[..., y, x] ex[m, x]
    t = np.matmul(image, ex.T).swapaxes(-1, -2)
    return np.sum(t * ey, axis=-1)


def nudft_adjoint(samples, points, h: int, w: int) -> np.ndarray:
    """Conjugate transpose of :func:`nudft_forward`."""
    samples = np.asarray(samples, dtype=np.complex128)
    ex, ey = _phase_factors(points, h, w, +1)
    weighted = samples[..., :, None] * ey  # (..., M, H)
    return np.matmul(weighted.swapaxes(-1, -2), ex)


def _cfft2(x):
    return sfft.fftshift(sfft.fft2(sfft.ifftshift(x, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def _cifft2(y):
    return sfft.fftshift(sfft.ifft2(sfft.ifftshift(y, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def masked_fft_forward(image, mask) -> np.ndarray:
    """Centred orthonormal DFT sampled where ``mask`` is set (row-major order)."""
    image = np.asarray(image, dtype=np.complex128)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape[-2:]:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {image.shape[-2:]}")
    return _cfft2(image)[..., mask]


def masked_fft_adjoint(samples, mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape[-1] != mask.sum():
        raise ValueError(f"got {samples.shape[-1]} samples for a mask with {mask.sum()} entries")
    full = np.zeros(samples.shape[:-1] + mask.shape, dtype=np.complex128)
    full[..., mask] = samples
    return _cifft2(full)


@dataclass
class KSpaceDataset:
    """Per-frame multi-coil samples ``samples[frame, coil, sample]``.

    Exactly one of ``schedule`` (radial) or ``masks`` (cartesian) is set.
    """

    samples: np.ndarray
    coilmaps: CoilMaps
    noise_sigma: float
    schedule: TrajectorySchedule | None = None
    masks: np.ndarray | None = None
    nav_mask: np.ndarray | None = None
    _gram: "FactorGram | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if (self.schedule is None) == (self.masks is None):
            raise ValueError("dataset needs exactly one of a radial schedule or cartesian masks")
        if self.masks is not None:
            self.masks = np.asarray(self.masks, dtype=bool)
            counts = self.masks.reshape(self.masks.shape[0], -1).sum(axis=1)
            if np.any(counts != counts[0]):
                raise ValueError("cartesian masks must select the same number of samples in every frame")
            n_frames, n_samp = self.masks.shape[0], int(counts[0])
        else:
            n_frames = self.schedule.n_frames
            n_samp = self.schedule.spokes_per_frame * self.schedule.n_readout
        expected = (n_frames, self.coilmaps.n_coils, n_samp)
        if self.samples.shape != expected:
            raise ValueError(f"samples have shape {self.samples.shape}, schedule implies {expected}")

    @property
    def mode(self) -> str:
        return "radial" if self.schedule is not None else "cartesian"

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.coilmaps.shape

    def measure(self, image, i: int) -> np.ndarray:
        """Noiseless samples ``(n_coils, M)`` of a single image for frame ``i``."""
        coil_images = self.coilmaps.maps * np.asarray(image)[None]
        if self.schedule is not None:
            return nudft_forward(coil_images, self.schedule.frame_points(i))
        return masked_fft_forward(coil_images, self.masks[i])

    def adjoint(self, samples, i: int) -> np.ndarray:
        """Coil-combined adjoint ``sum_c conj(s_c) A_i^H b_c``."""
        if self.schedule is not None:
            h, w = self.shape
            coil_images = nudft_adjoint(samples, self.schedule.frame_points(i), h, w)
        else:
            coil_images = masked_fft_adjoint(samples, self.masks[i])
        return np.sum(np.conj(self.coilmaps.maps) * coil_images, axis=0)

    def navigator_index(self) -> np.ndarray:
        if self.schedule is not None:
            return self.schedule.navigator_index()
        if self.nav_mask is None:
            raise ValueError("cartesian dataset has no navigator lines")
        # positions of navigator locations inside the row-major sample vector
        idx = np.flatnonzero(self.nav_mask[self.masks[0]])
        for m in self.masks:
            if not np.all(m[self.nav_mask]):
                raise ValueError("navigator lines must be sampled in every frame")
        return idx

    def navigators(self) -> np.ndarray:
        """Navigator samples, ``(n_frames, n_coils, n_nav)``."""
        return self.samples[:, :, self.navigator_index()]

    @property
    def gram(self) -> "FactorGram":
        if self._gram is None:
            self._gram = FactorGram(self)
        return self._gram


def basis_measure(U, coilmaps: CoilMaps, points) -> np.ndarray:
    """Measure every column of ``U`` on one frame: ``(n_coils, M, r)``."""
    U = np.asarray(U, dtype=np.complex128)
    h, w = coilmaps.shape
    r = U.shape[1]
    basis = U.T.reshape(r, 1, h, w) * coilmaps.maps[None]
    return np.moveaxis(nudft_forward(basis, points), 0, -1)


def frame_measure(U, v, coilmaps: CoilMaps, points) -> np.ndarray:
    """Samples of frame ``U @ v`` computed from the measured factors ``A_i(U) v``."""
    v = np.asarray(v, dtype=np.float64)
    return basis_measure(U, coilmaps, points) @ v


class FactorGram:
    """Normal-equation terms of a dataset evaluated in the factor domain.

    For frame ``i`` the normal operator is written ``G_i = low(w_i * lift(.))``
    summed over coils, where ``lift`` is linear and diagonalises the
    encoding; ``<a, low(y)> = scale * <lift(a), y>``.
    """

    def __init__(self, dataset: KSpaceDataset, chunk: int = 128):
        self.dataset = dataset
        self.chunk = chunk
        h, w = dataset.shape
        self.h, self.w = h, w
        self.maps = dataset.coilmaps.maps
        if dataset.mode == "radial":
            self.fshape = (2 * h, 2 * w)
            self.scale = 1.0 / (4 * h * w)
            self.weights = np.stack([self._toeplitz_spectrum(dataset.schedule.frame_points(i))
                                     for i in range(dataset.n_frames)], axis=1)
        else:
            self.fshape = (h, w)
            self.scale = 1.0
            self.weights = dataset.masks.reshape(dataset.n_frames, -1).T.astype(np.float64)
        # (N_pix, n_frames) coil-combined adjoint of the data
        self.AHb = np.stack([dataset.adjoint(dataset.samples[i], i).ravel() for i in range(dataset.n_frames)], axis=1)
        self.b_norm2 = float(np.sum(np.abs(dataset.samples) ** 2))

    def _toeplitz_spectrum(self, points) -> np.ndarray:
        h, w = self.h, self.w
        dy = np.fft.fftfreq(2 * h, 1.0 / (2 * h))
        dx = np.fft.fftfreq(2 * w, 1.0 / (2 * w))
        py = np.exp(1j * np.outer(points[:, 1], dy))
        px = np.exp(1j * np.outer(points[:, 0], dx))
        kern = py.T @ px
        kern[h, :] = 0.0
        kern[:, w] = 0.0
        spec = sfft.fft2(kern)
        # the kernel is Hermitian-symmetric, so its spectrum is real
        return spec.real.ravel()

    def lift(self, images) -> np.ndarray:
        """``(..., H, W) -> (..., F)``."""
        if self.dataset.mode == "radial":
            out = sfft.fft2(images, s=self.fshape, axes=(-2, -1))
        else:
            out = _cfft2(images)
        return out.reshape(out.shape[:-2] + (-1,))

    def lower(self, spectra) -> np.ndarray:
        """``(..., F) -> (..., H, W)``."""
        spectra = spectra.reshape(spectra.shape[:-1] + self.fshape)
        if self.dataset.mode == "radial":
            return sfft.ifft2(spectra, axes=(-2, -1))[..., : self.h, : self.w]
        return _cifft2(spectra)

    def lipschitz_bound(self) -> float:
        """Cheap upper bound on ``max_i ||G_i||``."""
        return float(np.max(np.abs(self.weights)) * np.max(np.sum(np.abs(self.maps) ** 2, axis=0)))

    def lipschitz(self, n_probe: int = 12, iters: int = 40, seed: int = 0) -> float:
        """Power-iteration estimate of ``max_i ||G_i||`` (5% safety margin).

        Frames all carry the same number of samples, so a spread subset of
        frames is probed; the result is capped by :meth:`lipschitz_bound`.
        """
        if getattr(self, "_lip", None) is not None:
            return self._lip
        n_f = self.weights.shape[1]
        frames = np.unique(np.linspace(0, n_f - 1, min(n_probe, n_f)).astype(int))
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((len(frames), self.h, self.w)) + 0j
        lam = np.zeros(len(frames))
        saved = self.weights
        try:
            self.weights = saved[:, frames]
            for _ in range(iters):
                Y = self.apply_frames(X)
                norms = np.linalg.norm(Y.reshape(len(frames), -1), axis=1)
                lam = norms / np.linalg.norm(X.reshape(len(frames), -1), axis=1)
                X = Y / np.maximum(norms, 1e-300)[:, None, None]
        finally:
            self.weights = saved
        self._lip = float(min(1.05 * lam.max(), self.lipschitz_bound()))
        return self._lip

    def normal_terms(self, U, V):
        """Return ``T = sum_i G_i(U v_i) v_i^T`` and ``Q[i, j] = Re(u_j^H G_i U v_i)``."""
        U = np.asarray(U, dtype=np.complex128)
        V = np.asarray(V, dtype=np.float64)
        n_pix, r = U.shape
        n_f = V.shape[0]
        T_spec = np.zeros((self.weights.shape[0], r), dtype=np.complex128)
        Q = np.zeros((n_f, r))
        basis = U.T.reshape(r, self.h, self.w)
        T = np.zeros((n_pix, r), dtype=np.complex128)
        for c in range(self.maps.shape[0]):
            P = self.lift(basis * self.maps[c]).T  # (F, r)
            Pcat = np.concatenate([P.real, P.imag], axis=0)
            T_spec[:] = 0.0
            for s in range(0, n_f, self.chunk):
                sl = slice(s, min(s + self.chunk, n_f))
                Y = Pcat @ V[sl].T
                wts = self.weights[:, sl]
                Y[: wts.shape[0]] *= wts
                Y[wts.shape[0]:] *= wts
                Q[sl] += (Pcat.T @ Y).T
                Wc = Y @ V[sl]
                T_spec += Wc[: wts.shape[0]] + 1j * Wc[wts.shape[0]:]
            low = self.lower(T_spec.T).reshape(r, n_pix)
            T += (np.conj(self.maps[c]).ravel()[None, :] * low).T
        return T, Q * self.scale

    def apply_frames(self, X) -> np.ndarray:
        """Per-frame normal operator on explicit frames ``X[i] (H, W)``."""
        out = np.zeros_like(np.asarray(X, dtype=np.complex128))
        for c in range(self.maps.shape[0]):
            spec = self.lift(X * self.maps[c]) * self.weights.T
            out += np.conj(self.maps[c]) * self.lower(spec)
        return out


def dc_gradient(U, V, dataset: KSpaceDataset, method: str = "gram"):
    """Data term ``sum_i ||A_i(U v_i) - b_i||^2`` with its factor gradients.

    Returns ``(loss, gU, gV)``; ``gU`` is complex (``dL/dRe + i dL/dIm``) and
    ``gV`` is real.  ``method="direct"`` forms every residual explicitly and
    is meant for small problems and cross-checks.
    """
    U = np.asarray(U, dtype=np.complex128)
    V = np.asarray(V, dtype=np.float64)
    if U.shape[1] != V.shape[1] or V.shape[0] != dataset.n_frames:
        raise ValueError(f"factor shapes U{U.shape}, V{V.shape} inconsistent with {dataset.n_frames} frames")
    if method == "gram":
        g = dataset.gram
        T, Q = g.normal_terms(U, V)
        M = (U.conj().T @ g.AHb).real.T  # Re(u_j^H A_i^H b_i), (n_f, r)
        loss = float(np.sum(V * Q) - 2 * np.sum(V * M) + g.b_norm2)
        gU = 2 * (T - g.AHb @ V)
        gV = 2 * (Q - M)
        return max(loss, 0.0), gU, gV
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    h, w = dataset.shape
    loss = 0.0
    gU = np.zeros_like(U)
    gV = np.zeros_like(V)
    for i in range(dataset.n_frames):
        x = (U @ V[i]).reshape(h, w)
        res = dataset.measure(x, i) - dataset.samples[i]
        loss += float(np.sum(np.abs(res) ** 2))
        back = dataset.adjoint(res, i).ravel()
        gU += 2 * np.outer(back, V[i])
        gV[i] = 2 * (U.conj().T @ back).real
    return loss, gU, gV
