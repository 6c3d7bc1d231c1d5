"""Image-quality metrics computed on magnitude images.

Identical inputs give sentinel values: ``+inf`` for SER/PSNR, ``0`` (ratio)
or ``-inf`` (dB) for HFEN and exactly ``1.0`` for SSIM.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import correlate2d

__all__ = [
    "ser",
    "psnr",
    "hfen",
    "ssim",
    "log_kernel",
    "gaussian_window",
    "series_ser",
    "MetricReport",
    "frame_report",
]


def _mag(x) -> np.ndarray:
    x = np.asarray(x)
    return np.abs(x).astype(np.float64) if np.iscomplexobj(x) else x.astype(np.float64)


def _pair(rec, ref):
    rec, ref = _mag(rec), _mag(ref)
    if rec.shape != ref.shape:
        raise ValueError(f"shape mismatch: rec {rec.shape} vs ref {ref.shape}")
    return rec, ref


def ser(rec, ref) -> float:
    """Signal-to-error ratio in dB, ``20 log10(||ref|| / ||ref - rec||)``."""
    rec, ref = _pair(rec, ref)
    num = np.linalg.norm(ref)
    if num == 0:
        raise ValueError("reference has zero norm")
    err = np.linalg.norm(ref - rec)
    return float("inf") if err == 0 else float(20 * np.log10(num / err))


series_ser = ser


def psnr(rec, ref) -> float:
    """``20 log10(max(ref) / ||ref - rec||_2)``; the error is an l2 norm, not an RMS."""
    rec, ref = _pair(rec, ref)
    if np.linalg.norm(ref) == 0:
        raise ValueError("reference has zero norm")
    err = np.linalg.norm(ref - rec)
    return float("inf") if err == 0 else float(20 * np.log10(ref.max() / err))


def log_kernel(size: int = 15, sigma: float = 1.5) -> np.ndarray:
    """Laplacian-of-Gaussian kernel shifted to zero sum."""
    half = size // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    r2 = x * x + y * y
    g = np.exp(-r2 / (2 * sigma ** 2))
    g /= g.sum()
    k = g * (r2 - 2 * sigma ** 2) / sigma ** 4
    return k - k.mean()


def _log_filter(img, kernel):
    # kernel is symmetric, so correlation equals convolution
    return ndimage.correlate(img, kernel, mode="constant", cval=0.0)


def hfen(rec, ref, mode: str = "ratio", size: int = 15, sigma: float = 1.5) -> float:
    """High-frequency error norm via LoG filtering (zero-padded ``same`` output).

    ``mode="ratio"`` returns ``||LoG(ref) - LoG(rec)|| / ||LoG(ref)||``;
    ``mode="db"`` returns ``20 log10`` of that ratio.
    """
    rec, ref = _pair(rec, ref)
    if min(ref.shape) < size:
        raise ValueError(f"images must be at least {size}x{size}")
    k = log_kernel(size, sigma)
    lref = _log_filter(ref, k)
    den = np.linalg.norm(lref)
    if den == 0:
        raise ValueError("LoG of the reference vanishes")
    ratio = float(np.linalg.norm(lref - _log_filter(rec, k)) / den)
    if mode == "ratio":
        return ratio
    if mode == "db":
        return float("-inf") if ratio == 0 else float(20 * np.log10(ratio))
    raise ValueError(f"unknown HFEN mode {mode!r}")


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = size // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    g = np.exp(-(x * x + y * y) / (2 * sigma ** 2))
    return g / g.sum()


def ssim(rec, ref, data_range: float | None = None, size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Gaussian-weighted SSIM averaged over windows that lie inside the image."""
    rec, ref = _pair(rec, ref)
    if data_range is None:
        data_range = float(ref.max() - ref.min())
    if data_range <= 0:
        raise ValueError("dynamic range must be positive")
    if min(ref.shape) < size:
        raise ValueError(f"images must be at least {size}x{size}")
    w = gaussian_window(size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def filt(a):
        return correlate2d(a, w, mode="valid")

    mu_x, mu_y = filt(rec), filt(ref)
    sxx = filt(rec * rec) - mu_x * mu_x
    syy = filt(ref * ref) - mu_y * mu_y
    sxy = filt(rec * ref) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


_METRICS = {
    "ser": ser,
    "psnr": psnr,
    "hfen": hfen,
    "ssim": ssim,
}


@dataclass
class MetricReport:
    metric: str
    reference: str
    values: np.ndarray
    mode: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        # constant columns (e.g. all +inf sentinels) have zero spread
        if np.all(self.values == self.values[0]):
            return 0.0
        return float(np.std(self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame", self.metric])
        for i, v in enumerate(self.values):
            writer.writerow([i, repr(float(v))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"metric": self.metric, "reference": self.reference, "mean": self.mean, "std": self.std,
                "n_frames": int(len(self.values)), **self.mode}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, text: str, reference: str = "") -> "MetricReport":
        rows = list(csv.reader(io.StringIO(text)))
        metric = rows[0][1]
        return cls(metric, reference, np.array([float(r[1]) for r in rows[1:]]))


def frame_report(rec_series, ref_series, metric: str, reference: str = "truth", hfen_mode: str = "ratio") -> MetricReport:
    """Evaluate ``metric`` frame by frame.

    SSIM uses the maximum magnitude of the whole reference series as the
    dynamic range.
    """
    rec_series, ref_series = _pair(rec_series, ref_series)
    fn = _METRICS[metric]
    mode: dict = {}
    if metric == "ssim":
        rng = float(ref_series.max())
        values = [fn(a, b, data_range=rng) for a, b in zip(rec_series, ref_series)]
        mode["data_range"] = rng
    elif metric == "hfen":
        values = [fn(a, b, mode=hfen_mode) for a, b in zip(rec_series, ref_series)]
        mode["hfen_mode"] = hfen_mode
    else:
        values = [fn(a, b) for a, b in zip(rec_series, ref_series)]
    return MetricReport(metric, reference, np.array(values), mode)
