"""Synthetic free-breathing cine phantom and its simulated acquisition."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .mri_ops import CoilMaps, KSpaceDataset, TrajectorySchedule, masked_fft_forward, nudft_forward

__all__ = [
    "FRAME_DT",
    "GOLDEN_ANGLE",
    "ImageSeries",
    "PhantomConfig",
    "make_phantom",
    "make_coilmaps",
    "golden_angle_schedule",
    "cartesian_masks",
    "acquire",
]

FRAME_DT = 0.0468
# 180/phi degrees; the complementary (3 - sqrt 5)/2 form gives the mirrored ordering
GOLDEN_ANGLE = math.pi * (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ImageSeries:
    frames: np.ndarray
    frame_dt: float = FRAME_DT

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]

    def casorati(self) -> np.ndarray:
        """Frames as columns, ``(H*W, n_frames)``."""
        return self.frames.reshape(self.n_frames, -1).T


@dataclass
class PhantomConfig:
    """Geometry and motion of the phantom.

    The default periods are whole multiples of the frame interval (12 and 36
    frames), so the series is exactly periodic and the Casorati matrix has
    rank at most 36.
    """

    H: int = 64
    W: int = 64
    duration: float = 14.0
    frame_dt: float = FRAME_DT
    cardiac_period: float = 12 * FRAME_DT
    respiratory_period: float = 36 * FRAME_DT
    cardiac_amplitude: float = 0.15
    respiratory_amplitude: float = 3.0
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.frame_dt))

    def validate(self):
        if self.H < 16 or self.W < 16:
            raise ValueError(f"phantom needs at least 16x16 pixels, got {self.H}x{self.W}")
        if self.frame_dt <= 0 or self.duration < self.frame_dt:
            raise ValueError("duration must cover at least one frame and frame_dt must be positive")
        for name in ("cardiac_period", "respiratory_period"):
            if getattr(self, name) <= 2 * self.frame_dt:
                raise ValueError(f"{name}={getattr(self, name)} s is not resolvable at frame_dt={self.frame_dt} s")
        if self.cardiac_amplitude < 0 or self.respiratory_amplitude < 0:
            raise ValueError("motion amplitudes must be nonnegative")
        if self.cardiac_amplitude >= 0.5:
            raise ValueError("cardiac_amplitude must stay below 0.5 of the ventricle radius")

    def to_dict(self) -> dict:
        return asdict(self)


def _ellipse_coverage(y, x, cy, cx, ry, rx):
    """Anti-aliased coverage of an axis-aligned ellipse (1-pixel linear edge)."""
    dy = (y - cy) / ry
    dx = (x - cx) / rx
    rho = np.sqrt(dy * dy + dx * dx)
    grad = np.sqrt((dy / ry) ** 2 + (dx / rx) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(rho > 0, (rho - 1.0) * rho / np.maximum(grad, 1e-300), -min(ry, rx))
    return np.clip(0.5 - dist, 0.0, 1.0)


def _layers(cfg: PhantomConfig, cardiac: float):
    """(intensity, cy, cx, ry, rx) painted back to front; lengths in pixels."""
    h, w = cfg.H, cfg.W
    grow = 1.0 + cfg.cardiac_amplitude * cardiac
    heart_cy, heart_cx = 0.04 * h, 0.06 * w
    return [
        (0.30, 0.0, 0.0, 0.33 * h, 0.42 * w),                          # torso
        (0.06, -0.02 * h, -0.21 * w, 0.20 * h, 0.12 * w),              # lung
        (0.06, -0.02 * h, 0.25 * w, 0.18 * h, 0.09 * w),               # lung
        (0.55, 0.24 * h, 0.0, 0.05 * h, 0.05 * w),                     # spine
        (0.60, heart_cy, heart_cx, 0.17 * h * (1 + 0.4 * (grow - 1)), 0.15 * w * (1 + 0.4 * (grow - 1))),  # myocardium
        (1.00, heart_cy, heart_cx, 0.11 * h * grow, 0.095 * w * grow),  # ventricle blood pool
        (0.80, heart_cy - 0.02 * h, heart_cx - 0.13 * w, 0.05 * h, 0.04 * w),  # right ventricle
    ]


def _frame(cfg: PhantomConfig, cardiac: float, shift: float) -> np.ndarray:
    y = np.arange(cfg.H, dtype=np.float64)[:, None] - cfg.H // 2
    x = np.arange(cfg.W, dtype=np.float64)[None, :] - cfg.W // 2
    img = np.zeros((cfg.H, cfg.W))
    for value, cy, cx, ry, rx in _layers(cfg, cardiac):
        cov = _ellipse_coverage(y, x, cy + shift, cx, ry, rx)
        img = img * (1.0 - cov) + value * cov
    return img


def _check_geometry(cfg: PhantomConfig):
    ymax = cfg.H / 2 - 1
    xmax = cfg.W / 2 - 1
    for value, cy, cx, ry, rx in _layers(cfg, 1.0):
        top = abs(cy) + ry + cfg.respiratory_amplitude
        if top > ymax or abs(cx) + rx > xmax:
            raise ValueError("phantom geometry leaves the field of view; reduce respiratory_amplitude")


def make_phantom(cfg: PhantomConfig) -> ImageSeries:
    """Piecewise-smooth torso with a beating ventricle and breathing shift.

    The blood pool radii oscillate with ``cardiac_period`` and the whole
    field translates vertically with ``respiratory_period``.  The seed only
    sets the initial phases of the two motions.
    """
    cfg.validate()
    _check_geometry(cfg)
    rng = np.random.default_rng(cfg.seed)
    phase_c, phase_r = rng.uniform(0.0, 2.0 * np.pi, size=2)
    t = np.arange(cfg.n_frames) * cfg.frame_dt
    frames = np.empty((cfg.n_frames, cfg.H, cfg.W), dtype=np.complex128)
    for i, ti in enumerate(t):
        cardiac = math.sin(2.0 * math.pi * ti / cfg.cardiac_period + phase_c)
        shift = cfg.respiratory_amplitude * math.sin(2.0 * math.pi * ti / cfg.respiratory_period + phase_r)
        frames[i] = _frame(cfg, cardiac, shift)
    return ImageSeries(frames, cfg.frame_dt)


def make_coilmaps(n_coils: int, H: int, W: int, seed: int = 0, flat: bool = False) -> CoilMaps:
    """Smooth sensitivities from Gaussian bumps placed around the image border.

    Maps are normalised so that the root-sum-of-squares is one at every
    pixel; a single coil therefore has unit magnitude everywhere.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    if flat:
        return CoilMaps(np.ones((n_coils, H, W)) / math.sqrt(n_coils))
    rng = np.random.default_rng(seed)
    y = np.arange(H, dtype=np.float64)[:, None] - H // 2
    x = np.arange(W, dtype=np.float64)[None, :] - W // 2
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=(n_coils, 3))
    width = 0.45 * max(H, W)
    maps = np.empty((n_coils, H, W), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2.0 * np.pi * c / n_coils + 0.3 * offsets[c, 0] / np.pi
        cy, cx = 0.5 * H * math.sin(ang), 0.5 * W * math.cos(ang)
        mag = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * width ** 2))
        phase = offsets[c, 1] + 0.5 * np.pi * (math.cos(offsets[c, 2]) * x / W + math.sin(offsets[c, 2]) * y / H)
        maps[c] = mag * np.exp(1j * phase)
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilMaps(maps / rss)


def golden_angle_schedule(n_f: int, spokes_per_frame: int = 10, n_readout: int = 64) -> TrajectorySchedule:
    """Two navigator spokes (0 and pi/2) followed by golden-angle spokes per frame."""
    if spokes_per_frame < 3:
        raise ValueError("spokes_per_frame must leave room for two navigators and one golden spoke")
    n_golden = spokes_per_frame - 2
    j = np.arange(n_f * n_golden, dtype=np.float64).reshape(n_f, n_golden)
    golden = np.mod(j * GOLDEN_ANGLE, np.pi)
    nav = np.tile([0.0, np.pi / 2], (n_f, 1))
    angles = np.concatenate([nav, golden], axis=1)
    flags = np.zeros_like(angles, dtype=bool)
    flags[:, :2] = True
    return TrajectorySchedule(angles, flags, n_readout)


def cartesian_masks(n_f: int, H: int, W: int, lines_per_frame: int = 8):
    """Per-frame Cartesian masks and the fixed navigator pattern.

    The centre row and centre column act as navigators; ``lines_per_frame``
    further phase-encode rows per frame follow a golden-ratio ordering.
    """
    nav = np.zeros((H, W), dtype=bool)
    nav[H // 2, :] = True
    nav[:, W // 2] = True
    candidates = [r for r in range(H) if r != H // 2]
    if lines_per_frame > len(candidates):
        raise ValueError("more lines per frame than available rows")
    step = (math.sqrt(5.0) - 1.0) / 2.0
    masks = np.repeat(nav[None], n_f, axis=0)
    pos = 0.0
    for i in range(n_f):
        chosen: list[int] = []
        while len(chosen) < lines_per_frame:
            pos = (pos + step) % 1.0
            row = candidates[int(pos * len(candidates))]
            if row not in chosen:
                chosen.append(row)
        masks[i, chosen, :] = True
    return masks, nav


def acquire(series: ImageSeries, coilmaps: CoilMaps, schedule: TrajectorySchedule | None = None,
            noise_sigma: float = 0.0, seed: int = 0, masks=None, nav_mask=None) -> KSpaceDataset:
    """Simulate multi-coil samples with circular complex Gaussian noise.

    ``noise_sigma`` is the standard deviation of the complex noise
    (``E|n|^2 = noise_sigma**2``).
    """
    if series.shape != coilmaps.shape:
        raise ValueError(f"series shape {series.shape} and coil maps {coilmaps.shape} differ")
    if (schedule is None) == (masks is None):
        raise ValueError("pass exactly one of schedule (radial) or masks (cartesian)")
    n_f = series.n_frames
    if schedule is not None and schedule.n_frames != n_f:
        raise ValueError(f"schedule has {schedule.n_frames} frames, series has {n_f}")
    if masks is not None and len(masks) != n_f:
        raise ValueError(f"{len(masks)} masks for {n_f} frames")
    clean = []
    for i in range(n_f):
        coil_images = coilmaps.maps * series.frames[i][None]
        if schedule is not None:
            clean.append(nudft_forward(coil_images, schedule.frame_points(i)))
        else:
            clean.append(masked_fft_forward(coil_images, masks[i]))
    clean = np.stack(clean)
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)) * (noise_sigma / math.sqrt(2.0))
    return KSpaceDataset(clean + noise, coilmaps, float(noise_sigma), schedule=schedule, masks=masks, nav_mask=nav_mask)
