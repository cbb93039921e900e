"""RMSE / SSIM on display-scaled images and intensity windowing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import ProjImage
from .errors import DimensionMismatch, InvalidSpec, SpaceMismatch

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11 x 11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class DisplayWindow:
    lo: float = 0.0
    hi: float = 6.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise InvalidSpec(f"display window needs hi > lo, got [{self.lo}, {self.hi}]")

    @classmethod
    def parse(cls, text: str) -> "DisplayWindow":
        lo, hi = (float(x) for x in text.split(","))
        return cls(lo, hi)


def window_to_display(img, w: DisplayWindow = DisplayWindow()):
    """Linear map of [lo, hi] onto [0, 255] with clamping; stays float."""
    data = img.data if isinstance(img, ProjImage) else img
    out = np.clip((np.asarray(data, dtype=np.float64) - w.lo) / (w.hi - w.lo), 0.0, 1.0) * 255.0
    if isinstance(img, ProjImage):
        res = img.with_data(out)
        res.meta["window"] = [w.lo, w.hi]
        return res
    return out


def _pair(a, b):
    if isinstance(a, ProjImage) and isinstance(b, ProjImage) and a.space != b.space:
        raise SpaceMismatch(f"refusing to compare {a.space} with {b.space} images")
    x = np.asarray(a.data if isinstance(a, ProjImage) else a, dtype=np.float64)
    y = np.asarray(b.data if isinstance(b, ProjImage) else b, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    return x, y


def rmse(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def ssim_map(a, b, data_range: float = 255.0) -> np.ndarray:
    """Local SSIM with a Gaussian window (sigma 1.5, 11 taps), population statistics."""
    x, y = _pair(a, b)
    filt = dict(sigma=SSIM_SIGMA, truncate=SSIM_RADIUS / SSIM_SIGMA, mode="reflect")
    mx = gaussian_filter(x, **filt)
    my = gaussian_filter(y, **filt)
    sxx = gaussian_filter(x * x, **filt) - mx * mx
    syy = gaussian_filter(y * y, **filt) - my * my
    sxy = gaussian_filter(x * y, **filt) - mx * my
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b, data_range: float = 255.0) -> float:
    """Mean SSIM over the region where the window fits inside the image."""
    m = ssim_map(a, b, data_range)
    r = SSIM_RADIUS
    if min(m.shape) > 2 * r:
        m = m[r:-r, r:-r]
    return float(m.mean())


def report(a, b, w: DisplayWindow = DisplayWindow()) -> dict:
    """Both metrics on windowed copies of ``a`` and ``b``."""
    da = window_to_display(a, w)
    db = window_to_display(b, w)
    return {"rmse": rmse(da, db), "ssim": ssim(da, db), "window_lo": w.lo, "window_hi": w.hi}
