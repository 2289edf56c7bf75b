"""Full-reference image quality metrics on the 0-255 intensity scale.

Inputs are storage-range arrays in [0, 1]; every metric rescales to
0-255 and works in float64. SSIM and UQI slide a uniform 8x8 window
with stride 1 and average the per-window scores; window moments are
biased (divide by n), with variances clamped at zero.
"""

import numpy as np

from . import backend
from .errors import ValidationError

DYNAMIC_RANGE = 255.0
SSIM_C1 = (0.01 * DYNAMIC_RANGE) ** 2
SSIM_C2 = (0.03 * DYNAMIC_RANGE) ** 2
DEFAULT_WINDOW = 8
_DEGENERATE_DEN = 1e-12


def _pair(a, b, window=None):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValidationError("metrics expect 2D grayscale arrays")
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if window is not None and (a.shape[0] < window or a.shape[1] < window):
        raise ValidationError(
            f"image {a.shape} smaller than the {window}x{window} metric window"
        )
    return a * DYNAMIC_RANGE, b * DYNAMIC_RANGE


def mse(a, b):
    A, B = _pair(a, b)
    d = A - B
    return float(np.mean(d * d))


def psnr(a, b):
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(DYNAMIC_RANGE * DYNAMIC_RANGE / m))


def _window_moments(a, b, window):
    A, B = _pair(a, b, window)
    sa, sb, saa, sbb, sab, sdd = backend.active().window_sums(A, B, window)
    n = float(window * window)
    mx, my = sa / n, sb / n
    vx = np.maximum(saa / n - mx * mx, 0.0)
    vy = np.maximum(sbb / n - my * my, 0.0)
    cov = sab / n - mx * my
    return mx, my, vx, vy, cov, sdd


def ssim(a, b, window=DEFAULT_WINDOW):
    mx, my, vx, vy, cov, _ = _window_moments(a, b, window)
    num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


def uqi(a, b, window=DEFAULT_WINDOW):
    """SSIM with both stabilizers at zero; degenerate windows score by equality."""
    mx, my, vx, vy, cov, sdd = _window_moments(a, b, window)
    num = 4.0 * cov * mx * my
    den = (vx + vy) * (mx * mx + my * my)
    degenerate = np.abs(den) < _DEGENERATE_DEN
    safe_den = np.where(degenerate, 1.0, den)
    q = num / safe_den
    q = np.where(degenerate, np.where(sdd == 0.0, 1.0, 0.0), q)
    return float(np.mean(q))


def all_metrics(a, b, window=DEFAULT_WINDOW):
    """The four scores as a dict keyed ssim / psnr_db / mse / uqi."""
    return {
        "ssim": ssim(a, b, window),
        "psnr_db": psnr(a, b),
        "mse": mse(a, b),
        "uqi": uqi(a, b, window),
    }


METRIC_NAMES = ("ssim", "psnr_db", "mse", "uqi")
HIGHER_IS_BETTER = {"ssim": True, "psnr_db": True, "mse": False, "uqi": True}
