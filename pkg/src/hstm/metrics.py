"""Quality and rate metrics: PSNR, MS-SSIM, bpp, and BD-rate.

Frames are (3, h, w) arrays in [0, 1].  PSNR uses MAX = 1.0 in this
normalized domain, which is numerically identical to the 8-bit 255
convention.  MS-SSIM runs the standard five-scale formulation with the
reference weights, dropping scales (with a warning) when the image is too
small.  Metrics average over RGB channels directly.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["RdPoint", "RdCurve", "psnr", "ms_ssim", "bpp", "bd_rate",
           "read_curve_csv", "write_curve_csv"]

_MSSSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])


@dataclass
class RdPoint:
    bpp: float
    psnr: float
    msssim: float

    def __post_init__(self):
        if self.bpp <= 0:
            raise ValueError("bpp must be positive")


@dataclass
class RdCurve:
    """At least four rate-distortion points, strictly increasing in bpp."""

    points: list

    def __post_init__(self):
        if len(self.points) < 4:
            raise ValueError("an RD curve needs at least 4 points for cubic fitting")
        rates = [p.bpp for p in self.points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("RD points must be sorted with strictly increasing bpp")

    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points])

    def qualities(self, metric: str = "psnr") -> np.ndarray:
        return np.array([getattr(p, metric) for p in self.points])


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) over all channels; inf for identical frames."""
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def _filter2(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering along both spatial axes."""
    out = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), -1, img)
    out = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), -2, out)
    return out


def _ssim_components(a: np.ndarray, b: np.ndarray, kernel: np.ndarray):
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    mu_a = _filter2(a, kernel)
    mu_b = _filter2(b, kernel)
    va = _filter2(a * a, kernel) - mu_a ** 2
    vb = _filter2(b * b, kernel) - mu_b ** 2
    cov = _filter2(a * b, kernel) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * cov + c2) / (va + vb + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2] // 2 * 2, img.shape[-1] // 2 * 2
    img = img[..., :h, :w]
    return (img[..., 0::2, 0::2] + img[..., 0::2, 1::2]
            + img[..., 1::2, 0::2] + img[..., 1::2, 1::2]) / 4.0


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multi-scale structural similarity with the standard 5-scale weights.

    Images whose short side is under 160 pixels cannot support all five
    scales with the 11-tap window; the scale count is reduced and the
    weights renormalized, with a warning.
    """
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    kernel = _gaussian_kernel()
    short = min(a.shape[-2], a.shape[-1])
    levels = len(_MSSSIM_WEIGHTS)
    # each scale halves the image; the last one still needs >= 11 pixels
    while levels > 1 and short // (2 ** (levels - 1)) < len(kernel):
        levels -= 1
    if levels < len(_MSSSIM_WEIGHTS):
        warnings.warn(
            f"image too small for 5-scale MS-SSIM; using {levels} scales",
            stacklevel=2)
    weights = _MSSSIM_WEIGHTS[:levels] / _MSSSIM_WEIGHTS[:levels].sum()
    vals = []
    for level in range(levels):
        ssim_full, cs = _ssim_components(a, b, kernel)
        vals.append(ssim_full if level == levels - 1 else cs)
        if level < levels - 1:
            a = _downsample2(a)
            b = _downsample2(b)
    vals = np.clip(np.array(vals), 1e-12, None)
    return float(np.prod(vals ** weights))


def bpp(total_payload_bits: float, width: int, height: int, frame_count: int) -> float:
    """Bits per pixel per frame."""
    if frame_count <= 0:
        raise ValueError("frame_count must be positive")
    if width <= 0 or height <= 0:
        raise ValueError("frame dims must be positive")
    return total_payload_bits / (width * height * frame_count)


def bd_rate(test: RdCurve, anchor: RdCurve, metric: str = "psnr") -> float:
    """Average bitrate difference (percent) at equal quality.

    Fits cubic polynomials of log10(rate) against quality for both curves
    and integrates their difference over the overlapping quality interval;
    negative values mean the test curve needs fewer bits.
    """
    def fit(curve: RdCurve):
        q = curve.qualities(metric)
        r = np.log10(curve.rates())
        if len(np.unique(q)) < 4:
            raise ValueError("curve has duplicate quality values; cannot fit")
        return np.polyfit(q, r, 3), q.min(), q.max()

    p_t, lo_t, hi_t = fit(test)
    p_a, lo_a, hi_a = fit(anchor)
    lo, hi = max(lo_t, lo_a), min(hi_t, hi_a)
    if hi <= lo:
        raise ValueError("quality ranges of the two curves do not overlap")
    int_t = np.polyint(p_t)
    int_a = np.polyint(p_a)
    avg = (np.polyval(int_t, hi) - np.polyval(int_t, lo)
           - np.polyval(int_a, hi) + np.polyval(int_a, lo)) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)


def write_curve_csv(path, curve_points):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bpp", "psnr", "msssim"])
        for p in curve_points:
            writer.writerow([f"{p.bpp:.8f}", f"{p.psnr:.6f}", f"{p.msssim:.8f}"])


def read_curve_csv(path) -> RdCurve:
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(RdPoint(bpp=float(row["bpp"]), psnr=float(row["psnr"]),
                                  msssim=float(row["msssim"])))
    return RdCurve(points=points)
