"""Multi-granularity quantization.

The effective step for every latent element is the product of a global
scalar (user/rate controlled), a per-channel vector (learned), and a
per-element spatial-channel tensor (predicted by the entropy model).
Quantization divides by the step, subtracts the predicted mean, and rounds
half away from zero; dequantization adds the mean back and multiplies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laplace import SYMBOL_MAX, SYMBOL_MIN
from .tensor import round_half_away

QS_SC_MIN = 0.5
QS_SC_MAX = 2.0

__all__ = [
    "QS_SC_MIN", "QS_SC_MAX", "QuantizationSteps", "QuantizedLatent",
    "compose_qs", "quantize", "dequantize", "interpolate_qs_global",
]


@dataclass
class QuantizationSteps:
    """The (global, per-channel, spatial-channel) step triple."""

    qs_global: float
    qs_ch: np.ndarray   # (c,) or (c, 1, 1)
    qs_sc: np.ndarray   # (c, h, w)

    def __post_init__(self):
        self.qs_ch = np.asarray(self.qs_ch, dtype=np.float64)
        self.qs_sc = np.asarray(self.qs_sc, dtype=np.float64)
        if self.qs_global <= 0:
            raise ValueError("qs_global must be strictly positive")
        if np.any(self.qs_ch <= 0):
            raise ValueError("qs_ch must be strictly positive")
        if np.any(self.qs_sc < QS_SC_MIN - 1e-12) or np.any(self.qs_sc > QS_SC_MAX + 1e-12):
            raise ValueError(f"qs_sc must lie in [{QS_SC_MIN}, {QS_SC_MAX}]")


@dataclass
class QuantizedLatent:
    """Integer symbols plus the matching dequantized reconstruction."""

    symbols: np.ndarray        # int64, same shape as the latent
    reconstruction: np.ndarray

    @property
    def shape(self):
        return self.symbols.shape


def compose_qs(steps: QuantizationSteps) -> np.ndarray:
    """Elementwise product of the three granularities (channel broadcast)."""
    qs_ch = steps.qs_ch
    if qs_ch.ndim == 1:
        qs_ch = qs_ch[:, None, None]
    return steps.qs_global * qs_ch * steps.qs_sc


def quantize(y: np.ndarray, composed_qs, mu) -> np.ndarray:
    """round(y / qs - mu), half away from zero, saturated to coder support."""
    composed_qs = np.asarray(composed_qs, dtype=np.float64)
    if np.any(composed_qs <= 0):
        raise ValueError("quantization step must be strictly positive")
    v = round_half_away(np.asarray(y, dtype=np.float64) / composed_qs - mu)
    return np.clip(v, SYMBOL_MIN, SYMBOL_MAX).astype(np.int64)


def dequantize(symbols: np.ndarray, composed_qs, mu) -> np.ndarray:
    """(symbols + mu) * qs."""
    composed_qs = np.asarray(composed_qs, dtype=np.float64)
    if np.any(composed_qs <= 0):
        raise ValueError("quantization step must be strictly positive")
    return (np.asarray(symbols, dtype=np.float64) + mu) * composed_qs


def interpolate_qs_global(learned, t: float) -> float:
    """Geometric interpolation between the learned extremes.

    t = 0 gives the smallest learned global step, t = 1 the largest; rate
    varies roughly exponentially in the step, so interpolation is done in
    log space.
    """
    learned = np.asarray(learned, dtype=np.float64)
    if np.any(learned <= 0):
        raise ValueError("learned qs_global values must be positive")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter {t} outside [0, 1]")
    lo, hi = float(learned.min()), float(learned.max())
    return float(np.exp((1.0 - t) * np.log(lo) + t * np.log(hi)))
