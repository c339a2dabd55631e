"""Two-step coding schedule over the latent grid.

The latent tensor is split into two halves along the channel axis and into
checkerboard anchors/non-anchors along the spatial axes.  Step one codes
the even checkerboard of the first channel half together with the odd
checkerboard of the second half; step two codes the complement.  Each
coded group is serialized channel-major, then row, then column, so both
sides of the codec enumerate symbols in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CodingSchedule", "partition_masks", "serialize_group", "scatter_group"]


@dataclass
class CodingSchedule:
    """Boolean masks for the two coding steps (each (c, h, w))."""

    step1: np.ndarray
    step2: np.ndarray

    @property
    def shape(self):
        return self.step1.shape


def partition_masks(shape) -> CodingSchedule:
    """Build the dual-split masks for a (c, h, w) latent shape.

    The channel count must be even so the two halves are the same size.
    """
    c, h, w = shape
    if c % 2 != 0:
        raise ValueError(f"channel count {c} must be even for the dual split")
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    even = (i + j) % 2 == 0
    first_half = (np.arange(c) < c // 2)[:, None, None]
    step1 = np.where(first_half, even[None], ~even[None])
    return CodingSchedule(step1=step1, step2=~step1)


def serialize_group(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Extract masked elements in channel-major, row, column order."""
    if values.shape != mask.shape:
        raise ValueError(f"values {values.shape} and mask {mask.shape} differ")
    return values[mask]


def scatter_group(flat: np.ndarray, mask: np.ndarray, out: np.ndarray | None = None,
                  dtype=np.float64) -> np.ndarray:
    """Inverse of :func:`serialize_group`; unmasked entries stay zero."""
    n = int(mask.sum())
    if len(flat) != n:
        raise ValueError(f"{len(flat)} values for a mask selecting {n} elements")
    if out is None:
        out = np.zeros(mask.shape, dtype=dtype)
    out[mask] = flat
    return out
