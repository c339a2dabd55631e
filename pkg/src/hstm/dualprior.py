"""Two-step coding of a latent tensor under the dual spatial split.

Step one codes the even checkerboard of the first channel half plus the
odd checkerboard of the second half; its dequantized values, scattered to
their positions with zeros elsewhere, feed the estimator's second pass,
which codes the complement.  The decoder runs the identical estimator
calls in the identical order, so all parameters (and the spatial-channel
quantization step) are available before the symbols that need them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laplace import B_MIN, estimate_bits
from .priors import ParamEstimator, PriorBundle
from .quantizer import dequantize, quantize
from .rangecoder import Bitstream, decode_with_scales, encode_with_scales
from .schedule import partition_masks, scatter_group, serialize_group
from .tensor import Tensor

__all__ = ["TwoStepResult", "two_step_encode", "two_step_decode"]


@dataclass
class TwoStepResult:
    step1: Bitstream
    step2: Bitstream
    reconstruction: np.ndarray  # dequantized latent, dense
    estimated_bits: float


def _base_step(qs_global: float, qs_ch: np.ndarray) -> np.ndarray:
    return qs_global * qs_ch.reshape(-1, 1, 1)


def _symbol_scale(b: np.ndarray, composed: np.ndarray) -> np.ndarray:
    """Laplace scale in symbol units.

    The estimator predicts the scale of the latent itself; dividing by the
    quantization step discretizes that model at the bin width actually
    coded, so a coarser step always makes symbols cheaper.
    """
    return np.maximum(b / composed, B_MIN)


def _step1_params(estimator: ParamEstimator, bundle: PriorBundle,
                  qs_global: float, qs_ch: np.ndarray, force_unit_qs_sc: bool):
    fused, mu1, b1, qs_sc = estimator.estimate_step1(bundle)
    qs_sc = np.ones_like(qs_sc.data) if force_unit_qs_sc else qs_sc.data
    composed = _base_step(qs_global, qs_ch) * qs_sc
    # the predicted mean also lives in the latent domain; in symbol units
    # it shrinks with the step, so symbols go to zero as the step coarsens
    return fused, mu1.data / composed, _symbol_scale(b1.data, composed), composed


def two_step_encode(y: np.ndarray, estimator: ParamEstimator, bundle: PriorBundle,
                    qs_global: float, qs_ch: np.ndarray,
                    force_unit_qs_sc: bool = False) -> TwoStepResult:
    schedule = partition_masks(y.shape)
    fused, mu1, b1, composed = _step1_params(estimator, bundle, qs_global, qs_ch,
                                             force_unit_qs_sc)

    m1 = schedule.step1
    sym1 = serialize_group(quantize(y, composed, mu1), m1)
    stream1, coded1 = encode_with_scales(sym1, serialize_group(b1, m1))
    bits = estimate_bits(coded1, serialize_group(b1, m1))
    recon1 = dequantize(coded1, serialize_group(composed, m1), serialize_group(mu1, m1))
    context = scatter_group(recon1, m1)

    mu2, b2 = estimator.estimate_step2(fused, Tensor(context))
    mu2s = mu2.data / composed
    b2s = _symbol_scale(b2.data, composed)
    m2 = schedule.step2
    sym2 = serialize_group(quantize(y, composed, mu2s), m2)
    stream2, coded2 = encode_with_scales(sym2, serialize_group(b2s, m2))
    bits += estimate_bits(coded2, serialize_group(b2s, m2))
    recon2 = dequantize(coded2, serialize_group(composed, m2), serialize_group(mu2s, m2))

    recon = context.copy()
    scatter_group(recon2, m2, out=recon)
    return TwoStepResult(step1=stream1, step2=stream2, reconstruction=recon,
                         estimated_bits=bits)


def two_step_decode(stream1: Bitstream, stream2: Bitstream, shape,
                    estimator: ParamEstimator, bundle: PriorBundle,
                    qs_global: float, qs_ch: np.ndarray,
                    force_unit_qs_sc: bool = False) -> np.ndarray:
    schedule = partition_masks(shape)
    fused, mu1, b1, composed = _step1_params(estimator, bundle, qs_global, qs_ch,
                                             force_unit_qs_sc)

    m1 = schedule.step1
    coded1 = decode_with_scales(stream1, serialize_group(b1, m1))
    recon1 = dequantize(coded1, serialize_group(composed, m1), serialize_group(mu1, m1))
    context = scatter_group(recon1, m1)

    mu2, b2 = estimator.estimate_step2(fused, Tensor(context))
    mu2s = mu2.data / composed
    b2s = _symbol_scale(b2.data, composed)
    m2 = schedule.step2
    coded2 = decode_with_scales(stream2, serialize_group(b2s, m2))
    recon2 = dequantize(coded2, serialize_group(composed, m2), serialize_group(mu2s, m2))

    recon = context.copy()
    scatter_group(recon2, m2, out=recon)
    return recon
