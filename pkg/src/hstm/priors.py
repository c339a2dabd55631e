"""Prior networks and the distribution-parameter estimator.

Three kinds of side information condition the coding of a latent tensor:
a hyper latent (coded first, with static per-channel Laplace scales), a
temporal context feature mined from the previous frame, and the previous
frame's dequantized latent.  The estimator fuses whichever priors a
variant uses and produces per-element (mu, b) for both coding steps plus
the spatial-channel quantization step for the whole tensor.

Everything here is a pure function of decoded side information, so the
encoder and decoder recompute identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laplace import B_MIN, estimate_bits
from .nn import Conv2d, ConvTranspose2d, LeakyReLU, Module, Sequential
from .quantizer import QS_SC_MAX, QS_SC_MIN
from .rangecoder import Bitstream, decode_with_scales, encode_with_scales
from .tensor import Parameter, Tensor, concat, round_half_away

__all__ = [
    "HyperCoder", "TemporalContextEncoder", "PriorBundle", "ParamEstimator",
]


class HyperCoder(Module):
    """Hyper branch: 4x-downsampling encoder, decoder, and its own coder.

    The hyper latent is rounded with unit step and no mean, and coded under
    a static zero-mean Laplace per channel whose scales live in the
    checkpoint (exponential parameterization keeps them positive).
    """

    def __init__(self, latent_c: int, hyper_c: int, rng: np.random.Generator):
        self.encoder = Sequential(
            Conv2d(latent_c, hyper_c, 3, stride=2, padding=1, rng=rng),
            LeakyReLU(),
            Conv2d(hyper_c, hyper_c, 3, stride=2, padding=1, rng=rng),
        )
        self.decoder = Sequential(
            ConvTranspose2d(hyper_c, hyper_c, 2, stride=2, rng=rng),
            LeakyReLU(),
            ConvTranspose2d(hyper_c, hyper_c, 2, stride=2, rng=rng),
        )
        self.log_b = Parameter(np.zeros(hyper_c))

    def scales(self) -> np.ndarray:
        return np.maximum(np.exp(self.log_b.data), B_MIN)

    def scales_tensor(self) -> Tensor:
        return self.log_b.exp().maximum(B_MIN)

    def encode(self, y: Tensor) -> Tensor:
        return self.encoder(y)

    def quantize(self, z: Tensor) -> np.ndarray:
        return round_half_away(z.data).astype(np.int64)

    def decode_feature(self, z_hat: np.ndarray) -> Tensor:
        return self.decoder(Tensor(z_hat))

    def code(self, z_hat: np.ndarray) -> tuple[Bitstream, np.ndarray]:
        b = np.broadcast_to(self.scales()[:, None, None], z_hat.shape)
        return encode_with_scales(z_hat, b)

    def decode_stream(self, stream: Bitstream, shape) -> np.ndarray:
        b = np.broadcast_to(self.scales()[:, None, None], shape)
        return decode_with_scales(stream, b).reshape(shape)

    def rate_bits(self, z_hat: np.ndarray) -> float:
        b = np.broadcast_to(self.scales()[:, None, None], z_hat.shape)
        return estimate_bits(z_hat, b)


class TemporalContextEncoder(Module):
    """Bring the 4x-downsampled temporal context to the 16x latent grid."""

    def __init__(self, in_c: int, out_c: int, rng: np.random.Generator):
        self.net = Sequential(
            Conv2d(in_c, out_c, 3, stride=2, padding=1, rng=rng),
            LeakyReLU(),
            Conv2d(out_c, out_c, 3, stride=2, padding=1, rng=rng),
        )

    def __call__(self, c2: Tensor) -> Tensor:
        return self.net(c2)


@dataclass
class PriorBundle:
    """Spatially aligned conditioning inputs for one latent tensor.

    Members are optional: a variant that lacks a prior (or ablates it)
    passes zeros of the right shape so the estimator's input layout never
    changes.  All members live on the latent grid.
    """

    hyper: Tensor
    temporal: Tensor | None = None
    latent_prior: Tensor | None = None

    def fused_input(self) -> Tensor:
        parts = [self.hyper]
        if self.temporal is not None:
            parts.append(self.temporal)
        if self.latent_prior is not None:
            parts.append(self.latent_prior)
        return concat(parts, axis=0) if len(parts) > 1 else parts[0]


def _zeroed(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data), _parents=(t,)) if t.requires_grad else Tensor(np.zeros_like(t.data))


def apply_ablation(bundle: PriorBundle, no_hyper: bool = False,
                   no_temporal: bool = False, no_latent: bool = False) -> PriorBundle:
    """Mask individual priors to zero without changing the input layout."""
    hyper = _zeroed(bundle.hyper) if no_hyper else bundle.hyper
    temporal = bundle.temporal
    if temporal is not None and no_temporal:
        temporal = _zeroed(temporal)
    latent = bundle.latent_prior
    if latent is not None and no_latent:
        latent = _zeroed(latent)
    return PriorBundle(hyper=hyper, temporal=temporal, latent_prior=latent)


class ParamEstimator(Module):
    """Two-step (mu, b) heads plus the spatial-channel quantization step.

    Step one sees only the fused priors and emits dense parameters for the
    whole tensor together with qs_sc.  Step two re-fuses the step-one
    reconstruction context and emits refreshed dense parameters; callers
    read each step's outputs only at that step's positions.
    """

    def __init__(self, in_c: int, latent_c: int, hidden_c: int, rng: np.random.Generator):
        self.latent_c = latent_c
        self.fuse1 = Sequential(
            Conv2d(in_c, hidden_c, 3, padding=1, rng=rng),
            LeakyReLU(),
            Conv2d(hidden_c, hidden_c, 3, padding=1, rng=rng),
            LeakyReLU(),
        )
        self.head_mu1 = Conv2d(hidden_c, latent_c, 3, padding=1, rng=rng)
        self.head_b1 = Conv2d(hidden_c, latent_c, 3, padding=1, rng=rng)
        self.head_qs_sc = Conv2d(hidden_c, latent_c, 3, padding=1, rng=rng)
        self.fuse2 = Sequential(
            Conv2d(hidden_c + latent_c, hidden_c, 3, padding=1, rng=rng),
            LeakyReLU(),
            Conv2d(hidden_c, hidden_c, 3, padding=1, rng=rng),
            LeakyReLU(),
        )
        self.head_mu2 = Conv2d(hidden_c, latent_c, 3, padding=1, rng=rng)
        self.head_b2 = Conv2d(hidden_c, latent_c, 3, padding=1, rng=rng)

    def estimate_step1(self, bundle: PriorBundle):
        """Return (fused feature, mu1, b1, qs_sc); all dense on the grid.

        The scale b1 models the latent itself; coding and rate surrogates
        divide it by the composed quantization step before use.
        """
        fused = self.fuse1(bundle.fused_input())
        mu1 = self.head_mu1(fused)
        b1 = self.head_b1(fused).softplus().maximum(B_MIN)
        qs_sc = QS_SC_MIN + (QS_SC_MAX - QS_SC_MIN) * self.head_qs_sc(fused).sigmoid()
        return fused, mu1, b1, qs_sc

    def estimate_step2(self, fused: Tensor, step1_context: Tensor):
        """Refresh (mu, b) given the step-one reconstruction context."""
        h = self.fuse2(concat([fused, step1_context], axis=0))
        mu2 = self.head_mu2(h)
        b2 = self.head_b2(h).softplus().maximum(B_MIN)
        return mu2, b2
