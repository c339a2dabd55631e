"""Frame-level codec orchestration.

An intra frame is coded by a toy image autoencoder conditioned on its
hyper prior only, and resets the recurrent state.  An inter frame runs
block-motion estimation against the previous reconstruction, codes the
motion latent, mines a multi-scale temporal context from the propagated
feature, codes the main latent under the fused priors, and generates the
reconstruction plus the next frame's feature.

The decoder mirrors every step from the substreams alone, so the
reconstruction and the advanced state are bitwise identical on both
sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import AblationFlags, CodecConfig
from .dualprior import TwoStepResult, two_step_encode, two_step_decode
from .nn import Conv2d, ConvTranspose2d, LeakyReLU, Module, Sequential
from .priors import HyperCoder, ParamEstimator, PriorBundle, TemporalContextEncoder, apply_ablation
from .quantizer import interpolate_qs_global
from .rangecoder import Bitstream
from .tensor import Parameter, Tensor, concat, warp_bilinear

__all__ = [
    "Codec", "FrameState", "ContextPyramid", "FrameBits", "SequenceResult",
    "block_motion_estimate", "pad_to_multiple", "init_state",
    "encode_sequence", "decode_sequence",
]

PAD_MULTIPLE = 64
LATENT_DOWN = 16
INTRA, INTER = 0, 1


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------


def _analysis(channels: list[int], rng) -> Sequential:
    """Stack of stride-2 convolutions; one spatial halving per entry pair."""
    layers = []
    for i, (a, b) in enumerate(zip(channels[:-1], channels[1:])):
        layers.append(Conv2d(a, b, 3, stride=2, padding=1, rng=rng))
        if i < len(channels) - 2:
            layers.append(LeakyReLU())
    return Sequential(*layers)


def _synthesis(channels: list[int], rng) -> Sequential:
    layers = []
    for i, (a, b) in enumerate(zip(channels[:-1], channels[1:])):
        layers.append(ConvTranspose2d(a, b, 2, stride=2, rng=rng))
        if i < len(channels) - 2:
            layers.append(LeakyReLU())
    return Sequential(*layers)


@dataclass
class ContextPyramid:
    c0: Tensor  # full resolution
    c1: Tensor  # 2x down
    c2: Tensor  # 4x down


class ContextMiner(Module):
    """Warp the propagated feature and extract the three context scales.

    Lower scales use the feature downsampled by stride-2 convolutions and
    the flow downsampled and halved in magnitude to match the grid.
    """

    def __init__(self, feature_c: int, ctx_c: int, rng):
        self.c0_conv = Conv2d(feature_c, ctx_c, 3, padding=1, rng=rng)
        self.down1 = Conv2d(feature_c, feature_c, 3, stride=2, padding=1, rng=rng)
        self.c1_conv = Conv2d(feature_c, ctx_c, 3, padding=1, rng=rng)
        self.down2 = Conv2d(feature_c, feature_c, 3, stride=2, padding=1, rng=rng)
        self.c2_conv = Conv2d(feature_c, ctx_c, 3, padding=1, rng=rng)

    def __call__(self, feature: Tensor, flow: Tensor) -> ContextPyramid:
        c0 = self.c0_conv(warp_bilinear(feature, flow))
        flow1 = flow.avg_pool2() * 0.5
        d1 = self.down1(feature).leaky_relu()
        c1 = self.c1_conv(warp_bilinear(d1, flow1))
        flow2 = flow1.avg_pool2() * 0.5
        d2 = self.down2(d1).leaky_relu()
        c2 = self.c2_conv(warp_bilinear(d2, flow2))
        return ContextPyramid(c0=c0, c1=c1, c2=c2)


class ContextualEncoder(Module):
    """16x-downsampling transform conditioned on the context pyramid."""

    def __init__(self, ctx_c: int, hidden_c: int, latent_c: int, rng):
        self.l0 = Conv2d(3 + ctx_c, hidden_c, 3, stride=2, padding=1, rng=rng)
        self.l1 = Conv2d(hidden_c + ctx_c, hidden_c, 3, stride=2, padding=1, rng=rng)
        self.l2 = Conv2d(hidden_c + ctx_c, hidden_c, 3, stride=2, padding=1, rng=rng)
        self.l3 = Conv2d(hidden_c, latent_c, 3, stride=2, padding=1, rng=rng)

    def __call__(self, x: Tensor, pyr: ContextPyramid) -> Tensor:
        h = self.l0(concat([x, pyr.c0], axis=0)).leaky_relu()
        h = self.l1(concat([h, pyr.c1], axis=0)).leaky_relu()
        h = self.l2(concat([h, pyr.c2], axis=0)).leaky_relu()
        return self.l3(h)


class ContextualDecoder(Module):
    """Mirror of the encoder; emits the full-resolution feature."""

    def __init__(self, ctx_c: int, hidden_c: int, latent_c: int, feature_c: int, rng):
        self.u3 = ConvTranspose2d(latent_c, hidden_c, 2, stride=2, rng=rng)
        self.u2 = ConvTranspose2d(hidden_c, hidden_c, 2, stride=2, rng=rng)
        self.u1 = ConvTranspose2d(hidden_c + ctx_c, hidden_c, 2, stride=2, rng=rng)
        self.u0 = ConvTranspose2d(hidden_c + ctx_c, feature_c, 2, stride=2, rng=rng)

    def __call__(self, y_hat: Tensor, pyr: ContextPyramid) -> Tensor:
        h = self.u3(y_hat).leaky_relu()
        h = self.u2(h).leaky_relu()
        h = self.u1(concat([h, pyr.c2], axis=0)).leaky_relu()
        return self.u0(concat([h, pyr.c1], axis=0))


class UNet2(Module):
    """Two-scale U-Net with a single skip connection."""

    def __init__(self, in_c: int, hidden_c: int, out_c: int, rng):
        self.e0 = Conv2d(in_c, hidden_c, 3, padding=1, rng=rng)
        self.e1 = Conv2d(hidden_c, hidden_c, 3, stride=2, padding=1, rng=rng)
        self.mid = Conv2d(hidden_c, hidden_c, 3, padding=1, rng=rng)
        self.up = ConvTranspose2d(hidden_c, hidden_c, 2, stride=2, rng=rng)
        self.out = Conv2d(2 * hidden_c, out_c, 3, padding=1, rng=rng)

    def __call__(self, x: Tensor) -> Tensor:
        e0 = self.e0(x).leaky_relu()
        e1 = self.e1(e0).leaky_relu()
        m = self.mid(e1).leaky_relu()
        u = self.up(m).leaky_relu()
        return self.out(concat([e0, u], axis=0))


class FrameGenerator(Module):
    """Two chained U-Nets producing the frame and the next-frame feature.

    The second stage can be skipped at runtime (single-stage ablation);
    the choice travels in the stream header so both sides agree.
    """

    def __init__(self, feature_c: int, ctx_c: int, hidden_c: int, rng):
        self.stage1 = UNet2(feature_c + ctx_c, hidden_c, hidden_c, rng)
        self.stage2 = UNet2(hidden_c, hidden_c, hidden_c, rng)
        self.head_x = Conv2d(hidden_c, 3, 3, padding=1, rng=rng)
        self.head_f = Conv2d(hidden_c, feature_c, 3, padding=1, rng=rng)

    def __call__(self, f_hat: Tensor, c0: Tensor, single_stage: bool = False):
        h = self.stage1(concat([f_hat, c0], axis=0)).leaky_relu()
        if not single_stage:
            h = self.stage2(h).leaky_relu()
        x_hat = self.head_x(h).clamp_ste(0.0, 1.0)
        return x_hat, self.head_f(h)


class Codec(Module):
    """All learnable pieces of the codec, checkpoint-serializable as one."""

    def __init__(self, config: CodecConfig | None = None):
        cfg = config or CodecConfig()
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        g, yc, fc, cc = cfg.hidden_channels, cfg.y_channels, cfg.feature_channels, cfg.context_channels

        # intra branch
        self.intra_enc = _analysis([3, g, g, g, yc], rng)
        self.intra_dec = _synthesis([yc, g, g, g, 3], rng)
        self.hyper_intra = HyperCoder(yc, cfg.hyper_channels, rng)
        self.est_intra = ParamEstimator(cfg.hyper_channels, yc, g, rng)

        # motion branch
        self.mv_enc = _analysis([2, g, g, g, cfg.mv_channels], rng)
        self.mv_dec = _synthesis([cfg.mv_channels, g, g, g, 2], rng)
        self.hyper_mv = HyperCoder(cfg.mv_channels, cfg.mv_hyper_channels, rng)
        self.est_mv = ParamEstimator(cfg.mv_hyper_channels + cfg.mv_channels,
                                     cfg.mv_channels, g, rng)

        # inter branch
        self.miner = ContextMiner(fc, cc, rng)
        self.tce = TemporalContextEncoder(cc, cc, rng)
        self.ctx_enc = ContextualEncoder(cc, g, yc, rng)
        self.ctx_dec = ContextualDecoder(cc, g, yc, fc, rng)
        self.est_y = ParamEstimator(cfg.hyper_channels + cc + yc, yc, g, rng)
        self.hyper_y = HyperCoder(yc, cfg.hyper_channels, rng)
        self.generator = FrameGenerator(fc, cc, g, rng)

        # quantization parameters (exponential parameterization keeps > 0)
        self.log_qs_ch_y = Parameter(np.zeros(yc))
        self.log_qs_ch_mv = Parameter(np.zeros(cfg.mv_channels))
        self.log_qs_ch_intra = Parameter(np.zeros(yc))
        self.log_qs_global_inter = Parameter(np.log([0.5, 0.8, 1.3, 2.0]))
        self.log_qs_global_intra = Parameter(np.log([0.5, 0.8, 1.3, 2.0]))

    # -- quantization step helpers -----------------------------------------

    def qs_ch(self, which: str) -> np.ndarray:
        p = {"y": self.log_qs_ch_y, "mv": self.log_qs_ch_mv, "intra": self.log_qs_ch_intra}[which]
        return np.exp(p.data)

    def learned_qs_global(self, which: str) -> np.ndarray:
        p = self.log_qs_global_inter if which == "inter" else self.log_qs_global_intra
        return np.sort(np.exp(p.data))

    def qs_global_for_t(self, t: float) -> float:
        return interpolate_qs_global(self.learned_qs_global("inter"), t)

    def intra_qs_for(self, qs_global: float) -> float:
        """Derive the intra-model global step from the transmitted one.

        The header carries a single step from the inter model's learned
        range; its relative log-position maps onto the intra model's range.
        Both sides compute this from the checkpoint, so no extra field is
        transmitted.
        """
        inter = self.learned_qs_global("inter")
        lo, hi = float(inter.min()), float(inter.max())
        if hi <= lo * (1 + 1e-12):
            t = 0.0
        else:
            t = (np.log(qs_global) - np.log(lo)) / (np.log(hi) - np.log(lo))
        t = float(np.clip(t, 0.0, 1.0))
        return interpolate_qs_global(self.learned_qs_global("intra"), t)


# ---------------------------------------------------------------------------
# motion estimation
# ---------------------------------------------------------------------------

_DIAMOND_LARGE = [(0, 0), (0, 2), (0, -2), (2, 0), (-2, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)]
_DIAMOND_SMALL = [(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0)]


def block_motion_estimate(cur: np.ndarray, ref: np.ndarray,
                          block: int = 8, search_range: int = 7) -> np.ndarray:
    """Per-block integer motion by diamond search, replicated to a dense flow.

    Matching runs on the channel mean with the sum of absolute differences;
    the zero vector is always evaluated and wins ties, so the matched cost
    never exceeds the zero-motion cost.  Returned flow has 2 channels
    (dx, dy) in pixels: the reference sample for output (i, j) sits at
    (i + dy, j + dx).
    """
    if cur.shape != ref.shape:
        raise ValueError(f"frame shapes differ: {cur.shape} vs {ref.shape}")
    cur_g = cur.mean(axis=0)
    ref_g = ref.mean(axis=0)
    h, w = cur_g.shape
    pad = search_range + 1
    ref_p = np.pad(ref_g, pad, mode="edge")
    flow = np.zeros((2, h, w))
    for by in range(0, h, block):
        for bx in range(0, w, block):
            blk = cur_g[by:by + block, bx:bx + block]
            bh, bw = blk.shape

            def sad(dy, dx):
                r = ref_p[by + dy + pad:by + dy + pad + bh,
                          bx + dx + pad:bx + dx + pad + bw]
                return float(np.abs(blk - r).sum())

            best = (0, 0)
            best_cost = sad(0, 0)
            for pattern in (_DIAMOND_LARGE, _DIAMOND_SMALL):
                improved = True
                while improved:
                    improved = False
                    for dy, dx in pattern:
                        cy, cx = best[0] + dy, best[1] + dx
                        if (cy, cx) == best or abs(cy) > search_range or abs(cx) > search_range:
                            continue
                        cost = sad(cy, cx)
                        if cost < best_cost:
                            best_cost = cost
                            best = (cy, cx)
                            improved = True
            flow[0, by:by + bh, bx:bx + bw] = best[1]
            flow[1, by:by + bh, bx:bx + bw] = best[0]
    return flow


# ---------------------------------------------------------------------------
# state and framing helpers
# ---------------------------------------------------------------------------


@dataclass
class FrameState:
    """Recurrent codec state; identical on both sides after every frame."""

    feature: np.ndarray        # (feature_c, H, W)
    recon: np.ndarray          # previous reconstruction, padded dims
    latent_prior: np.ndarray   # (y_c, H/16, W/16)
    mv_prior: np.ndarray       # (mv_c, H/16, W/16)


def init_state(config: CodecConfig, height: int, width: int) -> FrameState:
    lh, lw = height // LATENT_DOWN, width // LATENT_DOWN
    return FrameState(
        feature=np.zeros((config.feature_channels, height, width)),
        recon=np.zeros((3, height, width)),
        latent_prior=np.zeros((config.y_channels, lh, lw)),
        mv_prior=np.zeros((config.mv_channels, lh, lw)),
    )


def pad_to_multiple(frame: np.ndarray, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """Edge-replicate a (3, h, w) frame up to multiples of ``multiple``."""
    _, h, w = frame.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return frame
    return np.pad(frame, ((0, 0), (0, ph), (0, pw)), mode="edge")


@dataclass
class FrameBits:
    frame_type: int
    payload_bits: int          # coder payload bytes * 8, all substreams
    estimated_bits: float      # closed-form rate of the same symbols


@dataclass
class SequenceResult:
    reconstructions: list      # cropped to original dims
    records: list              # (frame_type, [substream bytes, ...]) per frame
    bits: list = field(default_factory=list)  # FrameBits per frame

    def total_payload_bits(self) -> int:
        return sum(b.payload_bits for b in self.bits)


def _payload_bits(streams: list[Bitstream]) -> int:
    return 8 * sum(len(s) for s in streams)


# ---------------------------------------------------------------------------
# intra frame
# ---------------------------------------------------------------------------


def _code_hyper_side(hyper: HyperCoder, y: Tensor):
    z = hyper.encode(y)
    z_hat = hyper.quantize(z)
    stream, _ = hyper.code(z_hat)
    feature = hyper.decode_feature(z_hat)
    return z_hat, stream, feature


def encode_intra(codec: Codec, x: np.ndarray, qs_global: float,
                 flags: AblationFlags) -> tuple[list[Bitstream], np.ndarray, np.ndarray, float]:
    """Code one padded intra frame; returns (streams, x_hat, y_hat, est_bits)."""
    y = codec.intra_enc(Tensor(x))
    z_hat, hyper_stream, feature = _code_hyper_side(codec.hyper_intra, y)
    bundle = apply_ablation(PriorBundle(hyper=feature), no_hyper=flags.no_hyper_prior)
    res = two_step_encode(y.data, codec.est_intra, bundle, qs_global,
                          codec.qs_ch("intra"), force_unit_qs_sc=flags.no_qs_sc)
    x_hat = codec.intra_dec(Tensor(res.reconstruction)).clamp_ste(0.0, 1.0).data
    est = res.estimated_bits + codec.hyper_intra.rate_bits(z_hat)
    return [hyper_stream, res.step1, res.step2], x_hat, res.reconstruction, est


def decode_intra(codec: Codec, streams: list[Bitstream], height: int, width: int,
                 qs_global: float, flags: AblationFlags) -> tuple[np.ndarray, np.ndarray]:
    lh, lw = height // LATENT_DOWN, width // LATENT_DOWN
    zh, zw = lh // 4, lw // 4
    z_shape = (codec.config.hyper_channels, zh, zw)
    z_hat = codec.hyper_intra.decode_stream(streams[0], z_shape)
    feature = codec.hyper_intra.decode_feature(z_hat)
    bundle = apply_ablation(PriorBundle(hyper=feature), no_hyper=flags.no_hyper_prior)
    y_hat = two_step_decode(streams[1], streams[2], (codec.config.y_channels, lh, lw),
                            codec.est_intra, bundle, qs_global, codec.qs_ch("intra"),
                            force_unit_qs_sc=flags.no_qs_sc)
    x_hat = codec.intra_dec(Tensor(y_hat)).clamp_ste(0.0, 1.0).data
    return x_hat, y_hat


# ---------------------------------------------------------------------------
# inter frame
# ---------------------------------------------------------------------------


def _mv_bundle(codec: Codec, feature: Tensor, state: FrameState, flags: AblationFlags):
    bundle = PriorBundle(hyper=feature, latent_prior=Tensor(state.mv_prior))
    return apply_ablation(bundle, no_hyper=flags.no_hyper_prior,
                          no_latent=flags.no_latent_prior)


def _y_bundle(codec: Codec, feature: Tensor, temporal: Tensor, state: FrameState,
              flags: AblationFlags):
    bundle = PriorBundle(hyper=feature, temporal=temporal,
                         latent_prior=Tensor(state.latent_prior))
    return apply_ablation(bundle, no_hyper=flags.no_hyper_prior,
                          no_temporal=flags.no_temporal_prior,
                          no_latent=flags.no_latent_prior)


def _inter_reconstruct(codec: Codec, y_hat: np.ndarray, pyr: ContextPyramid,
                       flags: AblationFlags):
    f_hat = codec.ctx_dec(Tensor(y_hat), pyr)
    x_hat, f_next = codec.generator(f_hat, pyr.c0, single_stage=flags.single_unet)
    return x_hat.data, f_next.data


def encode_inter(codec: Codec, x: np.ndarray, state: FrameState, qs_global: float,
                 flags: AblationFlags):
    """Code one padded inter frame against ``state``.

    Returns (streams in container order, x_hat, new_state, est_bits).
    """
    flow = block_motion_estimate(x, state.recon, codec.config.me_block,
                                 codec.config.me_range)
    g = codec.mv_enc(Tensor(flow))
    zmv_hat, mv_hyper_stream, mv_feature = _code_hyper_side(codec.hyper_mv, g)
    res_mv = two_step_encode(g.data, codec.est_mv,
                             _mv_bundle(codec, mv_feature, state, flags),
                             qs_global, codec.qs_ch("mv"),
                             force_unit_qs_sc=flags.no_qs_sc)
    flow_hat = codec.mv_dec(Tensor(res_mv.reconstruction)).data

    pyr = codec.miner(Tensor(state.feature), Tensor(flow_hat))
    temporal = codec.tce(pyr.c2)
    y = codec.ctx_enc(Tensor(x), pyr)
    zy_hat, hyper_stream, y_feature = _code_hyper_side(codec.hyper_y, y)
    res_y = two_step_encode(y.data, codec.est_y,
                            _y_bundle(codec, y_feature, temporal, state, flags),
                            qs_global, codec.qs_ch("y"),
                            force_unit_qs_sc=flags.no_qs_sc)
    x_hat, f_next = _inter_reconstruct(codec, res_y.reconstruction, pyr, flags)

    new_state = FrameState(feature=f_next, recon=x_hat,
                           latent_prior=res_y.reconstruction,
                           mv_prior=res_mv.reconstruction)
    streams = [mv_hyper_stream, res_mv.step1, res_mv.step2,
               hyper_stream, res_y.step1, res_y.step2]
    est = (res_mv.estimated_bits + res_y.estimated_bits
           + codec.hyper_mv.rate_bits(zmv_hat) + codec.hyper_y.rate_bits(zy_hat))
    return streams, x_hat, new_state, est


def decode_inter(codec: Codec, streams: list[Bitstream], state: FrameState,
                 height: int, width: int, qs_global: float, flags: AblationFlags):
    lh, lw = height // LATENT_DOWN, width // LATENT_DOWN
    cfg = codec.config

    zmv_shape = (cfg.mv_hyper_channels, lh // 4, lw // 4)
    zmv_hat = codec.hyper_mv.decode_stream(streams[0], zmv_shape)
    mv_feature = codec.hyper_mv.decode_feature(zmv_hat)
    g_hat = two_step_decode(streams[1], streams[2], (cfg.mv_channels, lh, lw),
                            codec.est_mv, _mv_bundle(codec, mv_feature, state, flags),
                            qs_global, codec.qs_ch("mv"), force_unit_qs_sc=flags.no_qs_sc)
    flow_hat = codec.mv_dec(Tensor(g_hat)).data

    pyr = codec.miner(Tensor(state.feature), Tensor(flow_hat))
    temporal = codec.tce(pyr.c2)
    zy_shape = (cfg.hyper_channels, lh // 4, lw // 4)
    zy_hat = codec.hyper_y.decode_stream(streams[3], zy_shape)
    y_feature = codec.hyper_y.decode_feature(zy_hat)
    y_hat = two_step_decode(streams[4], streams[5], (cfg.y_channels, lh, lw),
                            codec.est_y, _y_bundle(codec, y_feature, temporal, state, flags),
                            qs_global, codec.qs_ch("y"), force_unit_qs_sc=flags.no_qs_sc)
    x_hat, f_next = _inter_reconstruct(codec, y_hat, pyr, flags)

    new_state = FrameState(feature=f_next, recon=x_hat, latent_prior=y_hat,
                           mv_prior=g_hat)
    return x_hat, new_state


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------


def canonical_qs_global(qs_global: float) -> float:
    """Round through the 32-bit header representation once, up front."""
    return float(np.float32(qs_global))


def encode_sequence(codec: Codec, frames: list[np.ndarray], qs_global: float,
                    intra_period: int | None = None,
                    flags: AblationFlags | None = None) -> SequenceResult:
    if not frames:
        raise ValueError("no frames to encode")
    flags = flags or codec.config.ablation
    period = intra_period or codec.config.intra_period
    qs_global = canonical_qs_global(qs_global)
    qs_intra = codec.intra_qs_for(qs_global)
    _, h, w = frames[0].shape

    state = None
    result = SequenceResult(reconstructions=[], records=[])
    for idx, frame in enumerate(frames):
        if frame.shape != frames[0].shape:
            raise ValueError("all frames must share one shape")
        x = pad_to_multiple(frame)
        if idx % period == 0:
            streams, x_hat, y_hat, est = encode_intra(codec, x, qs_intra, flags)
            state = init_state(codec.config, x.shape[1], x.shape[2])
            state.recon = x_hat
            ftype = INTRA
        else:
            streams, x_hat, state, est = encode_inter(codec, x, state, qs_global, flags)
            ftype = INTER
        result.reconstructions.append(x_hat[:, :h, :w])
        result.records.append((ftype, [s.data for s in streams]))
        result.bits.append(FrameBits(frame_type=ftype,
                                     payload_bits=_payload_bits(streams),
                                     estimated_bits=est))
    return result


def decode_sequence(codec: Codec, records: list, height: int, width: int,
                    qs_global: float, flags: AblationFlags | None = None) -> list[np.ndarray]:
    flags = flags or codec.config.ablation
    qs_global = canonical_qs_global(qs_global)
    qs_intra = codec.intra_qs_for(qs_global)
    ph = height + (-height) % PAD_MULTIPLE
    pw = width + (-width) % PAD_MULTIPLE

    state = None
    out = []
    for ftype, payloads in records:
        streams = [Bitstream(p) for p in payloads]
        if ftype == INTRA:
            x_hat, _ = decode_intra(codec, streams, ph, pw, qs_intra, flags)
            state = init_state(codec.config, ph, pw)
            state.recon = x_hat
        elif ftype == INTER:
            if state is None:
                raise ValueError("inter frame before any intra frame")
            x_hat, state = decode_inter(codec, streams, state, ph, pw, qs_global, flags)
        else:
            raise ValueError(f"unknown frame type {ftype}")
        out.append(x_hat[:, :height, :width])
    return out
