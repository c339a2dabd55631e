"""Command-line interface.

Subcommands: encode, decode, metrics, sweep, bdrate, train, ablate.
Reporting commands (sweep, train, bdrate) write delimited CSV output and
render a matching figure next to it.  Failures exit nonzero and print a
machine-readable ``error: category=<cat> detail=<msg>`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import container, metrics, pipeline, plots, training
from .config import AblationFlags, CodecConfig, load_config
from .container import ContainerError, FrameRecord, StreamHeader
from .nn import (CheckpointError, checkpoint_hash, deserialize_checkpoint,
                 load_checkpoint_blob, load_into, save_checkpoint)
from .pipeline import Codec, decode_sequence, encode_sequence
from .rangecoder import DecodeError

__all__ = ["main"]


def _load_codec(path) -> tuple[Codec, int]:
    blob = load_checkpoint_blob(path)
    cfg_dict, values = deserialize_checkpoint(blob)
    codec = Codec(CodecConfig(**cfg_dict))
    load_into(codec, values)
    return codec, checkpoint_hash(blob)


def _read_frames(args) -> list:
    return container.read_video(args.input, width=args.width, height=args.height)


def _add_video_args(p):
    p.add_argument("--width", type=int, default=None, help="raw input width")
    p.add_argument("--height", type=int, default=None, help="raw input height")


def _add_ablation_args(p):
    p.add_argument("--no-hyper-prior", action="store_true")
    p.add_argument("--no-temporal-prior", action="store_true")
    p.add_argument("--no-latent-prior", action="store_true")
    p.add_argument("--single-unet", action="store_true")
    p.add_argument("--no-qs-sc", action="store_true")


def _flags_from_args(args) -> AblationFlags:
    return AblationFlags(
        no_hyper_prior=args.no_hyper_prior,
        no_temporal_prior=args.no_temporal_prior,
        no_latent_prior=args.no_latent_prior,
        single_unet=args.single_unet,
        no_qs_sc=args.no_qs_sc,
    )


def _resolve_qs(codec: Codec, args) -> float:
    if args.qs_global is not None:
        if args.qs_global <= 0:
            raise ValueError("--qs-global must be positive")
        return float(args.qs_global)
    return codec.qs_global_for_t(args.rate_t)


def _mean_scores(refs, dists):
    ps = [metrics.psnr(a, b) for a, b in zip(refs, dists)]
    ms = [metrics.ms_ssim(a, b) for a, b in zip(refs, dists)]
    return float(np.mean(ps)), float(np.mean(ms))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_encode(args) -> int:
    codec, ck_hash = _load_codec(args.checkpoint)
    frames = _read_frames(args)
    flags = _flags_from_args(args)
    qs = pipeline.canonical_qs_global(_resolve_qs(codec, args))
    result = encode_sequence(codec, frames, qs, args.intra_period, flags)
    _, h, w = frames[0].shape
    header = StreamHeader(width=w, height=h, frame_count=len(frames),
                          intra_period=args.intra_period, qs_global=qs,
                          checkpoint_hash=ck_hash, ablation_bits=flags.to_bits())
    records = [FrameRecord(frame_type=t, substreams=subs) for t, subs in result.records]
    blob = container.write_stream(header, records)
    Path(args.output).write_bytes(blob)
    rate = metrics.bpp(8 * len(blob), w, h, len(frames))
    print(f"frames={len(frames)} qs_global={qs:.6g} bytes={len(blob)} bpp={rate:.6f}")
    return 0


def cmd_decode(args) -> int:
    codec, ck_hash = _load_codec(args.checkpoint)
    header, records = container.read_stream(Path(args.input).read_bytes())
    if header.checkpoint_hash != ck_hash:
        raise CheckpointError(
            "stream was produced with a different checkpoint "
            f"(header {header.checkpoint_hash:#x}, loaded {ck_hash:#x})")
    flags = AblationFlags.from_bits(header.ablation_bits)
    frames = decode_sequence(codec, [(r.frame_type, r.substreams) for r in records],
                             header.height, header.width, header.qs_global, flags)
    container.write_video(args.output, frames)
    print(f"frames={len(frames)} width={header.width} height={header.height}")
    return 0


def cmd_metrics(args) -> int:
    refs = container.read_video(args.ref, width=args.width, height=args.height)
    dists = container.read_video(args.dist, width=args.width, height=args.height)
    if len(refs) != len(dists):
        raise ValueError(f"frame counts differ: {len(refs)} vs {len(dists)}")
    p, m = _mean_scores(refs, dists)
    print(f"psnr_db={p:.4f} ms_ssim={m:.6f}")
    return 0


def cmd_sweep(args) -> int:
    codec, _ = _load_codec(args.checkpoint)
    frames = _read_frames(args)
    flags = _flags_from_args(args)
    _, h, w = frames[0].shape
    rows = []
    for i in range(args.points):
        t = i / (args.points - 1) if args.points > 1 else 0.0
        qs = codec.qs_global_for_t(t)
        result = encode_sequence(codec, frames, qs, args.intra_period, flags)
        rate = metrics.bpp(result.total_payload_bits(), w, h, len(frames))
        p, m = _mean_scores(frames, result.reconstructions)
        rows.append((t, qs, metrics.RdPoint(bpp=rate, psnr=p, msssim=m)))
        print(f"t={t:.4f} qs_global={qs:.6g} bpp={rate:.6f} psnr_db={p:.4f}")
    points = sorted((r[2] for r in rows), key=lambda p: p.bpp)
    out_csv = Path(args.out)
    metrics.write_curve_csv(out_csv, points)
    plots.plot_rd_curve(points, out_csv.with_suffix(".png"))
    print(f"wrote {out_csv} and {out_csv.with_suffix('.png')}")
    return 0


def cmd_bdrate(args) -> int:
    test = metrics.read_curve_csv(args.test)
    anchor = metrics.read_curve_csv(args.anchor)
    value = metrics.bd_rate(test, anchor, metric=args.metric)
    plot_path = Path(args.test).with_suffix(".bd.png")
    plots.plot_curve_pair(test, anchor, plot_path, metric=args.metric)
    print(f"bd_rate_percent={value:.6f}")
    print(f"wrote {plot_path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else CodecConfig(seed=args.seed)
    if args.init_checkpoint:
        codec, _ = _load_codec(args.init_checkpoint)
    else:
        codec = Codec(cfg)
    clip = container.read_video(args.clip, width=args.width, height=args.height)
    rd = training.RdConfig(cascade=args.cascade, steps=args.steps, lr=args.lr,
                           seed=args.seed, distortion=args.distortion)
    trace = training.train_cascaded(codec, clip, rd)
    save_checkpoint(args.out, codec, codec.config.to_dict())
    trace_csv = Path(args.out).with_suffix(".trace.csv")
    with open(trace_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lambda", "distortion", "rate", "loss"])
        for row in trace:
            writer.writerow([row.step, row.lam, f"{row.distortion:.8f}",
                             f"{row.rate:.8f}", f"{row.loss:.8f}"])
    plots.plot_training_trace(trace, trace_csv.with_suffix(".png"))
    first = np.mean([r.loss for r in trace[:5]])
    last = np.mean([r.loss for r in trace[-5:]])
    print(f"steps={len(trace)} first_loss={first:.4f} last_loss={last:.4f}")
    print(f"wrote {args.out}, {trace_csv} and {trace_csv.with_suffix('.png')}")
    return 0


def cmd_ablate(args) -> int:
    codec, _ = _load_codec(args.checkpoint)
    frames = _read_frames(args)
    flags = _flags_from_args(args)
    qs = pipeline.canonical_qs_global(_resolve_qs(codec, args))
    result = encode_sequence(codec, frames, qs, args.intra_period, flags)
    decoded = decode_sequence(codec, result.records, frames[0].shape[1],
                              frames[0].shape[2], qs, flags)
    exact = all(np.array_equal(a, b) for a, b in zip(result.reconstructions, decoded))
    _, h, w = frames[0].shape
    rate = metrics.bpp(result.total_payload_bits(), w, h, len(frames))
    p, m = _mean_scores(frames, result.reconstructions)
    print(f"flags={flags.to_bits():#04x} bpp={rate:.6f} psnr_db={p:.4f} "
          f"ms_ssim={m:.6f} decode_exact={exact}")
    if not exact:
        raise DecodeError("decoder reconstruction mismatch under ablation flags")
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hstm",
                                     description="hybrid spatial-temporal entropy model video codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a clip to a bitstream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--qs-global", type=float, default=None)
    p.add_argument("--rate-t", type=float, default=0.5,
                   help="rate point in [0,1]; ignored when --qs-global is set")
    p.add_argument("--intra-period", type=int, default=32)
    _add_video_args(p)
    _add_ablation_args(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to a clip")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("metrics", help="PSNR / MS-SSIM between two clips")
    p.add_argument("ref")
    p.add_argument("dist")
    _add_video_args(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="rate sweep: CSV curve plus figure")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--points", type=int, default=30)
    p.add_argument("--intra-period", type=int, default=32)
    p.add_argument("--out", default="sweep.csv")
    _add_video_args(p)
    _add_ablation_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bdrate", help="BD-rate between two curve CSVs")
    p.add_argument("test")
    p.add_argument("anchor")
    p.add_argument("--metric", choices=["psnr", "msssim"], default="psnr")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("train", help="rate-distortion training on a clip")
    p.add_argument("clip")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--config", default=None, help="YAML codec config")
    p.add_argument("--init-checkpoint", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--cascade", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distortion", choices=["mse", "msssim"], default="mse")
    _add_video_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="encode+decode under ablation switches")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--qs-global", type=float, default=None)
    p.add_argument("--rate-t", type=float, default=0.5)
    p.add_argument("--intra-period", type=int, default=32)
    _add_video_args(p)
    _add_ablation_args(p)
    p.set_defaults(func=cmd_ablate)

    return parser


_CATEGORIES = [
    (CheckpointError, "checkpoint"),
    (ContainerError, "format"),
    (DecodeError, "decode"),
    (FileNotFoundError, "io"),
    (IsADirectoryError, "io"),
    (PermissionError, "io"),
    (ValueError, "usage"),
    (OSError, "io"),
]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single exit point maps categories
        for etype, cat in _CATEGORIES:
            if isinstance(exc, etype):
                print(f"error: category={cat} detail={exc}", file=sys.stderr)
                return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
