"""Bitstream container and raw-video file I/O.

Stream layout (all integers little-endian):

    magic          4 bytes  b"HSTM"
    version        u8
    width          u16      original (uncropped) frame width
    height         u16
    frame_count    u16
    intra_period   u8
    ablation_bits  u8       runtime switches the decoder must mirror
    qs_global      f32      global quantization step
    checkpoint_hash u64     hash of the checkpoint both sides must load
    then per frame:
    frame_type     u8       0 intra, 1 inter
    substream_count u8
    per substream: u32 length, payload bytes

Raw video files are planar 8-bit RGB (frames concatenated, channel plane
by plane); Y4M files are parsed as three-plane containers with explicit
dimensions, and the planes are treated as generic channels without any
color conversion.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CONTAINER_MAGIC = b"HSTM"
CONTAINER_VERSION = 1

__all__ = [
    "ContainerError", "StreamHeader", "FrameRecord",
    "write_stream", "read_stream",
    "read_video", "write_video", "to_unit", "from_unit",
]


class ContainerError(ValueError):
    pass


@dataclass
class StreamHeader:
    width: int
    height: int
    frame_count: int
    intra_period: int
    qs_global: float
    checkpoint_hash: int
    ablation_bits: int = 0
    version: int = CONTAINER_VERSION

    def __post_init__(self):
        if self.qs_global <= 0:
            raise ContainerError("qs_global must be positive")
        if not 1 <= self.intra_period <= 255:
            raise ContainerError("intra_period must fit in a u8 and be >= 1")


@dataclass
class FrameRecord:
    frame_type: int            # 0 intra, 1 inter
    substreams: list           # list of bytes

    def __post_init__(self):
        if self.frame_type not in (0, 1):
            raise ContainerError(f"unknown frame type {self.frame_type}")


def write_stream(header: StreamHeader, records: list) -> bytes:
    if len(records) != header.frame_count:
        raise ContainerError(
            f"header says {header.frame_count} frames, got {len(records)} records")
    buf = bytearray()
    buf += CONTAINER_MAGIC
    buf += struct.pack("<BHHHBB", header.version, header.width, header.height,
                       header.frame_count, header.intra_period, header.ablation_bits)
    buf += struct.pack("<fQ", header.qs_global, header.checkpoint_hash)
    for rec in records:
        buf += struct.pack("<BB", rec.frame_type, len(rec.substreams))
        for sub in rec.substreams:
            buf += struct.pack("<I", len(sub))
            buf += sub
    return bytes(buf)


def read_stream(data: bytes) -> tuple[StreamHeader, list]:
    if data[:4] != CONTAINER_MAGIC:
        raise ContainerError("bad container magic")
    off = 4
    try:
        version, width, height, count, period, abits = struct.unpack_from("<BHHHBB", data, off)
        off += 9
        qs_global, ck_hash = struct.unpack_from("<fQ", data, off)
        off += 12
        if version != CONTAINER_VERSION:
            raise ContainerError(f"unsupported container version {version}")
        header = StreamHeader(width=width, height=height, frame_count=count,
                              intra_period=period, qs_global=float(qs_global),
                              checkpoint_hash=ck_hash, ablation_bits=abits,
                              version=version)
        records = []
        for _ in range(count):
            ftype, nsub = struct.unpack_from("<BB", data, off)
            off += 2
            subs = []
            for _ in range(nsub):
                n, = struct.unpack_from("<I", data, off)
                off += 4
                if off + n > len(data):
                    raise ContainerError("substream extends past end of file")
                subs.append(data[off:off + n])
                off += n
            records.append(FrameRecord(frame_type=ftype, substreams=subs))
    except struct.error as exc:
        raise ContainerError(f"truncated container: {exc}") from exc
    if off != len(data):
        raise ContainerError(f"{len(data) - off} trailing bytes after last frame")
    return header, records


# ---------------------------------------------------------------------------
# raw video files
# ---------------------------------------------------------------------------


def to_unit(frame_u8: np.ndarray) -> np.ndarray:
    """8-bit plane values to [0, 1] doubles."""
    return frame_u8.astype(np.float64) / 255.0


def from_unit(frame: np.ndarray) -> np.ndarray:
    """[0, 1] doubles to 8-bit, rounding to nearest."""
    return np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)


def _read_y4m(data: bytes) -> list:
    newline = data.index(b"\n")
    fields = data[:newline].split(b" ")
    if fields[0] != b"YUV4MPEG2":
        raise ContainerError("not a Y4M file")
    width = height = None
    for f in fields[1:]:
        if f.startswith(b"W"):
            width = int(f[1:])
        elif f.startswith(b"H"):
            height = int(f[1:])
        elif f.startswith(b"C") and f not in (b"C444",):
            raise ContainerError(f"unsupported Y4M chroma mode {f.decode()}; only C444")
    if width is None or height is None:
        raise ContainerError("Y4M header lacks dimensions")
    frames = []
    off = newline + 1
    plane = width * height
    while off < len(data):
        marker_end = data.index(b"\n", off)
        if data[off:off + 5] != b"FRAME":
            raise ContainerError("malformed Y4M frame marker")
        off = marker_end + 1
        if off + 3 * plane > len(data):
            raise ContainerError("Y4M frame data truncated")
        raw = np.frombuffer(data, dtype=np.uint8, count=3 * plane, offset=off)
        frames.append(to_unit(raw.reshape(3, height, width)))
        off += 3 * plane
    return frames


def _write_y4m(frames: list) -> bytes:
    _, h, w = frames[0].shape
    out = bytearray(f"YUV4MPEG2 W{w} H{h} F25:1 C444\n".encode())
    for f in frames:
        out += b"FRAME\n"
        out += from_unit(f).tobytes()
    return bytes(out)


def read_video(path, width: int | None = None, height: int | None = None) -> list:
    """Load frames from a .y4m file or a raw planar RGB8 file.

    Raw files carry no dimensions, so ``width`` and ``height`` are
    required for them; the file size must be an exact multiple of one
    frame.  Returns a list of (3, h, w) float arrays in [0, 1].
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if str(path).endswith(".y4m") or data[:9] == b"YUV4MPEG2":
        return _read_y4m(data)
    if width is None or height is None:
        raise ContainerError("raw video needs explicit --width and --height")
    frame_bytes = 3 * width * height
    if frame_bytes == 0 or len(data) % frame_bytes != 0:
        raise ContainerError(
            f"file size {len(data)} is not a multiple of frame size {frame_bytes}")
    count = len(data) // frame_bytes
    arr = np.frombuffer(data, dtype=np.uint8).reshape(count, 3, height, width)
    return [to_unit(f) for f in arr]


def write_video(path, frames: list):
    """Write frames as .y4m (by extension) or raw planar RGB8."""
    if not frames:
        raise ContainerError("no frames to write")
    if str(path).endswith(".y4m"):
        blob = _write_y4m(frames)
    else:
        blob = b"".join(from_unit(f).tobytes() for f in frames)
    with open(path, "wb") as fh:
        fh.write(blob)
