"""Bit-exact 64-bit range coder over 16-bit cumulative frequency tables.

The encoder keeps a 64-bit (low, range) window and emits 32-bit words.
Carries ripple directly into the emitted word buffer, which sidesteps the
classic cache/pending-FF machinery.  The decoder is the standard
subtractive variant and needs no carry handling.

Flush picks the smallest multiple of 2^32 inside the final interval so the
trailing window bytes are implied zeros; the decoder transparently pads a
bounded number of zero bytes when the stream runs out, and raises on
anything past that bound (a truncated stream).
"""

from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

from .laplace import CdfRows, CdfTable, TOTAL, build_cdf_rows, clamp_to_support

MASK64 = (1 << 64) - 1
WORD = 1 << 32

# one inherent over-read word plus up to 8 flush-stripped zero bytes
_MAX_PAD_BYTES = 12

__all__ = ["Bitstream", "RangeEncoder", "RangeDecoder", "DecodeError",
           "encode_symbols", "decode_symbols", "encode_with_scales", "decode_with_scales"]


class DecodeError(ValueError):
    pass


class Bitstream:
    """Byte payload with a read cursor."""

    def __init__(self, data: bytes = b""):
        self.data = data
        self.pos = 0

    def __len__(self):
        return len(self.data)

    def __eq__(self, other):
        return isinstance(other, Bitstream) and self.data == other.data


class RangeEncoder:
    def __init__(self):
        self._words: list[int] = []
        self._low = 0
        self._range = MASK64

    def encode(self, cum: int, freq: int):
        """Narrow the interval to [cum, cum + freq) / 2^16."""
        r = self._range >> 16
        self._low += cum * r
        if self._low > MASK64:
            self._low &= MASK64
            self._ripple_carry()
        self._range = r * freq
        while self._range < WORD:
            self._words.append(self._low >> 32)
            self._low = (self._low << 32) & MASK64
            self._range <<= 32

    def _ripple_carry(self):
        words = self._words
        i = len(words) - 1
        while True:
            w = words[i] + 1
            if w == WORD:
                words[i] = 0
                i -= 1
            else:
                words[i] = w
                break

    def finish(self) -> bytes:
        # smallest multiple of 2^32 in [low, low + range); range >= 2^32
        # guarantees it exists, and its low word is an implied zero
        v = (self._low + WORD - 1) & ~(WORD - 1)
        if v > MASK64:
            self._ripple_carry()
            v = 0
        self._words.append(v >> 32)
        out = b"".join(w.to_bytes(4, "big") for w in self._words)
        stripped = 0
        while stripped < 8 and out.endswith(b"\x00"):
            out = out[:-1]
            stripped += 1
        return out


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._pad = 0
        self._range = MASK64
        self._code = (self._read_word() << 32) | self._read_word()

    def _read_word(self) -> int:
        chunk = self._data[self._pos:self._pos + 4]
        self._pos += 4
        if len(chunk) < 4:
            self._pad += 4 - len(chunk)
            if self._pad > _MAX_PAD_BYTES:
                raise DecodeError("range-coded stream is truncated")
            chunk = chunk + b"\x00" * (4 - len(chunk))
        return int.from_bytes(chunk, "big")

    def target(self) -> int:
        """Cumulative-frequency value of the next symbol, in [0, 2^16)."""
        t = self._code // (self._range >> 16)
        return t if t < TOTAL else TOTAL - 1

    def advance(self, cum: int, freq: int):
        r = self._range >> 16
        self._code -= cum * r
        self._range = r * freq
        if self._code >= self._range:
            raise DecodeError("range-coder state diverged (corrupt stream)")
        while self._range < WORD:
            self._code = (self._code << 32) | self._read_word()
            self._range <<= 32


def _as_rows(tables) -> CdfRows:
    if isinstance(tables, CdfRows):
        return tables
    # sequence of CdfTable: align on a shared grid
    tabs = list(tables)
    max_h = max(t.symbol_max for t in tabs) if tabs else 2
    width = 2 * max_h + 1
    cum = np.zeros((len(tabs), width + 1), dtype=np.int64)
    half = np.zeros(len(tabs), dtype=np.int64)
    for i, t in enumerate(tabs):
        lo = t.symbol_min + max_h
        cum[i, lo + 1:lo + len(t.cumulative)] = t.cumulative[1:]
        cum[i, lo + len(t.cumulative):] = t.cumulative[-1]
        half[i] = t.symbol_max
    return CdfRows(cum=cum, offset=max_h, halfwidth=half)


_CHUNK = 1 << 16


def encode_symbols(symbols, tables) -> Bitstream:
    """Range-encode integer symbols, one table per symbol.

    Symbols are saturated into each table's support first; callers that
    need the reconstruction must clamp identically (the quantizer does).
    """
    rows = _as_rows(tables)
    syms = clamp_to_support(np.asarray(symbols).reshape(-1), rows)
    if len(syms) != len(rows):
        raise ValueError(f"{len(syms)} symbols but {len(rows)} tables")
    enc = RangeEncoder()
    _encode_into(enc, syms, rows)
    return Bitstream(enc.finish())


def _encode_into(enc: RangeEncoder, syms: np.ndarray, rows: CdfRows):
    idx = (syms + rows.offset).astype(np.int64)
    rng = np.arange(len(syms))
    cums = rows.cum[rng, idx].tolist()
    freqs = (rows.cum[rng, idx + 1] - rows.cum[rng, idx]).tolist()
    # RangeEncoder.encode unrolled with local state; the method-call cost
    # dominates at millions of symbols
    low = enc._low
    span = enc._range
    words = enc._words
    append = words.append
    for cum, freq in zip(cums, freqs):
        r = span >> 16
        low += cum * r
        if low > MASK64:
            low &= MASK64
            i = len(words) - 1
            while True:
                w = words[i] + 1
                if w == WORD:
                    words[i] = 0
                    i -= 1
                else:
                    words[i] = w
                    break
        span = r * freq
        while span < WORD:
            append(low >> 32)
            low = (low << 32) & MASK64
            span <<= 32
    enc._low = low
    enc._range = span


def decode_symbols(stream: Bitstream, tables, count: int | None = None) -> np.ndarray:
    """Inverse of :func:`encode_symbols`; returns int64 symbols."""
    rows = _as_rows(tables)
    if count is None:
        count = len(rows)
    if count != len(rows):
        raise ValueError(f"asked for {count} symbols but given {len(rows)} tables")
    dec = RangeDecoder(stream.data)
    out = _decode_from(dec, rows)
    stream.pos = len(stream.data)
    return out


def _decode_from(dec: RangeDecoder, rows: CdfRows) -> np.ndarray:
    count = len(rows)
    out = np.empty(count, dtype=np.int64)
    cum = rows.cum
    off = rows.offset
    if rows.scale is not None:
        # seed the symbol search with the analytic Laplace quantile, then
        # walk the handful of steps the count quantization can shift it.
        # RangeDecoder.target/advance are unrolled with local state; the
        # method-call cost dominates at millions of symbols
        scales = rows.scale.tolist()
        half = rows.halfwidth.tolist()
        log = math.log
        data = dec._data
        pos = dec._pos
        pad = dec._pad
        code = dec._code
        span = dec._range
        from_bytes = int.from_bytes
        for i in range(count):
            r = span >> 16
            t = code // r
            if t >= TOTAL:
                t = TOTAL - 1
            b = scales[i]
            p = (t + 0.5) / TOTAL
            if p < 0.5:
                guess = b * log(2.0 * p)
            else:
                guess = -b * log(2.0 * (1.0 - p))
            h = half[i]
            k = int(guess) + off
            if k < off - h:
                k = off - h
            elif k > off + h:
                k = off + h
            row = cum[i]
            while row[k] > t:
                k -= 1
            while row[k + 1] <= t:
                k += 1
            ck = int(row[k])
            code -= ck * r
            span = r * (int(row[k + 1]) - ck)
            if code >= span:
                raise DecodeError("range-coder state diverged (corrupt stream)")
            while span < WORD:
                chunk = data[pos:pos + 4]
                pos += 4
                if len(chunk) < 4:
                    pad += 4 - len(chunk)
                    if pad > _MAX_PAD_BYTES:
                        raise DecodeError("range-coded stream is truncated")
                    chunk = chunk + b"\x00" * (4 - len(chunk))
                code = (code << 32) | from_bytes(chunk, "big")
                span <<= 32
            out[i] = k
        dec._pos = pos
        dec._pad = pad
        dec._code = code
        dec._range = span
    else:
        pos = 0
        for start in range(0, count, _CHUNK):
            cum_rows = cum[start:start + _CHUNK].tolist()
            for row in cum_rows:
                t = dec.target()
                k = bisect_right(row, t) - 1
                freq = row[k + 1] - row[k]
                if freq <= 0:
                    raise DecodeError("decoded target fell outside the table support")
                dec.advance(row[k], freq)
                out[pos] = k
                pos += 1
    return out - off


def encode_with_scales(symbols, b: np.ndarray) -> tuple[Bitstream, np.ndarray]:
    """Build tables from scales, encode, and return (stream, coded symbols).

    Works in blocks so that table memory stays bounded for long streams;
    the coder state itself runs uninterrupted across blocks.
    """
    symbols = np.asarray(symbols).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if len(symbols) != len(b):
        raise ValueError(f"{len(symbols)} symbols but {len(b)} scales")
    enc = RangeEncoder()
    coded = np.empty(len(symbols), dtype=np.int64)
    for start in range(0, len(symbols), _CHUNK):
        rows = build_cdf_rows(b[start:start + _CHUNK])
        chunk = clamp_to_support(symbols[start:start + _CHUNK], rows)
        coded[start:start + _CHUNK] = chunk
        _encode_into(enc, chunk, rows)
    return Bitstream(enc.finish()), coded


def decode_with_scales(stream: Bitstream, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    dec = RangeDecoder(stream.data)
    out = np.empty(len(b), dtype=np.int64)
    for start in range(0, len(b), _CHUNK):
        rows = build_cdf_rows(b[start:start + _CHUNK])
        out[start:start + _CHUNK] = _decode_from(dec, rows)
    stream.pos = len(stream.data)
    return out
