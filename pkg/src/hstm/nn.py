"""Layers, parameter containers, the Adam optimizer, and checkpoint files.

Checkpoint layout (little-endian throughout):

    magic   4 bytes  b"HSTW"
    version u8       (currently 1)
    cfg_len u32      length of a UTF-8 JSON blob describing the model config
    cfg     bytes
    count   u32      number of parameters
    per parameter:
        name_len u16, name utf-8
        ndim     u8, dims u32 each
        values   float64 little-endian, C order

The 64-bit checkpoint hash used in stream headers is the first 8 bytes of
the SHA-256 of the whole file, read as a little-endian integer.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .tensor import Parameter, Tensor, conv2d, conv2d_transpose

CHECKPOINT_MAGIC = b"HSTW"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class Module:
    """Minimal parameter container with named traversal."""

    def parameters(self) -> list[Parameter]:
        params = []
        seen = set()
        for _, p in self.named_parameters():
            if id(p) not in seen:
                seen.add(id(p))
                params.append(p)
        return params

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}" if prefix else key
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _kaiming(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape)


class Conv2d(Module):
    def __init__(self, in_c: int, out_c: int, kernel: int, stride: int = 1,
                 padding: int = 0, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(_kaiming(rng, (out_c, in_c, kernel, kernel), in_c * kernel * kernel))
        self.bias = Parameter(np.zeros(out_c))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_c: int, out_c: int, kernel: int, stride: int = 1,
                 padding: int = 0, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(_kaiming(rng, (in_c, out_c, kernel, kernel), in_c * kernel * kernel))
        self.bias = Parameter(np.zeros(out_c))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_transpose(x, self.weight, self.bias, self.stride, self.padding)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x) if isinstance(layer, Module) else layer(x)
        return x

    def named_parameters(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Module):
                yield from layer.named_parameters(prefix=f"{prefix}layers.{i}.")


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.01):
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        return x.leaky_relu(self.slope)


class Adam:
    """First-order adaptive-moment optimizer (defaults lr 1e-4)."""

    def __init__(self, params: list[Parameter], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# checkpoint io
# ---------------------------------------------------------------------------


def serialize_checkpoint(named_params, config: dict | None = None) -> bytes:
    items = list(named_params)
    cfg = json.dumps(config or {}, sort_keys=True).encode()
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<B", CHECKPOINT_VERSION)
    buf += struct.pack("<I", len(cfg))
    buf += cfg
    buf += struct.pack("<I", len(items))
    for name, p in items:
        raw = name.encode()
        buf += struct.pack("<H", len(raw))
        buf += raw
        buf += struct.pack("<B", p.data.ndim)
        for d in p.data.shape:
            buf += struct.pack("<I", d)
        buf += np.ascontiguousarray(p.data, dtype="<f8").tobytes()
    return bytes(buf)


def deserialize_checkpoint(blob: bytes):
    """Return (config dict, {name: ndarray})."""
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    off = 4
    version, = struct.unpack_from("<B", blob, off)
    off += 1
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg_len, = struct.unpack_from("<I", blob, off)
    off += 4
    config = json.loads(blob[off:off + cfg_len].decode())
    off += cfg_len
    count, = struct.unpack_from("<I", blob, off)
    off += 4
    values = {}
    for _ in range(count):
        name_len, = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + name_len].decode()
        off += name_len
        ndim, = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(dims)
        off += 8 * size
        values[name] = arr.astype(np.float64)
    return config, values


def checkpoint_hash(blob: bytes) -> int:
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def save_checkpoint(path, model: Module, config: dict | None = None) -> int:
    blob = serialize_checkpoint(model.named_parameters(), config)
    with open(path, "wb") as fh:
        fh.write(blob)
    return checkpoint_hash(blob)


def load_checkpoint_blob(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def load_into(model: Module, values: dict[str, np.ndarray]):
    for name, p in model.named_parameters():
        if name not in values:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        arr = values[name]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"parameter {name!r} shape {arr.shape} does not match model {p.data.shape}")
        p.data = arr.copy()
