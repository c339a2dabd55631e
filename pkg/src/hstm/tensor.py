"""Dense-tensor numerical core with reverse-mode differentiation.

Tensors wrap numpy arrays in (c, h, w) layout (scalars and vectors are
allowed too).  The graph is recorded eagerly; calling ``backward()`` on a
scalar walks the tape in reverse topological order.  All reductions use a
fixed accumulation order so that encoder and decoder running the same
build produce bitwise-identical values.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "concat",
    "where_mask",
    "smooth_mode",
    "SmoothMode",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible, naming the offending dim."""


# When enabled, rounding and clamping sites run their surrogate (identity)
# forward so that finite differences agree with the recorded gradients.
_SMOOTH_MODE = [False]


class SmoothMode:
    """Context manager: run rounding/clamping forwards as identity."""

    def __enter__(self):
        _SMOOTH_MODE.append(True)
        return self

    def __exit__(self, *exc):
        _SMOOTH_MODE.pop()
        return False


def smooth_mode() -> bool:
    return _SMOOTH_MODE[-1]


def _as_array(x, dtype=np.float64) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(dtype, copy=False)
    return np.asarray(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self._done = False

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff -----------------------------------------------------------

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        if self._done:
            raise RuntimeError("backward() already called on this graph; rebuild it first")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
            node._done = True

    # -- arithmetic ---------------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = self._lift(other)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        out = Tensor(self.data / other.data, _parents=(self, other))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / (other.data ** 2), other.shape))

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, n: float):
        out = Tensor(self.data ** n, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * n * self.data ** (n - 1))
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], _parents=(self,))

        def bwd(g):
            full = np.zeros_like(self.data)
            full[idx] = g
            self._accumulate(full)

        out._backward = bwd
        return out

    # -- elementwise functions ---------------------------------------------

    def exp(self):
        val = np.exp(self.data)
        out = Tensor(val, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * val)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def abs(self):
        out = Tensor(np.abs(self.data), _parents=(self,))
        out._backward = lambda g: self._accumulate(g * np.sign(self.data))
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(val, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * val * (1.0 - val))
        return out

    def softplus(self):
        # log(1 + e^x), stable for large |x|
        val = np.logaddexp(0.0, self.data)
        sig = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(val, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * sig)
        return out

    def leaky_relu(self, slope: float = 0.01):
        mask = self.data >= 0
        out = Tensor(np.where(mask, self.data, slope * self.data), _parents=(self,))
        out._backward = lambda g: self._accumulate(g * np.where(mask, 1.0, slope))
        return out

    def maximum(self, floor: float):
        mask = self.data >= floor
        out = Tensor(np.where(mask, self.data, floor), _parents=(self,))
        out._backward = lambda g: self._accumulate(g * mask)
        return out

    def minimum(self, ceil: float):
        mask = self.data <= ceil
        out = Tensor(np.where(mask, self.data, ceil), _parents=(self,))
        out._backward = lambda g: self._accumulate(g * mask)
        return out

    def clamp_ste(self, lo: float, hi: float):
        """Clamp to [lo, hi] with identity gradient (straight-through)."""
        val = self.data if smooth_mode() else np.clip(self.data, lo, hi)
        out = Tensor(val, _parents=(self,))
        out._backward = lambda g: self._accumulate(g)
        return out

    def round_ste(self):
        """Round half away from zero; identity gradient (straight-through)."""
        val = self.data if smooth_mode() else round_half_away(self.data)
        out = Tensor(val, _parents=(self,))
        out._backward = lambda g: self._accumulate(g)
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self):
        out = Tensor(self.data.sum(), _parents=(self,))
        out._backward = lambda g: self._accumulate(np.broadcast_to(g, self.shape).copy())
        return out

    def mean(self):
        n = self.data.size
        out = Tensor(self.data.sum() / n, _parents=(self,))
        out._backward = lambda g: self._accumulate(np.broadcast_to(g / n, self.shape).copy())
        return out

    # -- spatial ops --------------------------------------------------------

    def conv2d(self, weights: "Tensor", bias: "Tensor", stride: int = 1, padding: int = 0):
        return conv2d(self, weights, bias, stride, padding)

    def conv2d_transpose(self, weights: "Tensor", bias: "Tensor", stride: int = 1, padding: int = 0):
        return conv2d_transpose(self, weights, bias, stride, padding)

    def avg_pool2(self):
        return avg_pool2(self)


class Parameter(Tensor):
    """A named, trainable tensor with a gradient accumulator."""

    __slots__ = ("name",)

    _counter = [0]

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True)
        if name is None:
            name = f"param_{Parameter._counter[0]}"
            Parameter._counter[0] += 1
        self.name = name

    def zero_grad(self):
        self.grad = None


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (deterministic)."""
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = Tensor(np.concatenate(datas, axis=axis), _parents=tuple(tensors))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    out._backward = bwd
    return out


def where_mask(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select ``a`` where the constant boolean mask holds, ``b`` elsewhere."""
    a = Tensor._lift(a)
    b = Tensor._lift(b)
    out = Tensor(np.where(mask, a.data, b.data), _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(mask, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(mask, 0.0, g), b.shape))

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _conv_out_dim(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Extract patches of ``x`` (c,h,w) into rows ordered (c, ki, kj).

    The column ordering fixes the accumulation order of the kernel window:
    channel-major, then kernel row, then kernel column.
    """
    c, h, w = x.shape
    oh = _conv_out_dim(h, kh, stride, pad)
    ow = _conv_out_dim(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    s = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(c, kh, kw, oh, ow),
        strides=(s[0], s[1], s[2], s[1] * stride, s[2] * stride),
        writeable=False,
    )
    cols = windows.reshape(c * kh * kw, oh * ow)
    return cols, oh, ow


def _col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patch rows back to an image; adjoint of ``_im2col``."""
    c, h, w = shape
    hp, wp = h + 2 * pad, w + 2 * pad
    oh = _conv_out_dim(h, kh, stride, pad)
    ow = _conv_out_dim(w, kw, stride, pad)
    img = np.zeros((c, hp, wp))
    cols = cols.reshape(c, kh, kw, oh, ow)
    for ki in range(kh):
        for kj in range(kw):
            img[:, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += cols[:, ki, kj]
    if pad:
        img = img[:, pad:hp - pad, pad:wp - pad]
    return img


def _check_conv_shapes(x: Tensor, weights: Tensor, in_axis: int):
    if x.ndim != 3:
        raise ShapeError(f"conv input must be (c, h, w), got shape {x.shape}")
    if weights.ndim != 4:
        raise ShapeError(f"conv weights must be 4-d, got shape {weights.shape}")
    if x.shape[0] != weights.shape[in_axis]:
        raise ShapeError(
            f"input channel dim {x.shape[0]} does not match weight "
            f"input-channel dim {weights.shape[in_axis]}"
        )


def conv2d(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d convolution (cross-correlation); weights are (out_c, in_c, kh, kw)."""
    _check_conv_shapes(x, weights, in_axis=1)
    out_c, in_c, kh, kw = weights.shape
    if bias.data.shape != (out_c,):
        raise ShapeError(f"bias shape {bias.data.shape} does not match out channels {out_c}")
    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    wmat = weights.data.reshape(out_c, in_c * kh * kw)
    val = (wmat @ cols).reshape(out_c, oh, ow) + bias.data[:, None, None]
    out = Tensor(val, _parents=(x, weights, bias))

    def bwd(g):
        gmat = g.reshape(out_c, oh * ow)
        if weights.requires_grad:
            weights._accumulate((gmat @ cols.T).reshape(weights.shape))
        if bias.requires_grad:
            bias._accumulate(gmat.sum(axis=1))
        if x.requires_grad:
            gcols = wmat.T @ gmat
            x._accumulate(_col2im(gcols, x.shape, kh, kw, stride, padding))

    out._backward = bwd
    return out


def conv2d_transpose(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution; weights are (in_c, out_c, kh, kw).

    Spatial relation is the inverse of conv2d:
    out = (in - 1) * stride - 2 * padding + kernel.
    """
    _check_conv_shapes(x, weights, in_axis=0)
    in_c, out_c, kh, kw = weights.shape
    if bias.data.shape != (out_c,):
        raise ShapeError(f"bias shape {bias.data.shape} does not match out channels {out_c}")
    c, h, w = x.shape
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"transposed conv output dims ({oh}, {ow}) are non-positive")
    wmat = weights.data.reshape(in_c, out_c * kh * kw)
    gcols = (wmat.T @ x.data.reshape(in_c, h * w))
    val = _col2im(gcols, (out_c, oh, ow), kh, kw, stride, padding)
    val = val + bias.data[:, None, None]
    out = Tensor(val, _parents=(x, weights, bias))

    def bwd(g):
        cols, goh, gow = _im2col(g, kh, kw, stride, padding)
        if weights.requires_grad:
            weights._accumulate((x.data.reshape(in_c, h * w) @ cols.reshape(out_c * kh * kw, h * w).T
                                 ).reshape(weights.shape))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))
        if x.requires_grad:
            x._accumulate((wmat @ cols.reshape(out_c * kh * kw, h * w)).reshape(x.shape))

    out._backward = bwd
    return out


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; dims must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got ({h}, {w})")
    val = x.data.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    out = Tensor(val, _parents=(x,))

    def bwd(g):
        gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        x._accumulate(gx)

    out._backward = bwd
    return out


def warp_bilinear(feature: Tensor, flow: Tensor) -> Tensor:
    """Warp ``feature`` (c,h,w) by ``flow`` (2,h,w) = (dx, dy) in pixels.

    Each output sample is the bilinear interpolation of the source at
    (j + dx, i + dy).  Sample coordinates are clamped to the image edge, so
    every input is valid.  Differentiable in both the feature and the flow.
    """
    if flow.shape[0] != 2:
        raise ShapeError(f"flow must have 2 channels, got {flow.shape[0]}")
    c, h, w = feature.shape
    if flow.shape[1:] != (h, w):
        raise ShapeError(f"flow spatial dims {flow.shape[1:]} do not match feature ({h}, {w})")
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = jj + flow.data[0]
    sy = ii + flow.data[1]
    cx = np.clip(sx, 0.0, w - 1.0)
    cy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cx - x0
    fy = cy - y0
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    f = feature.data
    val = (w00 * f[:, y0, x0] + w01 * f[:, y0, x1]
           + w10 * f[:, y1, x0] + w11 * f[:, y1, x1])
    out = Tensor(val, _parents=(feature, flow))

    # clamped coordinates have zero derivative w.r.t. the flow
    live_x = (sx > 0.0) & (sx < w - 1.0)
    live_y = (sy > 0.0) & (sy < h - 1.0)

    def bwd(g):
        if feature.requires_grad:
            gf = np.zeros_like(f)
            for weight, ys, xs in ((w00, y0, x0), (w01, y0, x1), (w10, y1, x0), (w11, y1, x1)):
                np.add.at(gf, (slice(None), ys, xs), g * weight)
            feature._accumulate(gf)
        if flow.requires_grad:
            dvx = (-(1 - fy) * f[:, y0, x0] + (1 - fy) * f[:, y0, x1]
                   - fy * f[:, y1, x0] + fy * f[:, y1, x1])
            dvy = (-(1 - fx) * f[:, y0, x0] - fx * f[:, y0, x1]
                   + (1 - fx) * f[:, y1, x0] + fx * f[:, y1, x1])
            gx = (g * dvx).sum(axis=0) * live_x
            gy = (g * dvy).sum(axis=0) * live_y
            flow._accumulate(np.stack([gx, gy]))

    out._backward = bwd
    return out
