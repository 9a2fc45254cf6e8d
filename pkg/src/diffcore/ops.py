"""
Differentiable Primitives
Neural-network operations on Tensors: convolution, pooling, activations,
normalization, attention pieces and distances. Images are NHWC
(batch, height, width, channels) and conv kernels are (kh, kw, c_in, c_out).

Arithmetic, matmul, reductions and movement ops live on Tensor itself.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from src.diffcore.tensor import Tensor
from src.errors import InvalidInputError, ShapeError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def op_catalog() -> frozenset:
    """Names of every differentiable primitive the engine provides."""
    return frozenset({
        "add", "sub", "mul", "div", "neg", "matmul", "exp", "log", "abs", "square",
        "sum", "mean", "reshape", "transpose", "index", "astype",
        "concat", "conv2d", "avg_pool2d", "max_pool2d", "relu", "gelu",
        "softmax", "layer_norm", "dropout", "embedding", "l1_distance", "linear",
    })


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x)."""
    v = x.data
    cdf = 0.5 * (1.0 + erf(v / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
    out = (v * cdf).astype(v.dtype)
    return Tensor.make(out, (x,), lambda g: (g * (cdf + v * pdf),), "gelu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor.make(y, (x,), backward, "softmax")


# ---------------------------------------------------------------------------
# Normalization / regularization
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor = None, beta: Tensor = None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the optional affine (gamma, beta)."""
    v = x.data
    n = v.shape[-1]
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv_std

    out = xhat
    parents = [x]
    if gamma is not None:
        if gamma.shape != (n,):
            raise ShapeError(f"layer_norm: gamma shape {gamma.shape} != ({n},)")
        out = out * gamma.data
        parents.append(gamma)
    if beta is not None:
        if beta.shape != (n,):
            raise ShapeError(f"layer_norm: beta shape {beta.shape} != ({n},)")
        out = out + beta.data
        parents.append(beta)
    lead = tuple(range(v.ndim - 1))

    def backward(g):
        gxhat = g * gamma.data if gamma is not None else g
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=lead))
        if beta is not None:
            grads.append(g.sum(axis=lead))
        return tuple(grads)

    return Tensor.make(out.astype(v.dtype), tuple(parents), backward, "layer_norm")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator = None) -> Tensor:
    """Inverted dropout. Identity outside training or when p == 0."""
    if not 0.0 <= p < 1.0:
        raise InvalidInputError(f"dropout: probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise InvalidInputError("dropout: training mode needs an rng")
    mask = ((rng.random(x.shape) >= p) / (1.0 - p)).astype(x.dtype)
    return Tensor.make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# ---------------------------------------------------------------------------
# Shape helpers
# ---------------------------------------------------------------------------

def concat(tensors: list, axis: int = 0) -> Tensor:
    if not tensors:
        raise InvalidInputError("concat: nothing to concatenate")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax
        ):
            raise ShapeError(
                f"concat: shapes {[t.shape for t in tensors]} differ outside axis {axis}"
            )
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor.make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=ax)), "concat")


def embedding(table: Tensor, indices) -> Tensor:
    """Rows of table at integer indices; output shape indices.shape + (dim,)."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise InvalidInputError("embedding: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise InvalidInputError(f"embedding: index out of range for table of {table.shape[0]} rows")
    shape, dtype = table.shape, table.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor.make(table.data[idx], (table,), backward, "embedding")


# ---------------------------------------------------------------------------
# Convolution and pooling (NHWC)
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2D cross-correlation. x: (B, H, W, C_in), w: (kh, kw, C_in, C_out).
    Forward gathers windows with sliding_window_view; backward scatters
    one kernel offset at a time.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {w.shape}")
    B, H, W, C = x.shape
    kh, kw, c_in, c_out = w.shape
    if C != c_in:
        raise ShapeError(f"conv2d: input has {C} channels, kernel expects {c_in} ({x.shape} vs {w.shape})")
    if b is not None and b.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({c_out},)")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit input {H}x{W} with padding {padding}")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :Ho, :Wo]
    # windows: (B, Ho, Wo, C, kh, kw)
    out = np.tensordot(windows, w.data, axes=([4, 5, 3], [0, 1, 2]))
    if b is not None:
        out = out + b.data
    wdata = w.data

    def backward(g):
        gw = np.tensordot(windows, g, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :] += g @ wdata[i, j].T
        gx = gxp[:, padding:padding + H, padding:padding + W, :]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.make(out.astype(x.dtype), parents, backward, "conv2d")


def _pool_blocks(op: str, x: Tensor, k: int) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected NHWC input, got {x.shape}")
    B, H, W, C = x.shape
    if k < 1 or H % k or W % k:
        raise ShapeError(f"{op}: window {k} does not tile {H}x{W}")
    return x.data.reshape(B, H // k, k, W // k, k, C)


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k average pooling."""
    blocks = _pool_blocks("avg_pool2d", x, k)
    shape = x.shape

    def backward(g):
        spread = np.broadcast_to(g[:, :, None, :, None, :] / (k * k), blocks.shape)
        return (spread.reshape(shape),)

    return Tensor.make(blocks.mean(axis=(2, 4)), (x,), backward, "avg_pool2d")


def max_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k max pooling; ties share the gradient equally."""
    blocks = _pool_blocks("max_pool2d", x, k)
    peak = blocks.max(axis=(2, 4), keepdims=True)
    mask = (blocks == peak).astype(x.dtype)
    mask /= mask.sum(axis=(2, 4), keepdims=True)
    shape = x.shape

    def backward(g):
        return ((mask * g[:, :, None, :, None, :]).reshape(shape),)

    return Tensor.make(peak[:, :, 0, :, 0, :], (x,), backward, "max_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, H, W, C) -> (B, C)."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NHWC input, got {x.shape}")
    return x.mean(axis=(1, 2))


# ---------------------------------------------------------------------------
# Composites
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor = None) -> Tensor:
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {w.shape[0]}")
    out = x @ w
    return out + b if b is not None else out


def l1_distance(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Sum of absolute differences along axis."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_distance: shapes {a.shape} and {b.shape} differ")
    return (a - b).abs().sum(axis=axis)
