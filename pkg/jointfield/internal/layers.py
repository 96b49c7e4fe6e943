# ***********************************************************
# |docname| - Dense tensors and the layers the networks need
# ***********************************************************
# This is a deliberately small engine: the fixed set of layers used by the networks (convolution, ReLU, max pooling, fully connected, channel concatenation), each with a hand-written backward pass, plus plain SGD. Everything is ``float64``, so finite-difference checks of the backward passes are meaningful.
#
# Tensors are numpy arrays laid out as ``(N, H, W, C)``: a batch of ``H x W`` rasters with ``C`` channels. Every layer also accepts a single ``(H, W, C)`` raster and returns one.
#
# Convolutions use the im2col idea: `sliding_window_view <https://numpy.org/doc/stable/reference/generated/numpy.lib.stride_tricks.sliding_window_view.html>`_ exposes every kernel footprint as an extra pair of axes without copying, then ``einsum`` contracts them against the kernels.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, TypeVar

# Third-party imports
# -------------------
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
import numpy.typing as npt

# Local application imports
# -------------------------
from ..exceptions import NumericError, ShapeError


# Types
# =====
Tensor = npt.NDArray[np.float64]
PADDING_MODES = ("same", "valid")


# The parameters of one layer. Kernels are out-channel-major: ``(out, in, kh, kw)``. A fully-connected layer stores its matrix as ``(out, in, 1, 1)``.
@dataclass
class LayerParams:
    kernels: Tensor
    biases: Tensor

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.kernels.ndim != 4:
            raise ShapeError(f"Kernels must be 4-D (out, in, kh, kw); got shape {self.kernels.shape}.")
        if self.biases.shape != (self.kernels.shape[0],):
            raise ShapeError(
                f"Biases of shape {self.biases.shape} don't match kernels of shape {self.kernels.shape}."
            )

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @classmethod
    def zeros(cls, out_ch: int, in_ch: int, kh: int = 1, kw: int = 1) -> "LayerParams":
        return cls(np.zeros((out_ch, in_ch, kh, kw)), np.zeros(out_ch))

    def copy(self) -> "LayerParams":
        return LayerParams(self.kernels.copy(), self.biases.copy())

    def equals(self, other: "LayerParams") -> bool:
        return np.array_equal(self.kernels, other.kernels) and np.array_equal(
            self.biases, other.biases
        )


# Gradient accumulators with exactly the shapes of the `LayerParams` they belong to.
@dataclass
class GradTape:
    kernels: Tensor
    biases: Tensor

    @classmethod
    def zeros_like(cls, params: LayerParams) -> "GradTape":
        return cls(np.zeros_like(params.kernels), np.zeros_like(params.biases))

    def accumulate(self, other: "GradTape") -> None:
        if other.kernels.shape != self.kernels.shape:
            raise ShapeError(
                f"Can't accumulate gradients of shape {other.kernels.shape} into {self.kernels.shape}."
            )
        self.kernels += other.kernels
        self.biases += other.biases

    def scaled(self, factor: float) -> "GradTape":
        return GradTape(self.kernels * factor, self.biases * factor)


# Initialization
# ==============
# ``gaussian`` draws from N(0, std²); ``he`` uses std = sqrt(2 / fan_in). Biases start at zero.
def init_layer(
    rng: np.random.Generator,
    out_ch: int,
    in_ch: int,
    kh: int = 1,
    kw: int = 1,
    scheme: str = "gaussian",
    std: float = 0.001,
) -> LayerParams:
    if scheme == "he":
        std = float(np.sqrt(2.0 / (in_ch * kh * kw)))
    elif scheme != "gaussian":
        raise ValueError(f"Unknown initialization scheme '{scheme}'.")
    return LayerParams(rng.normal(0.0, std, size=(out_ch, in_ch, kh, kw)), np.zeros(out_ch))


# Helpers
# =======
T = TypeVar("T")


# Run ``op`` on a 4-D view of ``x``; if ``x`` was a single raster, drop the batch axis from the (first) result.
def _batched(x: Tensor, op: Callable[[Tensor], T]) -> T:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 4:
        return op(x)
    if x.ndim != 3:
        raise ShapeError(f"Expected an (H, W, C) or (N, H, W, C) tensor; got shape {x.shape}.")
    result = op(x[np.newaxis])
    if isinstance(result, tuple):
        return tuple([result[0][0], *result[1:]])  # type: ignore
    return result[0]  # type: ignore


def _check_finite(t: Tensor, what: str) -> Tensor:
    if not np.isfinite(t).all():
        raise NumericError(f"{what} produced non-finite values.")
    return t


def _check_upstream(upstream: Tensor, expected: Tuple[int, ...], what: str) -> Tensor:
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != expected:
        raise ShapeError(
            f"{what}: upstream gradient shape {upstream.shape} doesn't match the forward output shape {expected}."
        )
    return upstream


# Return the output size and the (before, after) zero padding along one axis.
def _geometry(size: int, k: int, stride: int, padding: str) -> Tuple[int, Tuple[int, int]]:
    if stride < 1:
        raise ShapeError(f"Stride must be at least 1; got {stride}.")
    if padding == "valid":
        out = (size - k) // stride + 1
        if size < k:
            raise ShapeError(f"Kernel extent {k} exceeds input extent {size} under valid padding.")
        return out, (0, 0)
    if padding != "same":
        raise ShapeError(f"Unknown padding mode '{padding}'; use one of {PADDING_MODES}.")
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, (total // 2, total - total // 2)


# Convolution
# ===========
def conv2d(x: Tensor, params: LayerParams, stride: int = 1, padding: str = "same") -> Tensor:
    return _batched(x, lambda x4: _conv2d(x4, params, stride, padding)[0])


# Returns the output plus the padded windows, which the backward pass reuses.
def _conv2d(x4: Tensor, params: LayerParams, stride: int, padding: str):
    n, h, w, c = x4.shape
    out_ch, in_ch, kh, kw = params.kernels.shape
    if c != in_ch:
        raise ShapeError(
            f"conv2d: input has {c} channels but the kernels expect {in_ch} (kernel shape {params.kernels.shape})."
        )
    oh, (pt, pb) = _geometry(h, kh, stride, padding)
    ow, (pl, pr) = _geometry(w, kw, stride, padding)
    xp = np.pad(x4, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :oh, :ow]
    out = np.einsum("nhwcij,ocij->nhwo", windows, params.kernels, optimize=True)
    out += params.biases
    return _check_finite(out, "conv2d"), windows, xp.shape, (pt, pl)


def conv2d_backward(
    x: Tensor,
    params: LayerParams,
    upstream_grad: Tensor,
    stride: int = 1,
    padding: str = "same",
) -> Tuple[Tensor, GradTape]:
    def op(x4: Tensor):
        out, windows, padded_shape, (pt, pl) = _conv2d(x4, params, stride, padding)
        g = _check_upstream(
            upstream_grad if np.ndim(upstream_grad) == 4 else np.asarray(upstream_grad)[np.newaxis],
            out.shape,
            "conv2d_backward",
        )
        oh, ow = out.shape[1:3]
        kh, kw = params.kernels.shape[2:]
        tape = GradTape(
            np.einsum("nhwcij,nhwo->ocij", windows, g, optimize=True),
            g.sum(axis=(0, 1, 2)),
        )
        dxp = np.zeros(padded_shape)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride, :] += (
                    g @ params.kernels[:, :, i, j]
                )
        dx = dxp[:, pt : pt + x4.shape[1], pl : pl + x4.shape[2], :]
        return _check_finite(dx, "conv2d_backward"), tape

    return _batched(x, op)


# Pointwise layers
# ================
def relu(x: Tensor) -> Tensor:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: Tensor, upstream_grad: Tensor) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    g = _check_upstream(upstream_grad, x.shape, "relu_backward")
    return g * (x > 0)


# Max pooling
# ===========
# Non-overlapping when ``stride == window``; no padding.
def _pool_windows(x4: Tensor, window: int, stride: int):
    n, h, w, c = x4.shape
    if window > h or window > w:
        raise ShapeError(f"maxpool: window {window} is larger than the {h}x{w} input.")
    oh, _ = _geometry(h, window, stride, "valid")
    ow, _ = _geometry(w, window, stride, "valid")
    windows = sliding_window_view(x4, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    return windows[:, :oh, :ow].reshape(n, oh, ow, c, window * window)


def maxpool(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    return _batched(x, lambda x4: _pool_windows(x4, window, stride).max(axis=-1))


def maxpool_backward(x: Tensor, upstream_grad: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    def op(x4: Tensor) -> Tensor:
        flat = _pool_windows(x4, window, stride)
        n, oh, ow, c, _ = flat.shape
        g = _check_upstream(
            upstream_grad if np.ndim(upstream_grad) == 4 else np.asarray(upstream_grad)[np.newaxis],
            (n, oh, ow, c),
            "maxpool_backward",
        )
        di, dj = np.divmod(flat.argmax(axis=-1), window)
        nn, yy, xx, cc = np.indices((n, oh, ow, c))
        dx = np.zeros_like(x4)
        # Overlapping windows may route several gradients to one input; ``add.at`` accumulates them.
        np.add.at(dx, (nn, yy * stride + di, xx * stride + dj, cc), g)
        return dx

    return _batched(x, op)


# Fully connected
# ===============
# The input is flattened in row-major ``(H, W, C)`` order; the output is ``(N, 1, 1, out)``.
def fully_connected(x: Tensor, params: LayerParams) -> Tensor:
    def op(x4: Tensor) -> Tensor:
        flat = x4.reshape(x4.shape[0], -1)
        if flat.shape[1] != params.in_channels:
            raise ShapeError(
                f"fully_connected: input of shape {x4.shape[1:]} has {flat.shape[1]} values; the layer expects {params.in_channels}."
            )
        out = flat @ params.kernels[:, :, 0, 0].T + params.biases
        return _check_finite(out, "fully_connected")[:, np.newaxis, np.newaxis, :]

    return _batched(x, op)


def fully_connected_backward(
    x: Tensor, params: LayerParams, upstream_grad: Tensor
) -> Tuple[Tensor, GradTape]:
    def op(x4: Tensor):
        flat = x4.reshape(x4.shape[0], -1)
        g = np.asarray(upstream_grad, dtype=np.float64).reshape(x4.shape[0], -1)
        if g.shape[1] != params.out_channels:
            raise ShapeError(
                f"fully_connected_backward: upstream gradient has {g.shape[1]} values per item; the layer has {params.out_channels} outputs."
            )
        tape = GradTape((g.T @ flat)[:, :, np.newaxis, np.newaxis], g.sum(axis=0))
        dx = (g @ params.kernels[:, :, 0, 0]).reshape(x4.shape)
        return dx, tape

    return _batched(x, op)


# Channel concatenation
# =====================
def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_channels: spatial shapes differ, {a.shape} vs {b.shape}.")
    return np.concatenate([a, b], axis=-1)


# Split a tensor along the channel axis into pieces of the given widths.
def split_channels(x: Tensor, widths: Sequence[int]) -> Tuple[Tensor, ...]:
    if sum(widths) != x.shape[-1]:
        raise ShapeError(f"Can't split {x.shape[-1]} channels into widths {tuple(widths)}.")
    return tuple(np.split(x, np.cumsum(widths)[:-1], axis=-1))


def concat_channels_backward(upstream_grad: Tensor, a_channels: int) -> Tuple[Tensor, Tensor]:
    g = np.asarray(upstream_grad, dtype=np.float64)
    a, b = split_channels(g, (a_channels, g.shape[-1] - a_channels))
    return a, b


# Optimization
# ============
def sgd_step(params: LayerParams, grads: GradTape, lr: float) -> LayerParams:
    if lr < 0:
        raise ValueError(f"The learning rate must not be negative; got {lr}.")
    if grads.kernels.shape != params.kernels.shape:
        raise ShapeError(
            f"sgd_step: gradient shape {grads.kernels.shape} doesn't match parameter shape {params.kernels.shape}."
        )
    return LayerParams(params.kernels - lr * grads.kernels, params.biases - lr * grads.biases)
