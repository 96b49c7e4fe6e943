# **********************************************
# |docname| - Images, gradients and pyramids
# **********************************************
# The image algebra every other module builds on. Color, albedo and shading images live in the log domain, where image formation is additive: ``I = A + S``. Depth is stored as log depth.
#
# Gradients are forward differences with a Neumann boundary: the x gradient in the last column and the y gradient in the last row are zero. `divergence_adjoint` is the exact transpose of `forward_gradient`, so ``<grad u, v> = <u, div_adj v>``; the screened Poisson systems in `solver.py` are assembled from the same operator.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple, Union

# Third-party imports
# -------------------
import numpy as np

# Local application imports
# -------------------------
from .exceptions import DomainError, ShapeError
from .internal.layers import Tensor


# Globals
# =======
# Offset used when mapping linear [0, 1] values to the log domain, so black maps to a finite value.
DELTA_LOG = 1e-4
# Rec. 601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
# The coarsest pyramid level must be at least this many pixels per side.
MIN_LEVEL_SIZE = 8


# Types
# =====
class Domain(Enum):
    linear = "linear"
    log = "log"


@dataclass(frozen=True)
class MultiChannelImage:
    # Shape ``(H, W, C)``. A 2-D array is promoted to one channel.
    values: Tensor
    domain: Domain = Domain.log

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3:
            raise ShapeError(f"An image must be (H, W) or (H, W, C); got shape {values.shape}.")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape  # type: ignore

    @property
    def hw(self) -> Tuple[int, int]:
        return self.values.shape[:2]  # type: ignore

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def with_values(self, values: Tensor) -> "MultiChannelImage":
        return MultiChannelImage(values, self.domain)


@dataclass(frozen=True)
class GradientField:
    gx: Tensor
    gy: Tensor
    boundary: str = "neumann"

    def __post_init__(self):
        if np.shape(self.gx) != np.shape(self.gy):
            raise ShapeError(f"gx shape {np.shape(self.gx)} differs from gy shape {np.shape(self.gy)}.")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.gx.shape  # type: ignore

    # Stack as ``2C`` channels: every x channel, then every y channel. For color that's ``(r x, g x, b x, r y, g y, b y)``, the layout the networks predict.
    def to_channels(self) -> Tensor:
        return np.concatenate([self.gx, self.gy], axis=-1)

    @classmethod
    def from_channels(cls, stacked: Tensor) -> "GradientField":
        stacked = np.asarray(stacked, dtype=np.float64)
        if stacked.shape[-1] % 2:
            raise ShapeError(f"A stacked gradient field needs an even channel count; got {stacked.shape[-1]}.")
        c = stacked.shape[-1] // 2
        return cls(stacked[..., :c], stacked[..., c:])

    # Hadamard product with a ``2C``-channel confidence in the `to_channels` layout.
    def scaled(self, confidence: Tensor) -> "GradientField":
        return GradientField.from_channels(self.to_channels() * confidence)


ImageLike = Union[MultiChannelImage, Tensor]


def _values(img: ImageLike) -> Tensor:
    return img.values if isinstance(img, MultiChannelImage) else MultiChannelImage(img).values


# Domain conversions
# ==================
def to_log(img: MultiChannelImage) -> MultiChannelImage:
    if img.domain is not Domain.linear:
        raise DomainError("to_log expects a linear-domain image.")
    return MultiChannelImage(np.log(img.values + DELTA_LOG), Domain.log)


def to_linear(img: MultiChannelImage) -> MultiChannelImage:
    if img.domain is not Domain.log:
        raise DomainError("to_linear expects a log-domain image.")
    return MultiChannelImage(np.clip(np.exp(img.values) - DELTA_LOG, 0.0, None), Domain.linear)


# Gradients
# =========
def gradient_channels(values: Tensor) -> Tensor:
    return forward_gradient(values).to_channels()


def forward_gradient(img: ImageLike) -> GradientField:
    u = _values(img)
    h, w = u.shape[:2]
    if h * w < 2:
        raise ShapeError(f"Can't take gradients of a {h}x{w} image.")
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return GradientField(gx, gy)


def divergence_adjoint(field: GradientField, domain: Domain = Domain.log) -> MultiChannelImage:
    out = np.zeros_like(field.gx)
    # Entries in the last column of gx (last row of gy) are ignored, matching the zero rows of the forward operator.
    gx = field.gx[:, :-1]
    out[:, :-1] -= gx
    out[:, 1:] += gx
    gy = field.gy[:-1, :]
    out[:-1, :] -= gy
    out[1:, :] += gy
    return MultiChannelImage(out, domain)


def squared_magnitude_channels(field: GradientField) -> MultiChannelImage:
    return MultiChannelImage(field.gx**2 + field.gy**2)


# Luminance
# =========
def luminance_weight(img_linear: MultiChannelImage, epsilon: float = 0.001) -> MultiChannelImage:
    if img_linear.domain is not Domain.linear:
        raise DomainError("luminance_weight needs the linear-domain image, not its log.")
    if img_linear.channels != 3:
        raise ShapeError(f"luminance_weight needs a 3-channel image; got {img_linear.channels} channels.")
    return MultiChannelImage(img_linear.values @ LUMA_WEIGHTS + epsilon, Domain.linear)


# Resampling
# ==========
# Average non-overlapping ``factor x factor`` blocks. Odd trailing rows or columns are dropped.
def box_downsample(values: Tensor, factor: int = 2) -> Tensor:
    values = _values(values)
    h, w, c = values.shape
    oh, ow = h // factor, w // factor
    if oh < 1 or ow < 1:
        raise ShapeError(f"Can't downsample a {h}x{w} image by {factor}.")
    blocks = values[: oh * factor, : ow * factor].reshape(oh, factor, ow, factor, c)
    return blocks.mean(axis=(1, 3))


# One axis of an align-corners-false bilinear resample: pixel centers sit at half-integers, and samples falling outside the source are clamped to the edge.
def _resample_axis(values: Tensor, out_size: int, axis: int) -> Tensor:
    in_size = values.shape[axis]
    if in_size == out_size:
        return values
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0, in_size - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, in_size - 1)
    t = src - i0
    shape = [1] * values.ndim
    shape[axis] = out_size
    t = t.reshape(shape)
    return np.take(values, i0, axis=axis) * (1 - t) + np.take(values, i1, axis=axis) * t


# Resample to ``(height, width)``; used both for upsampling between pyramid levels and for fitting images to the global net's input.
def bilinear_resize(img: ImageLike, target_hw: Tuple[int, int]) -> MultiChannelImage:
    domain = img.domain if isinstance(img, MultiChannelImage) else Domain.log
    values = _values(img)
    th, tw = target_hw
    if th < 1 or tw < 1:
        raise ShapeError(f"Invalid resize target {target_hw}.")
    return MultiChannelImage(_resample_axis(_resample_axis(values, th, 0), tw, 1), domain)


def build_pyramid(img: MultiChannelImage, levels: int) -> List[MultiChannelImage]:
    if levels < 1:
        raise ValueError(f"A pyramid needs at least one level; got {levels}.")
    h, w = img.hw
    scale = 2 ** (levels - 1)
    if h // scale < MIN_LEVEL_SIZE or w // scale < MIN_LEVEL_SIZE:
        raise ShapeError(
            f"A {h}x{w} image is too small for {levels} pyramid levels; the coarsest level would be smaller than {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}."
        )
    # Finest first while building, then reverse so index 0 is the coarsest.
    pyramid = [img]
    for _ in range(levels - 1):
        pyramid.append(img.with_values(box_downsample(pyramid[-1].values)))
    return pyramid[::-1]
