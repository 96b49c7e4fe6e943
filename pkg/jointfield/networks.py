# *************************************
# |docname| - The cooperating networks
# *************************************
# Three kinds of networks share the work:
#
# -   `GlobalDepthNet` maps a whole log-domain image to a log depth map at 1/16 of its linear size.
# -   `GradientNets` maps an image patch to depth gradients (2 channels) and to albedo and shading gradients (6 channels each). The depth and intrinsic branches swap their conv2 activations: each branch's conv3 sees its own activations concatenated with its peer's. Albedo and shading share conv1 through conv3 (the "stem") and split for conv4 and conv5.
# -   `ScaleNet` maps squared gradient magnitudes of the guidance images to a per-pixel confidence in (-1, 1), one per predicted gradient channel.
#
# Gradient and scale nets use "same" padding; at 35x35 input, only the concentric 19x19 output patch is used. Whole images are processed as overlapping 35x35 tiles whose 19x19 centers are averaged where they overlap.
#
# Channel widths are the full-size widths divided by ``width_divisor``.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

# Third-party imports
# -------------------
import numpy as np

# Local application imports
# -------------------------
from .exceptions import ShapeError
from .imaging import GradientField, MultiChannelImage, bilinear_resize
from .internal.layers import (
    GradTape,
    LayerParams,
    Tensor,
    concat_channels,
    conv2d,
    conv2d_backward,
    fully_connected,
    fully_connected_backward,
    init_layer,
    maxpool,
    maxpool_backward,
    relu,
    relu_backward,
    sgd_step,
    split_channels,
)


# Globals
# =======
PATCH_SIZE = 35
OUTPUT_PATCH_SIZE = 19
# Offset of the output patch inside the input patch.
PATCH_MARGIN = (PATCH_SIZE - OUTPUT_PATCH_SIZE) // 2
# The global net halves resolution four times.
GLOBAL_DOWNSCALE = 16

# Full-size widths before ``width_divisor``.
GLOBAL_CONV_WIDTHS = (96, 256, 384, 384, 256)
# FC1 is halved on top of the divisor; the 1/16 map it feeds holds only a few dozen values at desk scale.
GLOBAL_FC1_WIDTH = 2048
GRADIENT_CONV1_WIDTH = 96
GRADIENT_WIDTH = 64
SCALE_WIDTH = 64

# Checkpoint set names, in checkpoint order.
SET_NAMES = (
    "global_depth",
    "depth_gradient",
    "albedo_gradient",
    "shading_gradient",
    "depth_scale",
    "albedo_scale",
    "shading_scale",
)

# Gradients per named layer of one parameter set.
Grads = Dict[str, GradTape]
Params = Dict[str, LayerParams]


# Scale activation
# ================
# ``f(x) = (1 - exp(1 - x)) / (1 + exp(1 - x))``, which is ``tanh((x - 1) / 2)``; the tanh form doesn't overflow.
def scale_activation(x):
    return np.tanh((np.asarray(x, dtype=np.float64) - 1.0) / 2.0)


def scale_activation_backward(x: Tensor, upstream_grad: Tensor) -> Tensor:
    f = scale_activation(x)
    return upstream_grad * 0.5 * (1.0 - f**2)


def scale_activation_inverse(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(np.abs(y) >= 1):
        raise ValueError("The scale activation only reaches values strictly inside (-1, 1).")
    return 1.0 - np.log((1.0 - y) / (1.0 + y))


# Layer chains
# ============
# A network here is a few straight chains of layers. Each layer may be followed by a ReLU and then a 2x2 max pool.
@dataclass(frozen=True)
class LayerSpec:
    name: str
    kh: int
    kw: int
    in_ch: int
    out_ch: int
    stride: int = 1
    padding: str = "same"
    relu: bool = True
    pool: bool = False
    fc: bool = False
    # Layers with the same group id are one set of weights used by several networks.
    share_group: str = "-"


# What each layer saw on the way forward: its input, its pre-activation, and its activation before pooling.
Trace = List[Tuple[Tensor, Tensor, Tensor]]


def run_chain(specs: Sequence[LayerSpec], params: Mapping[str, LayerParams], x: Tensor) -> Tuple[Tensor, Trace]:
    trace: Trace = []
    for spec in specs:
        p = params[spec.name]
        z = fully_connected(x, p) if spec.fc else conv2d(x, p, spec.stride, spec.padding)
        a = relu(z) if spec.relu else z
        trace.append((x, z, a))
        x = maxpool(a) if spec.pool else a
    return x, trace


def backprop_chain(
    specs: Sequence[LayerSpec], params: Mapping[str, LayerParams], trace: Trace, upstream_grad: Tensor
) -> Tuple[Tensor, Grads]:
    grads: Grads = {}
    g = upstream_grad
    for spec, (x, z, a) in zip(reversed(specs), reversed(trace)):
        p = params[spec.name]
        if spec.pool:
            g = maxpool_backward(a, g)
        if spec.relu:
            g = relu_backward(z, g)
        if spec.fc:
            g, grads[spec.name] = fully_connected_backward(x, p, g)
        else:
            g, grads[spec.name] = conv2d_backward(x, p, g, spec.stride, spec.padding)
    return g, grads


def init_chain(specs: Iterable[LayerSpec], rng: np.random.Generator, scheme: str, std: float) -> Params:
    return {
        s.name: init_layer(rng, s.out_ch, s.in_ch, s.kh, s.kw, scheme, std) for s in specs
    }


def check_params(set_name: str, specs: Iterable[LayerSpec], params: Mapping[str, LayerParams]) -> None:
    for s in specs:
        p = params.get(s.name)
        expected = (s.out_ch, s.in_ch, s.kh, s.kw)
        if p is None:
            raise ShapeError(f"{set_name}: missing layer '{s.name}'.")
        if p.kernels.shape != expected:
            raise ShapeError(f"{set_name}.{s.name}: kernels have shape {p.kernels.shape}; expected {expected}.")


def apply_grads(
    params: Params, grads: Grads, lr: float, final_layer: Optional[str] = None, lr_final: Optional[float] = None
) -> Params:
    return {
        name: sgd_step(
            p,
            grads[name],
            lr_final if name == final_layer and lr_final is not None else lr,
        )
        if name in grads
        else p
        for name, p in params.items()
    }


def _w(base: int, divisor: int) -> int:
    return max(1, base // divisor)


def _as_batch(x: Tensor) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    return x[np.newaxis] if x.ndim == 3 else x


# Global depth net
# ================
def global_specs(height: int, width: int, divisor: int) -> List[LayerSpec]:
    c1, c2, c3, c4, c5 = (_w(c, divisor) for c in GLOBAL_CONV_WIDTHS)
    cells = (height // GLOBAL_DOWNSCALE) * (width // GLOBAL_DOWNSCALE)
    fc1 = _w(GLOBAL_FC1_WIDTH, divisor)
    return [
        # Stride 2 rather than 4: desk-scale images are small.
        LayerSpec("conv1", 11, 11, 3, c1, stride=2, pool=True),
        LayerSpec("conv2", 5, 5, c1, c2, pool=True),
        LayerSpec("conv3", 3, 3, c2, c3),
        LayerSpec("conv4", 3, 3, c3, c4),
        LayerSpec("conv5", 3, 3, c4, c5, pool=True),
        LayerSpec("fc1", 1, 1, cells * c5, fc1, fc=True),
        LayerSpec("fc2", 1, 1, fc1, cells, relu=False, fc=True),
    ]


@dataclass
class GlobalDepthNet:
    # The native input size; any other size is resampled by `predict_coarse_depth`.
    height: int
    width: int
    params: Params
    width_divisor: int = 4

    def __post_init__(self):
        if self.height < GLOBAL_DOWNSCALE or self.width < GLOBAL_DOWNSCALE:
            raise ShapeError(
                f"The global depth net needs at least {GLOBAL_DOWNSCALE}x{GLOBAL_DOWNSCALE} input; got {self.height}x{self.width}."
            )
        self.specs = global_specs(self.height, self.width, self.width_divisor)
        check_params("global_depth", self.specs, self.params)

    @classmethod
    def create(
        cls, rng: np.random.Generator, height: int, width: int, width_divisor: int = 4, scheme: str = "gaussian", std: float = 0.001
    ) -> "GlobalDepthNet":
        return cls(height, width, init_chain(global_specs(height, width, width_divisor), rng, scheme, std), width_divisor)

    @property
    def coarse_hw(self) -> Tuple[int, int]:
        return self.height // GLOBAL_DOWNSCALE, self.width // GLOBAL_DOWNSCALE

    # ``x`` is a batch of log images ``(N, H, W, 3)`` at the native size; the result is ``(N, H/16, W/16, 1)``.
    def forward(self, x: Tensor) -> Tuple[Tensor, Trace]:
        x = _as_batch(x)
        if x.shape[1:] != (self.height, self.width, 3):
            raise ShapeError(
                f"The global depth net takes ({self.height}, {self.width}, 3) images; got {x.shape[1:]}."
            )
        out, trace = run_chain(self.specs, self.params, x)
        return out.reshape(x.shape[0], *self.coarse_hw, 1), trace

    def backward(self, trace: Trace, upstream_grad: Tensor) -> Grads:
        g = np.asarray(upstream_grad).reshape(upstream_grad.shape[0], 1, 1, -1)
        return backprop_chain(self.specs, self.params, trace, g)[1]


def global_depth_forward(img: MultiChannelImage, net: GlobalDepthNet) -> Tensor:
    return net.forward(img.values)[0][0]


# Run the global net on an image of any size: resample to the native size, predict, then upsample the 1/16 map back to the image's size. This upsampled map is the depth unary target and the extra input channel of the depth gradient net.
def predict_coarse_depth(img: MultiChannelImage, net: GlobalDepthNet) -> Tensor:
    native = bilinear_resize(img, (net.height, net.width))
    coarse = global_depth_forward(native, net)
    return bilinear_resize(coarse, img.hw).values


# Gradient nets
# =============
@dataclass(frozen=True)
class GradientSpecs:
    depth_front: List[LayerSpec]
    depth_back: List[LayerSpec]
    stem_front: List[LayerSpec]
    stem_back: List[LayerSpec]
    albedo_head: List[LayerSpec]
    shading_head: List[LayerSpec]

    # Specs per checkpoint set; the shading set lists the stem layers it shares.
    def sets(self) -> Dict[str, List[LayerSpec]]:
        stem = self.stem_front + self.stem_back
        return {
            "depth_gradient": self.depth_front + self.depth_back,
            "albedo_gradient": stem + self.albedo_head,
            "shading_gradient": stem + self.shading_head,
        }


def gradient_specs(divisor: int) -> GradientSpecs:
    c1 = _w(GRADIENT_CONV1_WIDTH, divisor)
    c = _w(GRADIENT_WIDTH, divisor)
    return GradientSpecs(
        # The depth branch sees the log image plus the upsampled coarse depth.
        depth_front=[LayerSpec("conv1", 11, 11, 4, c1), LayerSpec("conv2", 3, 3, c1, c)],
        depth_back=[
            LayerSpec("conv3", 3, 3, 2 * c, c),
            LayerSpec("conv4", 3, 3, c, c),
            LayerSpec("conv5", 3, 3, c, 2, relu=False),
        ],
        stem_front=[
            LayerSpec("conv1", 11, 11, 3, c1, share_group="intrinsic_stem"),
            LayerSpec("conv2", 3, 3, c1, c, share_group="intrinsic_stem"),
        ],
        stem_back=[LayerSpec("conv3", 3, 3, 2 * c, c, share_group="intrinsic_stem")],
        albedo_head=[LayerSpec("conv4", 3, 3, c, c), LayerSpec("conv5", 3, 3, c, 6, relu=False)],
        shading_head=[LayerSpec("conv4", 3, 3, c, c), LayerSpec("conv5", 3, 3, c, 6, relu=False)],
    )


# Per-group gradients of `GradientNets`: ``depth``, ``stem``, ``albedo`` and ``shading``.
GradientNetGrads = Dict[str, Grads]


@dataclass
class GradientTrace:
    peers_live: bool
    depth_front: Trace
    stem_front: Trace
    depth_back: Trace
    stem_back: Trace
    albedo: Trace
    shading: Trace


@dataclass
class GradientNets:
    depth: Params
    stem: Params
    albedo: Params
    shading: Params
    width_divisor: int = 4
    specs: GradientSpecs = field(init=False)

    GROUPS = ("depth", "stem", "albedo", "shading")

    def __post_init__(self):
        self.specs = gradient_specs(self.width_divisor)
        check_params("depth_gradient", self.specs.depth_front + self.specs.depth_back, self.depth)
        check_params("intrinsic stem", self.specs.stem_front + self.specs.stem_back, self.stem)
        check_params("albedo_gradient", self.specs.albedo_head, self.albedo)
        check_params("shading_gradient", self.specs.shading_head, self.shading)

    @classmethod
    def create(cls, rng: np.random.Generator, width_divisor: int = 4, scheme: str = "gaussian", std: float = 0.001) -> "GradientNets":
        s = gradient_specs(width_divisor)
        return cls(
            init_chain(s.depth_front + s.depth_back, rng, scheme, std),
            init_chain(s.stem_front + s.stem_back, rng, scheme, std),
            init_chain(s.albedo_head, rng, scheme, std),
            init_chain(s.shading_head, rng, scheme, std),
            width_divisor,
        )

    def group(self, name: str) -> Params:
        return getattr(self, name)

    @property
    def conv2_width(self) -> int:
        return self.specs.depth_front[-1].out_ch

    # ``x`` is ``(N, h, w, 4)``: log image channels then the upsampled coarse depth. Returns the full-size depth, albedo and shading outputs.
    def forward(self, x: Tensor, peers_live: bool = True) -> Tuple[Tuple[Tensor, Tensor, Tensor], GradientTrace]:
        x = _as_batch(x)
        if x.shape[-1] != 4:
            raise ShapeError(f"Gradient nets take 4 input channels (log RGB + coarse depth); got {x.shape[-1]}.")
        s = self.specs
        a_d, t_df = run_chain(s.depth_front, self.depth, x)
        a_i, t_sf = run_chain(s.stem_front, self.stem, x[..., :3])
        peer_d = a_i if peers_live else np.zeros_like(a_i)
        peer_i = a_d if peers_live else np.zeros_like(a_d)
        out_d, t_db = run_chain(s.depth_back, self.depth, concat_channels(a_d, peer_d))
        h_i, t_sb = run_chain(s.stem_back, self.stem, concat_channels(a_i, peer_i))
        out_a, t_a = run_chain(s.albedo_head, self.albedo, h_i)
        out_s, t_s = run_chain(s.shading_head, self.shading, h_i)
        return (out_d, out_a, out_s), GradientTrace(peers_live, t_df, t_sf, t_db, t_sb, t_a, t_s)

    # Backpropagate upstream gradients of the three outputs. In live mode, each branch's conv2 also receives the gradient its activations picked up as the other branch's peer input.
    def backward(self, trace: GradientTrace, g_d: Tensor, g_a: Tensor, g_s: Tensor) -> GradientNetGrads:
        s = self.specs
        c = self.conv2_width
        dh_a, grads_a = backprop_chain(s.albedo_head, self.albedo, trace.albedo, g_a)
        dh_s, grads_s = backprop_chain(s.shading_head, self.shading, trace.shading, g_s)
        dx_i, grads_sb = backprop_chain(s.stem_back, self.stem, trace.stem_back, dh_a + dh_s)
        dx_d, grads_db = backprop_chain(s.depth_back, self.depth, trace.depth_back, g_d)
        da_d, dpeer_d = split_channels(dx_d, (c, c))
        da_i, dpeer_i = split_channels(dx_i, (c, c))
        if trace.peers_live:
            da_d = da_d + dpeer_i
            da_i = da_i + dpeer_d
        _, grads_df = backprop_chain(s.depth_front, self.depth, trace.depth_front, da_d)
        _, grads_sf = backprop_chain(s.stem_front, self.stem, trace.stem_front, da_i)
        return {
            "depth": {**grads_df, **grads_db},
            "stem": {**grads_sf, **grads_sb},
            "albedo": grads_a,
            "shading": grads_s,
        }

    # Apply one SGD step; conv5 of every branch uses ``lr_final``.
    def step(self, grads: GradientNetGrads, lr: float, lr_final: float) -> "GradientNets":
        return GradientNets(
            apply_grads(self.depth, grads["depth"], lr, "conv5", lr_final),
            apply_grads(self.stem, grads["stem"], lr),
            apply_grads(self.albedo, grads["albedo"], lr, "conv5", lr_final),
            apply_grads(self.shading, grads["shading"], lr, "conv5", lr_final),
            self.width_divisor,
        )

    def param_sets(self) -> Dict[str, Params]:
        return {
            "depth_gradient": dict(self.depth),
            "albedo_gradient": {**self.stem, **self.albedo},
            "shading_gradient": {**self.stem, **self.shading},
        }

    @classmethod
    def from_param_sets(cls, sets: Mapping[str, Mapping[str, LayerParams]], width_divisor: int = 4) -> "GradientNets":
        stem_names = ("conv1", "conv2", "conv3")
        albedo, shading = sets["albedo_gradient"], sets["shading_gradient"]
        for name in stem_names:
            if name not in albedo or name not in shading:
                raise ShapeError(f"Intrinsic gradient sets are missing shared layer '{name}'.")
            if not albedo[name].equals(shading[name]):
                raise ShapeError(f"The albedo and shading copies of shared layer '{name}' differ.")
        return cls(
            dict(sets["depth_gradient"]),
            {n: albedo[n] for n in stem_names},
            {n: p for n, p in albedo.items() if n not in stem_names},
            {n: p for n, p in shading.items() if n not in stem_names},
            width_divisor,
        )


def crop_center(t: Tensor, size: int = OUTPUT_PATCH_SIZE) -> Tensor:
    h, w = t.shape[-3:-1]
    y0, x0 = (h - size) // 2, (w - size) // 2
    return t[..., y0 : y0 + size, x0 : x0 + size, :]


# Embed a gradient for the cropped output back into a full-size zero gradient.
def uncrop_center(g: Tensor, full_hw: Tuple[int, int]) -> Tensor:
    h, w = full_hw
    size = g.shape[-2]
    y0, x0 = (h - size) // 2, (w - size) // 2
    out = np.zeros(g.shape[:-3] + (h, w, g.shape[-1]))
    out[..., y0 : y0 + size, x0 : x0 + size, :] = g
    return out


# Scale nets
# ==========
SCALE_INPUTS = {"depth": 9, "albedo": 7, "shading": 7}
SCALE_OUTPUTS = {"depth": 2, "albedo": 6, "shading": 6}


def scale_specs(role: str, divisor: int) -> List[LayerSpec]:
    c = _w(SCALE_WIDTH, divisor)
    return [
        LayerSpec("conv1", 3, 3, SCALE_INPUTS[role], c, relu=False),
        LayerSpec("conv2", 3, 3, c, c, relu=False),
        LayerSpec("conv3", 1, 1, c, SCALE_OUTPUTS[role], relu=False),
    ]


@dataclass
class ScaleNet:
    role: str
    params: Params
    # While true, the confidence is exactly 1 everywhere and the parameters are ignored.
    bypass: bool = True
    width_divisor: int = 4

    def __post_init__(self):
        if self.role not in SCALE_INPUTS:
            raise ValueError(f"Unknown scale net role '{self.role}'.")
        self.specs = scale_specs(self.role, self.width_divisor)
        check_params(f"{self.role}_scale", self.specs, self.params)

    @classmethod
    def create(
        cls, role: str, rng: np.random.Generator, width_divisor: int = 4, scheme: str = "gaussian", std: float = 0.001
    ) -> "ScaleNet":
        return cls(role, init_chain(scale_specs(role, width_divisor), rng, scheme, std), True, width_divisor)

    @property
    def in_channels(self) -> int:
        return SCALE_INPUTS[self.role]

    @property
    def out_channels(self) -> int:
        return SCALE_OUTPUTS[self.role]

    # Leave bypass. The final bias is set so that a zero response maps to ``confidence``.
    def release(self, confidence: float = 0.95) -> "ScaleNet":
        params = dict(self.params)
        last = params["conv3"]
        params["conv3"] = LayerParams(last.kernels, np.full_like(last.biases, scale_activation_inverse(confidence)))
        return ScaleNet(self.role, params, False, self.width_divisor)

    def forward(self, x: Tensor) -> Tuple[Tensor, Trace, Tensor]:
        x = _as_batch(x)
        if x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"The {self.role} scale net takes {self.in_channels} channels; got {x.shape[-1]}."
            )
        if self.bypass:
            return np.ones(x.shape[:-1] + (self.out_channels,)), [], np.zeros(0)
        pre, trace = run_chain(self.specs, self.params, x)
        return scale_activation(pre), trace, pre

    def backward(self, trace: Trace, pre: Tensor, upstream_grad: Tensor) -> Grads:
        if self.bypass:
            return {name: GradTape.zeros_like(p) for name, p in self.params.items()}
        return backprop_chain(self.specs, self.params, trace, scale_activation_backward(pre, upstream_grad))[1]

    def step(self, grads: Grads, lr: float) -> "ScaleNet":
        return ScaleNet(self.role, apply_grads(self.params, grads, lr), self.bypass, self.width_divisor)


# Whole-image application
# =======================
# Cover an image with 35x35 tiles, run ``fn`` on all tiles as one batch, and average the concentric 19x19 outputs where they overlap. ``fn`` maps ``(N, 35, 35, C)`` to a tuple of ``(N, 35, 35, C_k)`` outputs. The image is edge-replicated by the 8-pixel margin (and further, for images smaller than one output patch).
def tile_apply(
    fn: Callable[[Tensor], Sequence[Tensor]], values: Tensor, stride: int = OUTPUT_PATCH_SIZE
) -> List[Tensor]:
    if not 1 <= stride <= OUTPUT_PATCH_SIZE:
        raise ValueError(f"Tile stride must be between 1 and {OUTPUT_PATCH_SIZE}; got {stride}.")
    h, w = values.shape[:2]
    hh, ww = max(h, OUTPUT_PATCH_SIZE), max(w, OUTPUT_PATCH_SIZE)
    m = PATCH_MARGIN
    padded = np.pad(values, ((m, m + hh - h), (m, m + ww - w), (0, 0)), mode="edge")

    def starts(n: int) -> List[int]:
        s = list(range(0, n - OUTPUT_PATCH_SIZE + 1, stride))
        if s[-1] != n - OUTPUT_PATCH_SIZE:
            s.append(n - OUTPUT_PATCH_SIZE)
        return s

    positions = [(y, x) for y in starts(hh) for x in starts(ww)]
    tiles = np.stack([padded[y : y + PATCH_SIZE, x : x + PATCH_SIZE] for y, x in positions])
    outputs = fn(tiles)

    results = []
    count = np.zeros((hh, ww, 1))
    for y, x in positions:
        count[y : y + OUTPUT_PATCH_SIZE, x : x + OUTPUT_PATCH_SIZE] += 1
    for out in outputs:
        acc = np.zeros((hh, ww, out.shape[-1]))
        centers = crop_center(out)
        for (y, x), center in zip(positions, centers):
            acc[y : y + OUTPUT_PATCH_SIZE, x : x + OUTPUT_PATCH_SIZE] += center
        results.append((acc / count)[:h, :w])
    return results


# Predict the depth, albedo and shading gradient fields of a whole image.
def gradient_net_forward(
    image: Tensor,
    # The upsampled coarse log depth, ``(H, W, 1)``.
    coarse_depth: Tensor,
    nets: GradientNets,
    peers_live: bool = True,
    stride: int = OUTPUT_PATCH_SIZE,
) -> Tuple[GradientField, GradientField, GradientField]:
    x = np.concatenate([image, coarse_depth], axis=-1)
    d, a, s = tile_apply(lambda tiles: nets.forward(tiles, peers_live)[0], x, stride)
    return GradientField.from_channels(d), GradientField.from_channels(a), GradientField.from_channels(s)


# Confidences for a whole image from its guidance stack of squared gradient magnitudes.
def scale_net_forward(guidance: Tensor, net: ScaleNet, stride: int = OUTPUT_PATCH_SIZE) -> Tensor:
    guidance = np.asarray(guidance, dtype=np.float64)
    if guidance.shape[-1] != net.in_channels:
        raise ShapeError(f"The {net.role} scale net takes {net.in_channels} channels; got {guidance.shape[-1]}.")
    if net.bypass:
        return np.ones(guidance.shape[:2] + (net.out_channels,))
    return tile_apply(lambda tiles: (net.forward(tiles)[0],), guidance, stride)[0]


# Topology manifest
# =================
# One line per layer: set, layer, kernel, in, out, stride, padding, share group.
def topology_lines(height: int, width: int, divisor: int) -> List[str]:
    sets: Dict[str, List[LayerSpec]] = {"global_depth": global_specs(height, width, divisor)}
    sets.update(gradient_specs(divisor).sets())
    for role in ("depth", "albedo", "shading"):
        sets[f"{role}_scale"] = scale_specs(role, divisor)
    lines = []
    for set_name in SET_NAMES:
        for s in sets[set_name]:
            kind = "fc" if s.fc else "conv"
            lines.append(
                f"{set_name} {s.name} {kind} {s.kh}x{s.kw} {s.in_ch} {s.out_ch} {s.stride} {s.padding} {s.share_group}"
            )
    return lines
