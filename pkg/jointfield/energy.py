# *************************************
# |docname| - Joint energy and losses
# *************************************
# The joint energy of depth ``D``, albedo ``A`` and shading ``S`` given an image ``I``:
#
# .. code-block:: text
#
#   E = |D - D*|^2                         (depth unary)
#     + |L (I - A - S)|^2                  (image formation unary)
#     + lambda_D |grad D - C_D o G_D|^2     (pairwise terms: gradients vs. guided gradients)
#     + lambda_A |grad A - C_A o G_A|^2
#     + lambda_S |grad S - C_S o G_S|^2
#
# where ``G`` are gradient-net predictions, ``C`` scale-net confidences, ``o`` the elementwise product and ``L`` the luminance weight. During coarse-to-fine inference, levels after the first add anchor terms ``|D - D_prev|^2`` and ``|A - A_prev|^2 + |S - S_prev|^2``.
#
# The training losses are the unary and pairwise terms with ground truth in place of the unknowns.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from dataclasses import dataclass, field
from typing import Collection, Dict, Optional

# Third-party imports
# -------------------
import numpy as np

# Local application imports
# -------------------------
from .config import EnergyConfig
from .exceptions import DomainError, ShapeError
from .imaging import Domain, GradientField, ImageLike, MultiChannelImage, box_downsample, forward_gradient
from .internal.layers import GradTape, Tensor
from .networks import (
    GLOBAL_DOWNSCALE,
    GlobalDepthNet,
    GradientNetGrads,
    GradientNets,
    Grads,
    ScaleNet,
    crop_center,
    uncrop_center,
)
from .synth import PatchBatch


# Energy terms
# ============
def _log_values(img: ImageLike, what: str) -> Tensor:
    if isinstance(img, MultiChannelImage):
        if img.domain is not Domain.log:
            raise DomainError(f"{what} must be a log-domain image.")
        return img.values
    return MultiChannelImage(img).values


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ.")


def unary_depth(d: ImageLike, d_pred: ImageLike) -> float:
    d, d_pred = _log_values(d, "D"), _log_values(d_pred, "D*")
    _same_shape(d, d_pred, "unary_depth")
    return float(np.sum((d - d_pred) ** 2))


def unary_intrinsic(i: ImageLike, a: ImageLike, s: ImageLike, lum: ImageLike) -> float:
    i, a, s = _log_values(i, "I"), _log_values(a, "A"), _log_values(s, "S")
    _same_shape(i, a, "unary_intrinsic")
    _same_shape(i, s, "unary_intrinsic")
    weight = lum.values if isinstance(lum, MultiChannelImage) else MultiChannelImage(lum).values
    if weight.shape[:2] != i.shape[:2] or weight.shape[2] != 1:
        raise ShapeError(f"unary_intrinsic: luminance shape {weight.shape} doesn't fit image shape {i.shape}.")
    return float(np.sum((weight * (i - a - s)) ** 2))


# ``sum |grad T - C o G|^2`` with the fields in their stacked channel layout.
def pairwise_term(target_grad: GradientField, confidence: Tensor, predicted_grad: GradientField) -> float:
    t = target_grad.to_channels()
    g = predicted_grad.to_channels()
    c = np.asarray(confidence, dtype=np.float64)
    _same_shape(t, g, "pairwise_term")
    _same_shape(t, c, "pairwise_term")
    return float(np.sum((t - c * g) ** 2))


def anchor_term(x: Tensor, prev: Optional[Tensor]) -> float:
    if prev is None:
        return 0.0
    _same_shape(x, prev, "anchor_term")
    return float(np.sum((x - prev) ** 2))


@dataclass(frozen=True)
class EnergyBreakdown:
    unary_depth: float
    unary_intrinsic: float
    pairwise_depth: float
    pairwise_albedo: float
    pairwise_shading: float
    anchor_depth: float = 0.0
    anchor_intrinsic: float = 0.0
    # Weights used for `total`.
    lambda_d: float = 1.0
    lambda_a: float = 0.1
    lambda_s: float = 0.1

    @property
    def total(self) -> float:
        return (
            self.unary_depth
            + self.unary_intrinsic
            + self.anchor_depth
            + self.anchor_intrinsic
            + self.lambda_d * self.pairwise_depth
            + self.lambda_a * self.pairwise_albedo
            + self.lambda_s * self.pairwise_shading
        )


# Current targets of one inference level: the network predictions with the confidences already applied, plus the anchors from the previous level.
@dataclass
class LevelTargets:
    image: Tensor
    lum: Tensor
    d_star: Tensor
    guided_depth: GradientField
    guided_albedo: GradientField
    guided_shading: GradientField
    d_prev: Optional[Tensor] = None
    a_prev: Optional[Tensor] = None
    s_prev: Optional[Tensor] = None


def joint_energy(config: EnergyConfig, t: LevelTargets, d: Tensor, a: Tensor, s: Tensor) -> EnergyBreakdown:
    ones_d = np.ones(t.guided_depth.shape[:2] + (2,))
    ones_i = np.ones(t.guided_albedo.shape[:2] + (6,))
    return EnergyBreakdown(
        unary_depth(d, t.d_star),
        unary_intrinsic(t.image, a, s, t.lum),
        pairwise_term(forward_gradient(d), ones_d, t.guided_depth),
        pairwise_term(forward_gradient(a), ones_i, t.guided_albedo),
        pairwise_term(forward_gradient(s), ones_i, t.guided_shading),
        anchor_term(d, t.d_prev),
        anchor_term(a, t.a_prev) + anchor_term(s, t.s_prev),
        config.lambda_d,
        config.lambda_a,
        config.lambda_s,
    )


# Training losses
# ===============
# The global depth loss: squared log-depth error against the ground truth at 1/16 scale, averaged over pixels and the batch.
def loss_global_depth(images: Tensor, depths: Tensor, net: GlobalDepthNet):
    images = np.asarray(images, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    if images.ndim == 3:
        images, depths = images[np.newaxis], depths[np.newaxis]
    if images.shape[0] == 0:
        raise ValueError("The batch is empty.")
    target = np.stack([box_downsample(dd, GLOBAL_DOWNSCALE) for dd in depths])
    out, trace = net.forward(images)
    _same_shape(out, target, "loss_global_depth")
    r = out - target
    loss = float(np.mean(r**2))
    return loss, net.backward(trace, 2.0 * r / r.size)


GRAD_NET = "grad_net"
SCALE_NET = "scale_net"
ROLES = ("depth", "albedo", "shading")


@dataclass
class PairwiseLoss:
    loss: float
    # Per role.
    losses: Dict[str, float]
    # Gradients for `GradientNets`, by group; all zero when the gradient nets are frozen.
    grad_net_grads: GradientNetGrads = field(default_factory=dict)
    # Gradients per scale net role; all zero when the scale nets are frozen.
    scale_net_grads: Dict[str, Grads] = field(default_factory=dict)


def _zero_grads(params) -> Grads:
    return {name: GradTape.zeros_like(p) for name, p in params.items()}


# One role's share of the pairwise loss, with what backpropagation needs.
@dataclass
class _RoleResidual:
    loss: float
    # Derivatives of the loss w.r.t. the cropped prediction and the cropped confidence.
    d_pred: Tensor
    d_conf: Tensor
    scale_trace: list
    scale_pre: Tensor
    conf_hw: tuple


def _pairwise_forward(batch: PatchBatch, nets: GradientNets, scale_nets: Dict[str, ScaleNet], peers_live: bool):
    n = len(batch)
    (out_d, out_a, out_s), g_trace = nets.forward(batch.net_input, peers_live)
    predicted = {"depth": out_d, "albedo": out_a, "shading": out_s}
    targets = {"depth": batch.depth_grad, "albedo": batch.albedo_grad, "shading": batch.shading_grad}
    guidance = {"depth": batch.guidance_depth, "albedo": batch.guidance_albedo, "shading": batch.guidance_shading}
    residuals = {}
    for role in ROLES:
        conf_full, s_trace, pre = scale_nets[role].forward(guidance[role])
        conf = crop_center(conf_full)
        pred = crop_center(predicted[role])
        _same_shape(pred, targets[role], f"pairwise loss ({role})")
        r = targets[role] - conf * pred
        residuals[role] = _RoleResidual(
            float(np.sum(r**2)) / n,
            -2.0 * conf * r / n,
            -2.0 * pred * r / n,
            s_trace,
            pre,
            conf_full.shape[1:3],
        )
    return residuals, g_trace


# Per-role pairwise loss without gradients; used to score rounds on a fixed patch set.
def evaluate_pairwise(
    batch: PatchBatch, nets: GradientNets, scale_nets: Dict[str, ScaleNet], peers_live: bool = True
) -> Dict[str, float]:
    residuals, _ = _pairwise_forward(batch, nets, scale_nets, peers_live)
    return {role: r.loss for role, r in residuals.items()}


# The pairwise training loss summed over depth, albedo and shading: ``|grad T - C o G|^2`` on the 19x19 output patches, summed over pixels and averaged over the batch. The confidence inputs are ground-truth gradient magnitudes. Exactly one of the gradient nets and the scale nets must be frozen; only the other one gets non-zero gradients.
def loss_pairwise(
    batch: PatchBatch,
    nets: GradientNets,
    scale_nets: Dict[str, ScaleNet],
    frozen: Collection[str],
    peers_live: bool = True,
) -> PairwiseLoss:
    frozen = set(frozen)
    if not frozen <= {GRAD_NET, SCALE_NET}:
        raise ValueError(f"Unknown frozen network(s): {sorted(frozen - {GRAD_NET, SCALE_NET})}.")
    if len(frozen) != 1:
        raise ValueError("Freeze exactly one of the gradient nets and the scale nets.")
    residuals, g_trace = _pairwise_forward(batch, nets, scale_nets, peers_live)
    result = PairwiseLoss(
        sum(r.loss for r in residuals.values()), {role: r.loss for role, r in residuals.items()}
    )
    if GRAD_NET in frozen:
        result.grad_net_grads = {g: _zero_grads(nets.group(g)) for g in GradientNets.GROUPS}
        for role, r in residuals.items():
            upstream = uncrop_center(r.d_conf, r.conf_hw)
            result.scale_net_grads[role] = scale_nets[role].backward(r.scale_trace, r.scale_pre, upstream)
    else:
        result.scale_net_grads = {role: _zero_grads(scale_nets[role].params) for role in ROLES}
        full_hw = batch.net_input.shape[1:3]
        result.grad_net_grads = nets.backward(
            g_trace,
            *(uncrop_center(residuals[role].d_pred, full_hw) for role in ROLES),
        )
    return result
