# ****************************************************
# |docname| - Tests of the energy terms and training losses
# ****************************************************
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
# None.

# Third-party imports
# -------------------
import numpy as np
import pytest

# Local application imports
# -------------------------
from jointfield.config import EnergyConfig
from jointfield.energy import (
    GRAD_NET,
    ROLES,
    SCALE_NET,
    EnergyBreakdown,
    LevelTargets,
    anchor_term,
    evaluate_pairwise,
    joint_energy,
    loss_global_depth,
    loss_pairwise,
    pairwise_term,
    unary_depth,
    unary_intrinsic,
)
from jointfield.exceptions import DomainError, ShapeError
from jointfield.imaging import Domain, GradientField, MultiChannelImage
from jointfield.internal.layers import LayerParams
from jointfield.networks import GlobalDepthNet, GradientNets, ScaleNet, crop_center
from jointfield.synth import PatchBatch, sample_patches
from .gradcheck import check_sampled_kernels


# Energy terms
# ============
def test_unary_depth():
    assert unary_depth(np.array([[1.0, 2.0]]), np.zeros((1, 2))) == 5.0
    with pytest.raises(DomainError):
        unary_depth(MultiChannelImage(np.ones((1, 2, 1)), Domain.linear), np.zeros((1, 2)))
    with pytest.raises(ShapeError):
        unary_depth(np.zeros((2, 2)), np.zeros((1, 2)))


def test_unary_intrinsic():
    i = np.full((1, 1, 3), 1.0)
    a = np.full((1, 1, 3), 0.3)
    s = np.full((1, 1, 3), 0.2)
    # ``(2 * (1 - 0.3 - 0.2))^2`` for each of three channels.
    assert unary_intrinsic(i, a, s, np.full((1, 1, 1), 2.0)) == pytest.approx(3.0)
    assert unary_intrinsic(i, 0.5 * i, 0.5 * i, np.ones((1, 1, 1))) == 0.0
    with pytest.raises(ShapeError):
        unary_intrinsic(i, a, s, np.ones((1, 1, 3)))


def test_pairwise_term():
    target = GradientField(np.array([[[1.0], [1.0]]]), np.zeros((1, 2, 1)))
    predicted = GradientField(np.array([[[2.0], [2.0]]]), np.zeros((1, 2, 1)))
    assert pairwise_term(target, np.full((1, 2, 2), 0.5), predicted) == 0.0
    assert pairwise_term(target, np.ones((1, 2, 2)), predicted) == 2.0
    with pytest.raises(ShapeError):
        pairwise_term(target, np.ones((1, 2, 1)), predicted)


def test_anchor_term():
    assert anchor_term(np.ones((2, 2, 1)), None) == 0.0
    assert anchor_term(np.ones((2, 2, 1)), np.zeros((2, 2, 1))) == 4.0


def test_breakdown_total():
    e = EnergyBreakdown(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, lambda_d=1.0, lambda_a=0.1, lambda_s=0.1)
    assert e.total == pytest.approx(1 + 2 + 6 + 7 + 3 + 0.4 + 0.5)


def zero_targets(h, w):
    zero1 = GradientField(np.zeros((h, w, 1)), np.zeros((h, w, 1)))
    zero3 = GradientField(np.zeros((h, w, 3)), np.zeros((h, w, 3)))
    return LevelTargets(np.zeros((h, w, 3)), np.ones((h, w, 1)), np.zeros((h, w, 1)), zero1, zero3, zero3)


def test_joint_energy():
    t = zero_targets(4, 5)
    zeros = np.zeros((4, 5, 3))
    assert joint_energy(EnergyConfig(), t, np.zeros((4, 5, 1)), zeros, zeros).total == 0.0
    # A constant depth offset costs only in the unary term.
    e = joint_energy(EnergyConfig(), t, np.ones((4, 5, 1)), zeros, zeros)
    assert e.unary_depth == 20.0 and e.pairwise_depth == 0.0
    assert e.total == 20.0
    # So does a constant moved from shading to albedo, once the previous level anchors both.
    t.a_prev, t.s_prev = zeros, zeros
    moved = joint_energy(EnergyConfig(), t, np.zeros((4, 5, 1)), zeros + 0.5, zeros - 0.5)
    assert moved.unary_intrinsic == 0.0
    assert moved.anchor_intrinsic == pytest.approx(2 * 60 * 0.25)


# Global depth loss
# =================
def test_loss_global_depth_value(rng):
    net = GlobalDepthNet.create(rng, 32, 32, width_divisor=16)
    params = {name: LayerParams(np.zeros_like(p.kernels), np.zeros_like(p.biases)) for name, p in net.params.items()}
    b = np.array([0.5, 1.0, 1.5, 2.0])
    params["fc2"] = LayerParams(params["fc2"].kernels, b)
    net = GlobalDepthNet(32, 32, params, 16)
    images = rng.normal(size=(3, 32, 32, 3))
    depths = np.full((3, 32, 32, 1), 0.7)
    loss, grads = loss_global_depth(images, depths, net)
    # Averaged over the 2x2 map and the batch.
    assert loss == pytest.approx(np.mean((b - 0.7) ** 2))
    np.testing.assert_allclose(grads["fc2"].biases, 2 * (b - 0.7) / 4)


def test_loss_global_depth_errors(rng):
    net = GlobalDepthNet.create(rng, 32, 32, width_divisor=16)
    with pytest.raises(ValueError):
        loss_global_depth(np.zeros((0, 32, 32, 3)), np.zeros((0, 32, 32, 1)), net)
    with pytest.raises(ShapeError):
        loss_global_depth(np.zeros((1, 48, 32, 3)), np.zeros((1, 48, 32, 1)), net)


def test_loss_global_depth_gradients(rng):
    net = GlobalDepthNet.create(rng, 32, 32, width_divisor=16, scheme="he")
    images = rng.normal(size=(2, 32, 32, 3))
    depths = rng.normal(size=(2, 32, 32, 1))
    _, grads = loss_global_depth(images, depths, net)

    def loss(params):
        return loss_global_depth(images, depths, GlobalDepthNet(32, 32, params, 16))[0]

    for name in ("conv1", "conv4", "fc1"):
        check_sampled_kernels(loss, net.params, name, grads[name], rng, count=6)


# Pairwise loss
# =============
@pytest.fixture
def batch(scene):
    return PatchBatch.stack(sample_patches(scene, 2, 3))


@pytest.fixture
def nets(rng):
    return GradientNets.create(rng, width_divisor=16, scheme="he")


@pytest.fixture
def scale_nets(rng):
    return {role: ScaleNet.create(role, rng, width_divisor=16, scheme="he").release() for role in ROLES}


def bypassed(rng):
    return {role: ScaleNet.create(role, rng, width_divisor=16) for role in ROLES}


@pytest.mark.parametrize("frozen", [(), (GRAD_NET, SCALE_NET), ("global",)])
def test_freeze_contract(batch, nets, scale_nets, frozen):
    with pytest.raises(ValueError):
        loss_pairwise(batch, nets, scale_nets, frozen)


def test_pairwise_loss_with_bypass(batch, nets, rng):
    result = loss_pairwise(batch, nets, bypassed(rng), [SCALE_NET])
    (d, a, s), _ = nets.forward(batch.net_input)
    expected = {
        "depth": np.sum((batch.depth_grad - crop_center(d)) ** 2) / 2,
        "albedo": np.sum((batch.albedo_grad - crop_center(a)) ** 2) / 2,
        "shading": np.sum((batch.shading_grad - crop_center(s)) ** 2) / 2,
    }
    for role in ROLES:
        assert result.losses[role] == pytest.approx(expected[role])
    assert result.loss == pytest.approx(sum(expected.values()))
    assert evaluate_pairwise(batch, nets, bypassed(rng)) == pytest.approx(result.losses)


def test_frozen_gradient_nets_get_zero_grads(batch, nets, scale_nets):
    result = loss_pairwise(batch, nets, scale_nets, [GRAD_NET])
    for group in GradientNets.GROUPS:
        for tape in result.grad_net_grads[group].values():
            assert not tape.kernels.any() and not tape.biases.any()
    assert any(tape.kernels.any() for tape in result.scale_net_grads["albedo"].values())


def test_frozen_scale_nets_get_zero_grads(batch, nets, scale_nets):
    result = loss_pairwise(batch, nets, scale_nets, [SCALE_NET])
    for role in ROLES:
        for tape in result.scale_net_grads[role].values():
            assert not tape.kernels.any() and not tape.biases.any()
    assert any(tape.kernels.any() for tape in result.grad_net_grads["stem"].values())


@pytest.mark.parametrize("peers_live", [True, False])
def test_pairwise_gradient_net_gradients(batch, nets, scale_nets, rng, peers_live):
    grads = loss_pairwise(batch, nets, scale_nets, [SCALE_NET], peers_live).grad_net_grads

    def loss_for(group):
        def loss(params):
            groups = {g: nets.group(g) for g in GradientNets.GROUPS}
            groups[group] = params
            n = GradientNets(groups["depth"], groups["stem"], groups["albedo"], groups["shading"], 16)
            return sum(evaluate_pairwise(batch, n, scale_nets, peers_live).values())

        return loss

    for group, name in (("depth", "conv2"), ("depth", "conv5"), ("stem", "conv1"), ("albedo", "conv4"), ("shading", "conv5")):
        check_sampled_kernels(loss_for(group), nets.group(group), name, grads[group][name], rng, count=4)


def test_pairwise_scale_net_gradients(batch, nets, scale_nets, rng):
    grads = loss_pairwise(batch, nets, scale_nets, [GRAD_NET]).scale_net_grads
    for role in ROLES:

        def loss(params, role=role):
            nets_ = dict(scale_nets)
            nets_[role] = ScaleNet(role, params, False, 16)
            return sum(evaluate_pairwise(batch, nets, nets_).values())

        for name in ("conv1", "conv3"):
            check_sampled_kernels(loss, scale_nets[role].params, name, grads[role][name], rng, count=4)
