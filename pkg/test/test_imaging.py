# ************************************************
# |docname| - Tests of gradients, color and pyramids
# ************************************************
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
from jointfield.exceptions import DomainError, ShapeError
from jointfield.imaging import (
    DELTA_LOG,
    Domain,
    GradientField,
    MultiChannelImage,
    bilinear_resize,
    box_downsample,
    build_pyramid,
    divergence_adjoint,
    forward_gradient,
    luminance_weight,
    squared_magnitude_channels,
    to_linear,
    to_log,
)


# Images
# ======
def test_image_promotes_2d():
    img = MultiChannelImage(np.zeros((4, 5)))
    assert img.shape == (4, 5, 1)
    assert img.hw == (4, 5)
    assert img.domain is Domain.log


def test_image_rejects_bad_rank():
    with pytest.raises(ShapeError):
        MultiChannelImage(np.zeros(5))


def test_log_linear_round_trip(rng):
    linear = MultiChannelImage(rng.uniform(0, 1, size=(6, 6, 3)), Domain.linear)
    log = to_log(linear)
    np.testing.assert_allclose(log.values, np.log(linear.values + DELTA_LOG))
    np.testing.assert_allclose(to_linear(log).values, linear.values, atol=1e-12)
    with pytest.raises(DomainError):
        to_log(log)
    with pytest.raises(DomainError):
        to_linear(linear)


# Gradients
# =========
def test_gradient_of_constant_is_zero():
    field = forward_gradient(np.full((5, 7, 3), 2.5))
    assert not field.gx.any() and not field.gy.any()
    assert not divergence_adjoint(field).values.any()


def test_gradient_1x2():
    field = forward_gradient(np.array([[0.0, 3.0]]))
    np.testing.assert_array_equal(field.gx[0, :, 0], [3, 0])
    np.testing.assert_array_equal(field.gy, 0)


def test_gradient_ramp():
    ramp = np.tile(np.arange(6.0), (4, 1))
    field = forward_gradient(ramp)
    np.testing.assert_array_equal(field.gx[:, :-1, 0], 1)
    # Neumann boundary.
    np.testing.assert_array_equal(field.gx[:, -1, 0], 0)
    np.testing.assert_array_equal(field.gy[-1], 0)


def test_gradient_rejects_single_pixel():
    with pytest.raises(ShapeError):
        forward_gradient(np.zeros((1, 1)))


def test_divergence_1x2():
    field = GradientField(np.array([[[2.0], [0.0]]]), np.zeros((1, 2, 1)))
    np.testing.assert_array_equal(divergence_adjoint(field).values[0, :, 0], [-2, 2])


@pytest.mark.parametrize("seed", range(10))
def test_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    h, w, c = rng.integers(1, 9, size=3) + 1
    u = rng.normal(size=(h, w, c))
    v = GradientField(rng.normal(size=(h, w, c)), rng.normal(size=(h, w, c)))
    g = forward_gradient(u)
    lhs = np.sum(g.gx * v.gx) + np.sum(g.gy * v.gy)
    rhs = np.sum(u * divergence_adjoint(v).values)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_field_channel_layout(rng):
    field = GradientField(rng.normal(size=(3, 3, 3)), rng.normal(size=(3, 3, 3)))
    stacked = field.to_channels()
    assert stacked.shape == (3, 3, 6)
    np.testing.assert_array_equal(stacked[..., :3], field.gx)
    back = GradientField.from_channels(stacked)
    np.testing.assert_array_equal(back.gy, field.gy)
    with pytest.raises(ShapeError):
        GradientField.from_channels(np.zeros((3, 3, 5)))
    scaled = field.scaled(np.full((3, 3, 6), 0.5))
    np.testing.assert_allclose(scaled.gx, field.gx / 2)


def test_squared_magnitude():
    field = GradientField(np.full((2, 2, 3), 3.0), np.full((2, 2, 3), 4.0))
    mag = squared_magnitude_channels(field)
    assert mag.shape == (2, 2, 3)
    np.testing.assert_array_equal(mag.values, 25)
    zero = GradientField(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)))
    assert not squared_magnitude_channels(zero).values.any()


# Luminance
# =========
@pytest.mark.parametrize("rgb, expected", [((0, 0, 0), 0.001), ((1, 1, 1), 1.001), ((0.5, 0.5, 0.5), 0.501)])
def test_luminance_weight(rgb, expected):
    img = MultiChannelImage(np.array(rgb, dtype=float).reshape(1, 1, 3), Domain.linear)
    weight = luminance_weight(img, 0.001)
    assert weight.shape == (1, 1, 1)
    assert weight.values[0, 0, 0] == pytest.approx(expected, abs=1e-12)


def test_luminance_weight_rejects_log():
    with pytest.raises(DomainError):
        luminance_weight(MultiChannelImage(np.zeros((2, 2, 3))))
    with pytest.raises(ShapeError):
        luminance_weight(MultiChannelImage(np.zeros((2, 2, 1)), Domain.linear))


# Resampling
# ==========
def test_box_downsample():
    values = np.arange(16, dtype=float).reshape(4, 4, 1)
    np.testing.assert_array_equal(box_downsample(values)[:, :, 0], [[2.5, 4.5], [10.5, 12.5]])
    with pytest.raises(ShapeError):
        box_downsample(np.zeros((3, 3, 1)), 4)


def test_bilinear_1x2_to_1x4():
    out = bilinear_resize(np.array([[0.0, 1.0]]), (1, 4))
    # Pixel centers at half-integers; samples beyond the edge clamp.
    np.testing.assert_allclose(out.values[0, :, 0], [0, 0.25, 0.75, 1])


def test_bilinear_constant():
    out = bilinear_resize(np.full((3, 5, 2), 0.7), (11, 4))
    np.testing.assert_allclose(out.values, 0.7)
    assert out.shape == (11, 4, 2)


def test_bilinear_keeps_domain():
    img = MultiChannelImage(np.ones((4, 4, 1)), Domain.linear)
    assert bilinear_resize(img, (8, 8)).domain is Domain.linear
    with pytest.raises(ShapeError):
        bilinear_resize(img, (0, 8))


def test_downsample_of_upsampled_ramp():
    ramp = np.tile(np.arange(8.0), (8, 1))[:, :, np.newaxis]
    back = box_downsample(bilinear_resize(ramp, (16, 16)).values)
    # The outermost columns see the edge clamp.
    np.testing.assert_allclose(back[:, 1:-1], ramp[:, 1:-1], atol=1e-6)


# Pyramids
# ========
def test_pyramid_sizes():
    img = MultiChannelImage(np.zeros((64, 64, 3)))
    assert [p.hw for p in build_pyramid(img, 3)] == [(16, 16), (32, 32), (64, 64)]
    single = build_pyramid(img, 1)
    assert len(single) == 1 and single[0] is img


def test_pyramid_constant():
    img = MultiChannelImage(np.full((32, 48, 1), -0.3))
    for level in build_pyramid(img, 3):
        np.testing.assert_allclose(level.values, -0.3)


def test_pyramid_too_small():
    with pytest.raises(ShapeError):
        build_pyramid(MultiChannelImage(np.zeros((32, 32, 1))), 4)
    with pytest.raises(ValueError):
        build_pyramid(MultiChannelImage(np.zeros((32, 32, 1))), 0)


def test_pyramid_smooth_reconstruction():
    y, x = np.mgrid[0:64, 0:64] / 64.0
    img = MultiChannelImage((np.sin(2 * x) + np.cos(3 * y))[:, :, np.newaxis])
    levels = build_pyramid(img, 3)
    for coarse, fine in zip(levels, levels[1:]):
        err = np.abs(bilinear_resize(coarse, fine.hw).values - fine.values).max()
        assert err < 0.15
