# ************************************
# |docname| - Tests of the file formats
# ************************************
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import struct

# Third-party imports
# -------------------
import numpy as np
from PIL import Image
import pytest

# Local application imports
# -------------------------
from jointfield.exceptions import FormatError
from jointfield.internal.fileformats import (
    PARAMS_MAGIC,
    decode_params,
    decode_raster,
    encode_params,
    encode_raster,
    read_params,
    read_png,
    read_raster,
    verify_manifest,
    write_manifest,
    write_params,
    write_png,
    write_preview,
    write_raster,
)
from jointfield.internal.layers import LayerParams


# Parameter files
# ===============
@pytest.fixture
def layers(rng):
    return {
        "conv1": LayerParams(rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)),
        "fc1": LayerParams(rng.normal(size=(2, 12, 1, 1)), rng.normal(size=2)),
    }


def test_params_are_exact(layers, tmp_path):
    write_params(tmp_path / "p.jcnp", layers)
    back = read_params(tmp_path / "p.jcnp")
    assert list(back) == ["conv1", "fc1"]
    for name, p in layers.items():
        assert back[name].equals(p)


def test_params_layout(layers):
    data = encode_params(layers)
    assert data[:4] == PARAMS_MAGIC
    assert struct.unpack("<II", data[4:12]) == (1, 4)
    (name_len,) = struct.unpack("<I", data[12:16])
    assert data[16 : 16 + name_len] == b"conv1.kernels"


def test_params_errors(layers):
    data = encode_params(layers)
    with pytest.raises(FormatError, match="magic"):
        decode_params(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="version"):
        decode_params(data[:4] + struct.pack("<II", 2, 4) + data[12:])
    with pytest.raises(FormatError, match="truncated"):
        decode_params(data[:-1])
    with pytest.raises(FormatError, match="trailing"):
        decode_params(data + b"\0")
    # Claim one entry only: a kernels array without its biases.
    with pytest.raises(FormatError, match="no biases"):
        single = data[:4] + struct.pack("<II", 1, 1) + data[12 : 12 + 4 + 13 + 16 + 8 * 108]
        decode_params(single)


# Rasters
# =======
def test_raster_is_exact(rng, tmp_path):
    values = rng.normal(size=(5, 7, 3))
    write_raster(tmp_path / "x.raw", values)
    np.testing.assert_array_equal(read_raster(tmp_path / "x.raw"), values)
    assert decode_raster(encode_raster(np.ones((2, 3)))).shape == (2, 3, 1)


def test_raster_errors():
    data = encode_raster(np.ones((2, 2, 1)))
    with pytest.raises(FormatError, match="magic"):
        decode_raster(b"JCNP" + data[4:])
    with pytest.raises(FormatError, match="truncated"):
        decode_raster(data[:-3])
    with pytest.raises(FormatError, match="trailing"):
        decode_raster(data + b"\0\0")
    with pytest.raises(FormatError):
        encode_raster(np.ones(4))


# PNG
# ===
def test_png(rng, tmp_path):
    values = rng.uniform(0, 1, size=(6, 5, 3))
    write_png(tmp_path / "x.png", values)
    np.testing.assert_allclose(read_png(tmp_path / "x.png"), values, atol=0.5 / 255 + 1e-12)


def test_png_gray_reads_as_rgb(tmp_path):
    write_png(tmp_path / "g.png", np.full((4, 4, 1), 0.5))
    assert read_png(tmp_path / "g.png").shape == (4, 4, 3)


def test_png_errors(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        read_png(tmp_path / "bad.png")


def test_preview(rng, tmp_path):
    values = rng.normal(size=(8, 8, 1)) * 3
    write_preview(tmp_path / "d.png", values, "depth preview")
    with Image.open(tmp_path / "d.png") as img:
        assert img.text["Description"] == "depth preview"
        assert img.text["Normalization"].startswith("min-max per image")
        pixels = np.asarray(img)
    assert pixels.min() == 0 and pixels.max() == 255
    write_preview(tmp_path / "flat.png", np.ones((4, 4, 1)), "flat")
    with Image.open(tmp_path / "flat.png") as img:
        assert not np.asarray(img).any()


# Manifests
# =========
def test_manifest(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "a.bin").write_bytes(b"abc")
    (tmp_path / "b.bin").write_bytes(b"def")
    manifest = write_manifest(tmp_path, ["sub/a.bin", tmp_path / "b.bin"], ["made for a test"])
    text = manifest.read_text()
    assert text.startswith("# made for a test\n")
    assert verify_manifest(tmp_path) == ["b.bin", "sub/a.bin"]


def test_manifest_errors(tmp_path):
    (tmp_path / "a.bin").write_bytes(b"abc")
    write_manifest(tmp_path, ["a.bin"])
    (tmp_path / "a.bin").write_bytes(b"abd")
    with pytest.raises(FormatError, match="checksum"):
        verify_manifest(tmp_path)
    (tmp_path / "a.bin").unlink()
    with pytest.raises(FormatError, match="missing"):
        verify_manifest(tmp_path)
    (tmp_path / "manifest.txt").write_text("garbage\n")
    with pytest.raises(FormatError, match="expected"):
        verify_manifest(tmp_path)
