# ***********************************************
# |docname| - Parameter, raster and preview files
# ***********************************************
# Three binary layouts live here; all multi-byte values are little-endian.
#
# ``JCNP`` parameter files
#   ``b"JCNP"``, ``u32`` version, ``u32`` entry count, then per entry: ``u32`` name length, the UTF-8 name, four ``u32`` dims, and the ``float64`` payload in row-major order. Each layer contributes two entries, ``<layer>.kernels`` with shape ``(out, in, kh, kw)`` and ``<layer>.biases`` with shape ``(out, 1, 1, 1)``.
#
# ``JCNR`` rasters
#   ``b"JCNR"``, ``u32`` H, W, C, then ``H * W * C`` ``float64`` values in row-major ``(H, W, C)`` order.
#
# Checksum manifests
#   ``sha256sum``-compatible lines (``<hex digest>  <relative path>``) preceded by ``#`` comment lines, so ``sha256sum -c`` can verify a dataset directory by hand.
#
# PNG previews are written with Pillow; they are for looking at, never for reading back.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import hashlib
from pathlib import Path
import struct
from typing import Dict, Iterable, List, Mapping, Tuple, Union

# Third-party imports
# -------------------
import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

# Local application imports
# -------------------------
from ..applogger import jflogger
from ..exceptions import FormatError
from .layers import LayerParams, Tensor


# Globals
# =======
PARAMS_MAGIC = b"JCNP"
PARAMS_VERSION = 1
RASTER_MAGIC = b"JCNR"
_F8 = np.dtype("<f8")
PathLike = Union[str, Path]


# Parameter files
# ===============
def encode_params(layers: Mapping[str, LayerParams]) -> bytes:
    chunks = [PARAMS_MAGIC, struct.pack("<II", PARAMS_VERSION, 2 * len(layers))]
    for layer_name, params in layers.items():
        for suffix, array in (
            ("kernels", params.kernels),
            ("biases", params.biases.reshape(-1, 1, 1, 1)),
        ):
            name = f"{layer_name}.{suffix}".encode("utf-8")
            chunks.append(struct.pack("<I", len(name)))
            chunks.append(name)
            chunks.append(struct.pack("<4I", *array.shape))
            chunks.append(np.ascontiguousarray(array, dtype=_F8).tobytes())
    return b"".join(chunks)


# A tiny cursor over a byte string that reports truncation as a `FormatError`.
class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.source}: truncated at byte {self.pos}; needed {n} more bytes but only {len(self.data) - self.pos} remain."
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count: int = 1) -> Tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count))


def decode_params(data: bytes, source: str = "<bytes>") -> Dict[str, LayerParams]:
    r = _Reader(data, source)
    if r.take(4) != PARAMS_MAGIC:
        raise FormatError(f"{source}: not a JCNP parameter file (bad magic).")
    version, count = r.u32(2)
    if version != PARAMS_VERSION:
        raise FormatError(f"{source}: unsupported JCNP version {version}.")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.u32()
        name = r.take(name_len).decode("utf-8")
        shape = r.u32(4)
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(r.take(8 * n), dtype=_F8).reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise FormatError(f"{source}: {len(data) - r.pos} trailing bytes after the last entry.")

    # Pair up the entries, keeping file order.
    layers: Dict[str, LayerParams] = {}
    for name in arrays:
        layer_name, _, suffix = name.rpartition(".")
        if suffix != "kernels":
            continue
        biases = arrays.get(f"{layer_name}.biases")
        if biases is None:
            raise FormatError(f"{source}: layer '{layer_name}' has kernels but no biases.")
        layers[layer_name] = LayerParams(arrays[name], biases.reshape(-1))
    if 2 * len(layers) != len(arrays):
        raise FormatError(f"{source}: found entries that don't pair into kernels and biases.")
    return layers


def write_params(path: PathLike, layers: Mapping[str, LayerParams]) -> None:
    Path(path).write_bytes(encode_params(layers))
    jflogger.debug(f"Wrote {len(layers)} layers to {path}.")


def read_params(path: PathLike) -> Dict[str, LayerParams]:
    return decode_params(Path(path).read_bytes(), str(path))


# Rasters
# =======
def encode_raster(values: Tensor) -> bytes:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, np.newaxis]
    if values.ndim != 3:
        raise FormatError(f"A raster must be (H, W) or (H, W, C); got shape {values.shape}.")
    return RASTER_MAGIC + struct.pack("<3I", *values.shape) + np.ascontiguousarray(values, dtype=_F8).tobytes()


def decode_raster(data: bytes, source: str = "<bytes>") -> Tensor:
    r = _Reader(data, source)
    if r.take(4) != RASTER_MAGIC:
        raise FormatError(f"{source}: not a JCNR raster (bad magic).")
    h, w, c = r.u32(3)
    payload = r.take(8 * h * w * c)
    if r.pos != len(data):
        raise FormatError(f"{source}: {len(data) - r.pos} trailing bytes after the raster payload.")
    return np.frombuffer(payload, dtype=_F8).reshape(h, w, c).astype(np.float64)


def write_raster(path: PathLike, values: Tensor) -> None:
    Path(path).write_bytes(encode_raster(values))


def read_raster(path: PathLike) -> Tensor:
    return decode_raster(Path(path).read_bytes(), str(path))


# PNG output
# ==========
# Write a linear-domain image in [0, 1] as an 8-bit PNG.
def write_png(path: PathLike, linear: Tensor) -> None:
    pixels = np.round(np.clip(linear, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(pixels[:, :, 0] if pixels.shape[2] == 1 else pixels).save(path)


# Read an 8-bit image as linear RGB in [0, 1].
def read_png(path: PathLike) -> Tensor:
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as e:
        raise FormatError(f"Unable to read image {path}: {e}") from e
    return pixels / 255.0


# Write a min-max normalized preview of arbitrary values. The normalization is recorded in the PNG's text chunks, so a preview can't be mistaken for calibrated data.
def write_preview(path: PathLike, values: Tensor, description: str) -> None:
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    normalized = (values - lo) / span if span > 0 else np.zeros_like(values)
    pixels = np.round(normalized * 255).astype(np.uint8)
    info = PngInfo()
    info.add_text("Description", description)
    info.add_text("Normalization", f"min-max per image; 0 -> {lo!r}, 255 -> {hi!r}")
    Image.fromarray(pixels[:, :, 0] if pixels.shape[2] == 1 else pixels).save(path, pnginfo=info)


# Checksums
# =========
def file_sha256(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ``files`` are relative to ``root`` (absolute paths under ``root`` are also accepted).
def write_manifest(root: PathLike, files: Iterable[PathLike], header: Iterable[str] = ()) -> Path:
    root = Path(root)
    lines = [f"# {h}" for h in header]
    for f in sorted(Path(f) for f in files):
        rel = f.resolve().relative_to(root.resolve()) if f.is_absolute() else f
        lines.append(f"{file_sha256(root / rel)}  {rel.as_posix()}")
    manifest = root / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


# Return the relative paths listed in a manifest, after checking every checksum.
def verify_manifest(root: PathLike) -> List[str]:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise FormatError(f"No manifest.txt in {root}.")
    paths = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        digest, sep, rel = line.partition("  ")
        if not sep:
            raise FormatError(f"{manifest}:{lineno}: expected '<sha256>  <path>'.")
        target = root / rel
        if not target.exists():
            raise FormatError(f"{manifest}:{lineno}: listed file {rel} is missing.")
        if file_sha256(target) != digest:
            raise FormatError(f"{manifest}:{lineno}: checksum mismatch for {rel}.")
        paths.append(rel)
    return paths
