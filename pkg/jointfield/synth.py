# ************************************
# |docname| - Synthetic training data
# ************************************
# Scenes are built so that every ground truth is known exactly:
#
# -   Depth (linear, in [1, 10]) is a slanted background plane, a few slanted foreground rectangles in front of it (which produce depth discontinuities), and spherical bumps.
# -   Albedo is a mosaic of random rectangles with colors in [0.1, 0.85].
# -   Shading is Lambertian under a white directional light plus ambient light, computed from normals of the depth map, so it's gray.
#
# ``A``, ``S`` and ``I`` are stored in the log domain with ``I = A + S`` exactly; ``D`` holds log depth.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

# Third-party imports
# -------------------
import numpy as np
from scipy import ndimage

# Local application imports
# -------------------------
from .applogger import jflogger
from .config import settings
from .exceptions import FormatError, ShapeError
from .imaging import (
    DELTA_LOG,
    Domain,
    MultiChannelImage,
    bilinear_resize,
    box_downsample,
    forward_gradient,
    squared_magnitude_channels,
    to_linear,
)
from .internal.fileformats import read_raster, verify_manifest, write_manifest, write_png, write_raster
from .internal.layers import Tensor
from .networks import GLOBAL_DOWNSCALE, OUTPUT_PATCH_SIZE, PATCH_MARGIN, PATCH_SIZE


# Globals
# =======
DEPTH_RANGE = (1.0, 10.0)
ALBEDO_RANGE = (0.1, 0.85)
# Tolerance on the log-domain image formation ``I = A + S``.
FORMATION_TOL = 1e-6
RECORD_FILES = ("I.png", "I.raw", "D.raw", "A.raw", "S.raw")


# Scene records
# =============
@dataclass(frozen=True)
class SceneRecord:
    id: str
    I: MultiChannelImage
    D: MultiChannelImage
    A: MultiChannelImage
    S: MultiChannelImage
    # None for records loaded from disk.
    seed: Optional[int] = None

    @property
    def hw(self) -> Tuple[int, int]:
        return self.I.hw

    def check(self) -> "SceneRecord":
        for name in "IDAS":
            img = getattr(self, name)
            if img.domain is not Domain.log:
                raise FormatError(f"Record {self.id}: {name} must be in the log domain.")
            if img.hw != self.hw:
                raise ShapeError(f"Record {self.id}: {name} is {img.hw}, but I is {self.hw}.")
            if not np.isfinite(img.values).all():
                raise FormatError(f"Record {self.id}: {name} has non-finite values.")
        if self.D.channels != 1 or self.I.channels != 3 or self.A.channels != 3 or self.S.channels != 3:
            raise ShapeError(f"Record {self.id}: expected 3-channel I, A, S and 1-channel D.")
        err = np.abs(self.I.values - self.A.values - self.S.values).max()
        if err > FORMATION_TOL:
            raise FormatError(f"Record {self.id}: I differs from A + S by up to {err:.3g}.")
        return self


def _log_image(linear: Tensor) -> MultiChannelImage:
    return MultiChannelImage(np.log(linear + DELTA_LOG), Domain.log)


def compose(id_: str, albedo_log: Tensor, shading_log: Tensor, depth_log: Tensor, seed: Optional[int] = None) -> SceneRecord:
    return SceneRecord(
        id_,
        MultiChannelImage(albedo_log + shading_log, Domain.log),
        MultiChannelImage(depth_log, Domain.log),
        MultiChannelImage(albedo_log, Domain.log),
        MultiChannelImage(shading_log, Domain.log),
        seed,
    )


# Scene generation
# ================
def _slanted_plane(rng: np.random.Generator, u: Tensor, v: Tensor, lo: float, hi: float) -> Tensor:
    z0 = rng.uniform(lo, hi)
    gu, gv = rng.uniform(-0.4, 0.4, size=2) * (hi - lo)
    return z0 + gu * (u - 0.5) + gv * (v - 0.5)


def _random_box(rng: np.random.Generator, h: int, w: int, min_frac: float, max_frac: float) -> Tuple[slice, slice]:
    bh = int(rng.integers(max(2, int(min_frac * h)), max(3, int(max_frac * h)) + 1))
    bw = int(rng.integers(max(2, int(min_frac * w)), max(3, int(max_frac * w)) + 1))
    y0 = int(rng.integers(0, h - bh + 1))
    x0 = int(rng.integers(0, w - bw + 1))
    return slice(y0, y0 + bh), slice(x0, x0 + bw)


def _depth(rng: np.random.Generator, h: int, w: int) -> Tensor:
    v, u = np.mgrid[0:h, 0:w] / np.array([h, w])[:, np.newaxis, np.newaxis]
    z = _slanted_plane(rng, u, v, 6.0, 9.0)
    for _ in range(int(rng.integers(1, 4))):
        ys, xs = _random_box(rng, h, w, 0.2, 0.5)
        z[ys, xs] = _slanted_plane(rng, u, v, 2.0, 5.0)[ys, xs]
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        radius = rng.uniform(0.1, 0.25)
        d2 = ((u - cx) ** 2 + (v - cy) ** 2) / radius**2
        height = rng.uniform(0.3, 1.0)
        z -= height * np.sqrt(np.clip(1.0 - d2, 0.0, None))
    return np.clip(z, *DEPTH_RANGE)


def _albedo(rng: np.random.Generator, h: int, w: int) -> Tensor:
    a = np.empty((h, w, 3))
    a[:] = rng.uniform(*ALBEDO_RANGE, size=3)
    for _ in range(int(rng.integers(4, 9))):
        ys, xs = _random_box(rng, h, w, 0.1, 0.6)
        a[ys, xs] = rng.uniform(*ALBEDO_RANGE, size=3)
    return a


# Lambertian shading of the depth map. The image spans ``extent`` scene units horizontally, which sets how steep the depth map looks.
def _shading(rng: np.random.Generator, z: Tensor, extent: float = 10.0) -> Tensor:
    h, w = z.shape
    spacing = extent / w
    dz_dy, dz_dx = np.gradient(z, spacing)
    normals = np.stack([-dz_dx, -dz_dy, np.ones_like(z)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    light = np.array([*rng.uniform(-1.0, 1.0, size=2), 1.0])
    light /= np.linalg.norm(light)
    ambient = rng.uniform(0.15, 0.3)
    s = ambient + (1.0 - ambient) * np.clip(normals @ light, 0.0, None)
    return np.repeat(s[:, :, np.newaxis], 3, axis=-1)


def generate_scene(seed: int, width: int, height: int, id_: Optional[str] = None) -> SceneRecord:
    if width < 32 or height < 32:
        raise ShapeError(f"Scenes must be at least 32x32; got {height}x{width}.")
    rng = np.random.default_rng(seed)
    z = _depth(rng, height, width)
    albedo = _albedo(rng, height, width)
    shading = _shading(rng, z)
    return compose(
        id_ or f"scene_{seed}",
        _log_image(albedo).values,
        _log_image(shading).values,
        np.log(z)[:, :, np.newaxis],
        seed,
    ).check()


# Augmentation
# ============
@dataclass(frozen=True)
class AugmentParams:
    scale: float = 1.0
    # Degrees, counterclockwise.
    rotation: float = 0.0
    # Pixels, (dy, dx).
    translation: Tuple[float, float] = (0.0, 0.0)
    # Per-channel albedo gain.
    rgb: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    flip: bool = False
    gamma: float = 1.0

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "AugmentParams":
        return cls(
            scale=float(rng.uniform(0.8, 1.2)),
            rotation=float(rng.uniform(-15.0, 15.0)),
            translation=tuple(float(t) for t in rng.uniform(-8.0, 8.0, size=2)),  # type: ignore
            rgb=tuple(float(c) for c in rng.uniform(0.9, 1.1, size=3)),  # type: ignore
            flip=bool(rng.integers(0, 2)),
            gamma=float(rng.uniform(0.8, 1.25)),
        )

    @property
    def geometric(self) -> bool:
        return self.scale != 1.0 or self.rotation != 0.0 or self.translation != (0.0, 0.0)

    @property
    def photometric(self) -> bool:
        return self.rgb != (1.0, 1.0, 1.0) or self.gamma != 1.0


# Resample every channel through the same similarity transform about the image center. ``affine_transform`` maps output coordinates to input coordinates.
def _warp(values: Tensor, p: AugmentParams) -> Tensor:
    h, w, _ = values.shape
    theta = np.deg2rad(p.rotation)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    matrix = rot.T / p.scale
    center = np.array([(h - 1) / 2, (w - 1) / 2])
    offset = center - matrix @ (center + np.asarray(p.translation))
    return np.stack(
        [ndimage.affine_transform(values[:, :, c], matrix, offset, order=1, mode="nearest") for c in range(values.shape[2])],
        axis=-1,
    )


def apply_augment(record: SceneRecord, p: AugmentParams) -> SceneRecord:
    a, s, d = record.A.values, record.S.values, record.D.values
    if p.geometric:
        a, s, d = _warp(a, p), _warp(s, p), _warp(d, p)
        # Zooming in by ``s`` brings the scene ``s`` times closer.
        d = d - np.log(p.scale)
    if p.flip:
        a, s, d = a[:, ::-1], s[:, ::-1], d[:, ::-1]
    if p.photometric:
        a_lin = to_linear(MultiChannelImage(a)).values
        s_lin = to_linear(MultiChannelImage(s)).values
        a_lin = np.clip(a_lin * np.asarray(p.rgb), 0.0, 1.0) ** p.gamma
        s_lin = np.clip(s_lin, 0.0, 1.0) ** p.gamma
        a, s = _log_image(a_lin).values, _log_image(s_lin).values
    return compose(record.id, np.ascontiguousarray(a), np.ascontiguousarray(s), np.ascontiguousarray(d), record.seed).check()


def augment(record: SceneRecord, seed: int) -> SceneRecord:
    return apply_augment(record, AugmentParams.draw(np.random.default_rng(seed)))


# Patches
# =======
@dataclass(frozen=True)
class PatchSample:
    # Top-left corner of the input patch.
    offset: Tuple[int, int]
    # Network inputs, 35x35.
    image: Tensor
    coarse_depth: Tensor
    # Targets, 19x19, cut from the gradients of the full image.
    depth_grad: Tensor
    albedo_grad: Tensor
    shading_grad: Tensor
    # Scale net inputs, 35x35: squared gradient magnitudes of the guidance images.
    guidance_depth: Tensor
    guidance_albedo: Tensor
    guidance_shading: Tensor


@dataclass(frozen=True)
class PatchBatch:
    image: Tensor
    coarse_depth: Tensor
    depth_grad: Tensor
    albedo_grad: Tensor
    shading_grad: Tensor
    guidance_depth: Tensor
    guidance_albedo: Tensor
    guidance_shading: Tensor

    @classmethod
    def stack(cls, samples: List[PatchSample]) -> "PatchBatch":
        if not samples:
            raise ValueError("A patch batch needs at least one patch.")
        return cls(**{name: np.stack([getattr(s, name) for s in samples]) for name in cls.__dataclass_fields__})

    def __len__(self) -> int:
        return self.image.shape[0]

    # The 4-channel input of the gradient nets.
    @property
    def net_input(self) -> Tensor:
        return np.concatenate([self.image, self.coarse_depth], axis=-1)


# The coarse depth used when no global net prediction is available: the ground truth at 1/16 scale, upsampled.
def ground_truth_coarse_depth(record: SceneRecord) -> Tensor:
    coarse = box_downsample(record.D.values, GLOBAL_DOWNSCALE)
    return bilinear_resize(coarse, record.hw).values


# Squared-magnitude guidance stacks for the depth, albedo and shading scale nets.
def guidance_stacks(i: Tensor, d: Tensor, a: Tensor, s: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    mi, md, ma, ms = (squared_magnitude_channels(forward_gradient(x)).values for x in (i, d, a, s))
    return (
        np.concatenate([mi, ma, ms], axis=-1),
        np.concatenate([mi, md, ms], axis=-1),
        np.concatenate([mi, md, ma], axis=-1),
    )


def sample_patches(
    record: SceneRecord,
    count: int,
    seed: Union[int, np.random.Generator],
    coarse_depth: Optional[Tensor] = None,
    offsets: Optional[List[Tuple[int, int]]] = None,
) -> List[PatchSample]:
    h, w = record.hw
    if h < PATCH_SIZE or w < PATCH_SIZE:
        raise ShapeError(f"Record {record.id} is {h}x{w}; patches need at least {PATCH_SIZE}x{PATCH_SIZE}.")
    rng = np.random.default_rng(seed)
    if offsets is None:
        offsets = [
            (int(rng.integers(0, h - PATCH_SIZE + 1)), int(rng.integers(0, w - PATCH_SIZE + 1))) for _ in range(count)
        ]
    if coarse_depth is None:
        coarse_depth = ground_truth_coarse_depth(record)
    i, d, a, s = (x.values for x in (record.I, record.D, record.A, record.S))
    grads = [forward_gradient(x).to_channels() for x in (d, a, s)]
    guides = guidance_stacks(i, d, a, s)

    m, o = PATCH_MARGIN, OUTPUT_PATCH_SIZE
    patches = []
    for y, x in offsets:
        inner = (slice(y + m, y + m + o), slice(x + m, x + m + o))
        outer = (slice(y, y + PATCH_SIZE), slice(x, x + PATCH_SIZE))
        patches.append(
            PatchSample(
                (y, x),
                i[outer],
                coarse_depth[outer],
                grads[0][inner],
                grads[1][inner],
                grads[2][inner],
                guides[0][outer],
                guides[1][outer],
                guides[2][outer],
            )
        )
    return patches


# Persistence
# ===========
def save_record(directory: Union[str, Path], record: SceneRecord) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_png(directory / "I.png", to_linear(record.I).values)
    for name in "IDAS":
        write_raster(directory / f"{name}.raw", getattr(record, name).values)
    return [directory / f for f in RECORD_FILES]


def load_record(directory: Union[str, Path]) -> SceneRecord:
    directory = Path(directory)
    images = {}
    for name in "IDAS":
        path = directory / f"{name}.raw"
        if not path.exists():
            raise FormatError(f"Record {directory} is missing {name}.raw.")
        images[name] = MultiChannelImage(read_raster(path), Domain.log)
    return SceneRecord(directory.name, images["I"], images["D"], images["A"], images["S"]).check()


# Child seeds for ``count`` records; record ``k`` depends only on ``(seed, k)``.
def record_seeds(seed: int, count: int) -> List[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def synthesize_dataset(root: Union[str, Path], count: int, seed: int, height: int, width: int) -> List[SceneRecord]:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    seeds = record_seeds(seed, count)

    def make(k: int) -> Tuple[SceneRecord, List[Path]]:
        record = generate_scene(seeds[k], width, height, f"scene_{k:04d}")
        return record, save_record(root / record.id, record)

    with ThreadPoolExecutor(max_workers=settings.workers) as pool:
        made = list(pool.map(make, range(count)))
    files = [f for _, paths in made for f in paths]
    write_manifest(
        root,
        [f.relative_to(root) for f in files],
        [f"jointfield dataset: count={count} seed={seed} height={height} width={width}"],
    )
    jflogger.info(f"Wrote {count} scenes to {root}.")
    return [r for r, _ in made]


def load_dataset(root: Union[str, Path]) -> List[SceneRecord]:
    root = Path(root)
    listed = verify_manifest(root)
    record_dirs = sorted({Path(p).parent.as_posix() for p in listed if Path(p).parent.as_posix() != "."})
    if not record_dirs:
        raise FormatError(f"The dataset at {root} lists no records.")
    return [load_record(root / d) for d in record_dirs]


