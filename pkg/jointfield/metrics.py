# ****************************
# |docname| - Scoring results
# ****************************
# Depth is scored in the linear domain with the usual error and threshold-accuracy measures. Albedo and shading are scored after a least-squares scalar fit of each prediction to its ground truth, since a decomposition is only determined up to that scale:
#
# ``mse``
#   The mean squared error of the fitted prediction.
# ``lmse``
#   The mean of squared errors over sliding windows, each with its own scalar fit. Windows are 10% of the larger image dimension (at least 8 pixels) on a side, spaced by half a window.
# ``dssim``
#   ``(1 - SSIM) / 2`` over 8x8 uniform windows with ``k1 = 0.01``, ``k2 = 0.03`` and a dynamic range of 1.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

# Third-party imports
# -------------------
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Local application imports
# -------------------------
from .applogger import jflogger
from .exceptions import DomainError, FormatError, ShapeError
from .imaging import Domain, MultiChannelImage, to_linear
from .internal.fileformats import read_raster
from .internal.layers import Tensor


# Globals
# =======
DEPTH_THRESHOLD = 1.25
LMSE_WINDOW_FRACTION = 0.1
LMSE_MIN_WINDOW = 8
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0


# Depth
# =====
@dataclass(frozen=True)
class DepthMetrics:
    rel: float
    log10: float
    rms: float
    rms_log: float
    acc1: float
    acc2: float
    acc3: float


def _linear(x: Union[MultiChannelImage, Tensor]) -> Tensor:
    if isinstance(x, MultiChannelImage):
        return to_linear(x).values if x.domain is Domain.log else x.values
    return np.asarray(x, dtype=np.float64)


def depth_metrics(
    pred: Union[MultiChannelImage, Tensor],
    gt: Union[MultiChannelImage, Tensor],
    # Score only pixels whose ground truth is closer than this.
    max_depth: Optional[float] = None,
) -> DepthMetrics:
    # Log-domain depth images are exponentiated directly; depth has no ``DELTA_LOG`` offset.
    p = np.exp(pred.values) if isinstance(pred, MultiChannelImage) and pred.domain is Domain.log else _linear(pred)
    g = np.exp(gt.values) if isinstance(gt, MultiChannelImage) and gt.domain is Domain.log else _linear(gt)
    if p.shape != g.shape:
        raise ShapeError(f"Predicted depth {p.shape} and ground truth {g.shape} differ in shape.")
    if (p <= 0).any() or (g <= 0).any():
        raise DomainError("Depth metrics need strictly positive linear depths.")
    if max_depth is not None:
        mask = g < max_depth
        if not mask.any():
            raise ShapeError(f"No ground-truth depth is below the cap of {max_depth}.")
        p, g = p[mask], g[mask]
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        float(np.mean(np.abs(p - g) / g)),
        float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        float(np.sqrt(np.mean((p - g) ** 2))),
        float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        *(float(np.mean(ratio < DEPTH_THRESHOLD**k)) for k in (1, 2, 3)),
    )


# Albedo and shading
# ==================
@dataclass(frozen=True)
class IntrinsicMetrics:
    mse_albedo: float
    mse_shading: float
    mse_avg: float
    lmse_albedo: float
    lmse_shading: float
    lmse_avg: float
    dssim_albedo: float
    dssim_shading: float
    dssim_avg: float


# The scalar ``alpha`` minimizing ``|alpha * pred - gt|^2``; zero for an all-zero prediction.
def fit_scale(pred: Tensor, gt: Tensor) -> float:
    energy = float(np.sum(pred**2))
    return float(np.sum(pred * gt)) / energy if energy > 0 else 0.0


def scale_invariant_mse(pred: Tensor, gt: Tensor) -> float:
    return float(np.mean((fit_scale(pred, gt) * pred - gt) ** 2))


def lmse_window(h: int, w: int) -> int:
    return min(max(LMSE_MIN_WINDOW, int(round(LMSE_WINDOW_FRACTION * max(h, w)))), h, w)


def local_mse(pred: Tensor, gt: Tensor) -> float:
    h, w = pred.shape[:2]
    size = lmse_window(h, w)
    step = max(1, size // 2)
    errors = [
        scale_invariant_mse(pred[y : y + size, x : x + size], gt[y : y + size, x : x + size])
        for y in range(0, h - size + 1, step)
        for x in range(0, w - size + 1, step)
    ]
    return float(np.mean(errors))


def dssim(pred: Tensor, gt: Tensor) -> float:
    h, w, _ = pred.shape
    size = min(SSIM_WINDOW, h, w)
    # ``(n_y, n_x, C, size, size)`` windows.
    px = sliding_window_view(pred, (size, size), axis=(0, 1))
    gx = sliding_window_view(gt, (size, size), axis=(0, 1))
    mu_p, mu_g = px.mean(axis=(-2, -1)), gx.mean(axis=(-2, -1))
    var_p, var_g = px.var(axis=(-2, -1)), gx.var(axis=(-2, -1))
    cov = (px * gx).mean(axis=(-2, -1)) - mu_p * mu_g
    c1, c2 = (SSIM_K1 * SSIM_RANGE) ** 2, (SSIM_K2 * SSIM_RANGE) ** 2
    ssim = ((2 * mu_p * mu_g + c1) * (2 * cov + c2)) / ((mu_p**2 + mu_g**2 + c1) * (var_p + var_g + c2))
    return float((1.0 - np.mean(ssim)) / 2.0)


def _as_hwc(x: Union[MultiChannelImage, Tensor]) -> Tensor:
    v = _linear(x)
    return v[:, :, np.newaxis] if v.ndim == 2 else v


def intrinsic_metrics(
    pred_a: Union[MultiChannelImage, Tensor],
    pred_s: Union[MultiChannelImage, Tensor],
    gt_a: Union[MultiChannelImage, Tensor],
    gt_s: Union[MultiChannelImage, Tensor],
) -> IntrinsicMetrics:
    pa, ps, ga, gs = (_as_hwc(x) for x in (pred_a, pred_s, gt_a, gt_s))
    for p, g, what in ((pa, ga, "albedo"), (ps, gs, "shading")):
        if p.shape != g.shape:
            raise ShapeError(f"Predicted {what} {p.shape} and ground truth {g.shape} differ in shape.")
    mse = [scale_invariant_mse(p, g) for p, g in ((pa, ga), (ps, gs))]
    lmse = [local_mse(p, g) for p, g in ((pa, ga), (ps, gs))]
    ds = [dssim(fit_scale(p, g) * p, g) for p, g in ((pa, ga), (ps, gs))]
    return IntrinsicMetrics(*(v for pair in (mse, lmse, ds) for v in (pair[0], pair[1], (pair[0] + pair[1]) / 2)))


# Reports
# =======
REPORT_COLUMNS = ["id"] + [f.name for f in fields(DepthMetrics)] + [f.name for f in fields(IntrinsicMetrics)]


@dataclass(frozen=True)
class ReportRow:
    id: str
    depth: DepthMetrics
    intrinsic: IntrinsicMetrics

    def values(self) -> Dict[str, float]:
        return {**asdict(self.depth), **asdict(self.intrinsic)}


# Per-image rows plus a final ``mean`` row, as ``{column: value}`` dicts in `REPORT_COLUMNS` order.
def report_rows(rows: Sequence[ReportRow]) -> List[Dict[str, Union[str, float]]]:
    if not rows:
        raise ValueError("A report needs at least one row.")
    out: List[Dict[str, Union[str, float]]] = [{"id": r.id, **r.values()} for r in rows]
    mean: Dict[str, Union[str, float]] = {"id": "mean"}
    for column in REPORT_COLUMNS[1:]:
        mean[column] = float(np.mean([r.values()[column] for r in rows]))
    out.append(mean)
    return out


def format_table(rows: Sequence[ReportRow]) -> str:
    table = report_rows(rows)
    width = max(12, max(len(str(r["id"])) for r in table))
    header = f"{'id':<{width}}" + "".join(f"{c:>14}" for c in REPORT_COLUMNS[1:])
    lines = [header, "-" * len(header)]
    for r in table:
        lines.append(f"{r['id']:<{width}}" + "".join(f"{r[c]:>14.6g}" for c in REPORT_COLUMNS[1:]))
    return "\n".join(lines)


def write_report_csv(path: Union[str, Path], rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for r in report_rows(rows):
            # ``repr`` keeps every digit, so the mean row can be recomputed exactly.
            writer.writerow({k: v if isinstance(v, str) else repr(v) for k, v in r.items()})


# Comparing directories
# =====================
# Both directories hold one subdirectory per image with log-domain ``D.raw``, ``A.raw`` and ``S.raw`` rasters, as written by dataset synthesis and by inference.
def evaluate_dirs(pred_dir: Union[str, Path], gt_dir: Union[str, Path], max_depth: Optional[float] = None) -> List[ReportRow]:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_ids = sorted(p.name for p in pred_dir.iterdir() if (p / "D.raw").exists())
    gt_ids = sorted(p.name for p in gt_dir.iterdir() if (p / "D.raw").exists())
    if pred_ids != gt_ids:
        raise FormatError(
            f"{pred_dir} has {len(pred_ids)} results and {gt_dir} has {len(gt_ids)} ground truths; their names must match."
        )
    if not gt_ids:
        raise FormatError(f"No results found in {pred_dir}.")

    def load(d: Path, name: str) -> MultiChannelImage:
        return MultiChannelImage(read_raster(d / f"{name}.raw"), Domain.log)

    rows = []
    for id_ in gt_ids:
        p, g = pred_dir / id_, gt_dir / id_
        rows.append(
            ReportRow(
                id_,
                depth_metrics(load(p, "D"), load(g, "D"), max_depth),
                intrinsic_metrics(load(p, "A"), load(p, "S"), load(g, "A"), load(g, "S")),
            )
        )
        jflogger.debug(f"Scored {id_}.")
    jflogger.info(f"Scored {len(rows)} images.")
    return rows
