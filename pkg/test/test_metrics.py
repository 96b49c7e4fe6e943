# ********************************
# |docname| - Tests of the metrics
# ********************************
# The oracles below are written pixel by pixel and window by window, separately from the vectorized code under test.
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import csv
import math

# Third-party imports
# -------------------
import numpy as np
import pytest

# Local application imports
# -------------------------
from jointfield.exceptions import DomainError, FormatError, ShapeError
from jointfield.imaging import Domain, MultiChannelImage
from jointfield.internal.fileformats import write_raster
from jointfield.metrics import (
    REPORT_COLUMNS,
    DepthMetrics,
    depth_metrics,
    dssim,
    evaluate_dirs,
    format_table,
    intrinsic_metrics,
    lmse_window,
    report_rows,
    write_report_csv,
)


# Oracles
# =======
def depth_oracle(p, g):
    p, g = p.reshape(-1), g.reshape(-1)
    n = len(p)
    rel = sum(abs(a - b) / b for a, b in zip(p, g)) / n
    log10 = sum(abs(math.log10(a) - math.log10(b)) for a, b in zip(p, g)) / n
    rms = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, g)) / n)
    rms_log = math.sqrt(sum((math.log(a) - math.log(b)) ** 2 for a, b in zip(p, g)) / n)
    acc = [sum(max(a / b, b / a) < 1.25**k for a, b in zip(p, g)) / n for k in (1, 2, 3)]
    return [rel, log10, rms, rms_log, *acc]


def alpha_oracle(p, g):
    num = sum(a * b for a, b in zip(p.reshape(-1), g.reshape(-1)))
    den = sum(a * a for a in p.reshape(-1))
    return num / den


def si_mse_oracle(p, g):
    alpha = alpha_oracle(p, g)
    return float(np.mean((alpha * p - g) ** 2))


def lmse_oracle(p, g):
    h, w = p.shape[:2]
    size = min(max(8, round(0.1 * max(h, w))), h, w)
    step = max(1, size // 2)
    errors = []
    y = 0
    while y + size <= h:
        x = 0
        while x + size <= w:
            errors.append(si_mse_oracle(p[y : y + size, x : x + size], g[y : y + size, x : x + size]))
            x += step
        y += step
    return sum(errors) / len(errors)


def dssim_oracle(p, g):
    h, w, c = p.shape
    size = min(8, h, w)
    c1, c2 = 0.01**2, 0.03**2
    values = []
    for k in range(c):
        for y in range(h - size + 1):
            for x in range(w - size + 1):
                a = p[y : y + size, x : x + size, k].reshape(-1)
                b = g[y : y + size, x : x + size, k].reshape(-1)
                ma, mb = a.mean(), b.mean()
                va, vb = ((a - ma) ** 2).mean(), ((b - mb) ** 2).mean()
                cov = ((a - ma) * (b - mb)).mean()
                values.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return (1 - sum(values) / len(values)) / 2


# Depth
# =====
def test_depth_identity(rng):
    g = rng.uniform(1, 10, size=(6, 6, 1))
    m = depth_metrics(g, g)
    assert (m.rel, m.log10, m.rms, m.rms_log) == (0, 0, 0, 0)
    assert (m.acc1, m.acc2, m.acc3) == (1, 1, 1)


def test_depth_thresholds(rng):
    g = rng.uniform(1, 10, size=(6, 6, 1))
    m = depth_metrics(1.3 * g, g)
    assert m.acc1 == 0 and m.acc2 == 1 and m.acc3 == 1
    assert m.rel == pytest.approx(0.3)


@pytest.mark.parametrize("seed", range(100))
def test_depth_oracle(seed):
    rng = np.random.default_rng(seed)
    g = rng.uniform(1, 10, size=(7, 9, 1))
    p = g * np.exp(rng.normal(scale=0.3, size=g.shape))
    m = depth_metrics(p, g)
    expected = depth_oracle(p, g)
    np.testing.assert_allclose(
        [m.rel, m.log10, m.rms, m.rms_log, m.acc1, m.acc2, m.acc3], expected, rtol=0, atol=1e-10
    )
    assert m.acc1 <= m.acc2 <= m.acc3


def test_depth_log_images(rng):
    g = rng.uniform(1, 10, size=(4, 4, 1))
    m = depth_metrics(MultiChannelImage(np.log(1.1 * g)), MultiChannelImage(np.log(g)))
    assert m.rel == pytest.approx(0.1)


def test_depth_errors(rng):
    g = rng.uniform(1, 10, size=(4, 4, 1))
    with pytest.raises(DomainError):
        depth_metrics(np.zeros_like(g), g)
    with pytest.raises(ShapeError):
        depth_metrics(g[:3], g)
    with pytest.raises(ShapeError):
        depth_metrics(g, g, max_depth=0.5)


def test_depth_cap(rng):
    g = np.array([[[2.0], [20.0]]])
    p = np.array([[[2.0], [40.0]]])
    assert depth_metrics(p, g, max_depth=10).rel == 0
    assert depth_metrics(p, g).rel == 0.5


# Albedo and shading
# ==================
def test_intrinsic_identity(rng):
    a, s = rng.uniform(0.1, 1, size=(2, 12, 12, 3))
    m = intrinsic_metrics(a, s, a, s)
    assert m.mse_albedo == m.mse_shading == m.lmse_avg == 0
    assert m.dssim_avg == pytest.approx(0, abs=1e-12)


def test_intrinsic_scale_invariance(rng):
    a, s = rng.uniform(0.1, 1, size=(2, 12, 12, 3))
    pa, ps = rng.uniform(0.1, 1, size=(2, 12, 12, 3))
    m = intrinsic_metrics(pa, ps, a, s)
    scaled = intrinsic_metrics(2 * pa, 0.5 * ps, a, s)
    assert scaled.mse_avg == pytest.approx(m.mse_avg, rel=1e-10)
    assert scaled.lmse_avg == pytest.approx(m.lmse_avg, rel=1e-10)
    doubled = intrinsic_metrics(2 * a, 2 * s, a, s)
    assert doubled.mse_avg == pytest.approx(0, abs=1e-20)


@pytest.mark.parametrize("seed", range(100))
def test_intrinsic_oracle(seed):
    rng = np.random.default_rng(seed)
    a, s, pa, ps = rng.uniform(0.05, 1, size=(4, 10, 12, 3))
    m = intrinsic_metrics(pa, ps, a, s)
    expected = [
        si_mse_oracle(pa, a),
        si_mse_oracle(ps, s),
        lmse_oracle(pa, a),
        lmse_oracle(ps, s),
        dssim_oracle(alpha_oracle(pa, a) * pa, a),
        dssim_oracle(alpha_oracle(ps, s) * ps, s),
    ]
    got = [m.mse_albedo, m.mse_shading, m.lmse_albedo, m.lmse_shading, m.dssim_albedo, m.dssim_shading]
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-8)
    assert m.mse_avg == pytest.approx((m.mse_albedo + m.mse_shading) / 2)
    assert 0 <= m.dssim_albedo <= 1


def test_intrinsic_log_images(rng):
    a, s = rng.uniform(0.1, 1, size=(2, 9, 9, 3))
    logs = [MultiChannelImage(np.log(x + 1e-4), Domain.log) for x in (a, s)]
    m = intrinsic_metrics(*logs, a, s)
    assert m.mse_avg == pytest.approx(0, abs=1e-20)


def test_lmse_window():
    assert lmse_window(10, 12) == 8
    assert lmse_window(200, 100) == 20
    assert lmse_window(5, 100) == 5


def test_dssim_range(rng):
    x = rng.uniform(0, 1, size=(8, 8, 1))
    assert 0 <= dssim(x, 1 - x) <= 1
    assert dssim(x, x) == pytest.approx(0, abs=1e-12)


# Reports
# =======
def test_report_columns():
    assert REPORT_COLUMNS[:8] == ["id", "rel", "log10", "rms", "rms_log", "acc1", "acc2", "acc3"]
    assert REPORT_COLUMNS[-1] == "dssim_avg"
    assert len(REPORT_COLUMNS) == 1 + 7 + 9


def write_scene(directory, d, a, s):
    directory.mkdir(parents=True)
    write_raster(directory / "D.raw", np.log(d))
    write_raster(directory / "A.raw", np.log(a + 1e-4))
    write_raster(directory / "S.raw", np.log(s + 1e-4))


@pytest.fixture
def gt_dir(tmp_path, rng):
    for name in ("a", "b"):
        write_scene(tmp_path / "gt" / name, rng.uniform(1, 10, (12, 12, 1)), *rng.uniform(0.1, 1, size=(2, 12, 12, 3)))
    return tmp_path / "gt"


def test_evaluate_identical_dirs(gt_dir):
    rows = evaluate_dirs(gt_dir, gt_dir)
    assert [r.id for r in rows] == ["a", "b"]
    for r in rows:
        assert r.depth.rel == 0 and r.depth.acc1 == 1
        assert r.intrinsic.mse_avg == pytest.approx(0, abs=1e-20)


def test_evaluate_mean_row(gt_dir, tmp_path, rng):
    for name in ("a", "b"):
        write_scene(tmp_path / "pred" / name, rng.uniform(1, 10, (12, 12, 1)), *rng.uniform(0.1, 1, size=(2, 12, 12, 3)))
    rows = evaluate_dirs(tmp_path / "pred", gt_dir)
    table = report_rows(rows)
    assert table[-1]["id"] == "mean"
    for column in REPORT_COLUMNS[1:]:
        assert abs(table[-1][column] - (table[0][column] + table[1][column]) / 2) < 1e-12

    write_report_csv(tmp_path / "metrics.csv", rows)
    with open(tmp_path / "metrics.csv", newline="") as f:
        read = list(csv.DictReader(f))
    assert list(read[0]) == REPORT_COLUMNS
    assert float(read[2]["rel"]) == table[2]["rel"]
    text = format_table(rows)
    assert text.splitlines()[0].split() == REPORT_COLUMNS
    assert text.splitlines()[-1].startswith("mean")


def test_evaluate_mismatched_dirs(gt_dir, tmp_path, rng):
    write_scene(tmp_path / "pred" / "a", rng.uniform(1, 10, (12, 12, 1)), *rng.uniform(0.1, 1, size=(2, 12, 12, 3)))
    with pytest.raises(FormatError):
        evaluate_dirs(tmp_path / "pred", gt_dir)
    (tmp_path / "empty").mkdir()
    with pytest.raises(FormatError):
        evaluate_dirs(tmp_path / "empty", tmp_path / "empty")


def test_report_needs_rows():
    with pytest.raises(ValueError):
        report_rows([])
    assert DepthMetrics(0, 0, 0, 0, 1, 1, 1).acc1 == 1
