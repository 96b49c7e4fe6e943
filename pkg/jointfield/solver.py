# *****************************************
# |docname| - Screened Poisson solves
# *****************************************
# Test-time inference minimizes quadratic energies of the form
#
# .. code-block:: text
#
#   sum_k  w_k |x - t_k|^2  +  lambda |grad x - g|^2
#
# whose minimizer solves the screened Poisson system ``(sum_k w_k + lambda grad^T grad) x = sum_k w_k t_k + lambda grad^T g``. This module assembles those systems as ``scipy.sparse`` matrices and solves them with Jacobi-preconditioned conjugate gradients.
#
# Pixels are flattened in row-major order, so pixel ``(y, x)`` of an ``H x W`` image is unknown ``y * W + x``. The gradient operator is built from 1-D forward differences whose last row is zero, matching `forward_gradient`.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

# Third-party imports
# -------------------
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

# Local application imports
# -------------------------
from .applogger import jflogger
from .config import settings
from .exceptions import GaugeError, ShapeError, SolverError
from .imaging import GradientField, divergence_adjoint
from .internal.layers import Tensor


# Operators
# =========
# The 1-D forward difference matrix; its last row is zero (Neumann boundary).
def difference_matrix(n: int) -> sp.csr_matrix:
    if n < 2:
        return sp.csr_matrix((n, n))
    d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], format="lil")
    d[n - 1, n - 1] = 0
    return d.tocsr()


def gradient_operators(h: int, w: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    gx = sp.kron(sp.identity(h), difference_matrix(w), format="csr")
    gy = sp.kron(difference_matrix(h), sp.identity(w), format="csr")
    return gx, gy


# ``grad^T grad`` for an ``h x w`` grid.
def gradient_normal_matrix(h: int, w: int) -> sp.csr_matrix:
    gx, gy = gradient_operators(h, w)
    return (gx.T @ gx + gy.T @ gy).tocsr()


# Systems
# =======
@dataclass
class ScreenedPoissonSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    # The grid shape of one unknown block.
    shape: Tuple[int, int]
    # A basis vector of the null space, when the system is only positive semi-definite. Solutions are projected orthogonal to it.
    gauge: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.rhs.size

    # The quadratic that CG minimizes. Its minimum equals the original energy up to a constant.
    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.matrix @ x) - self.rhs @ x)

    def solve(self, tol: float, max_iters: Optional[int] = None) -> "CgResult":
        result = cg_solve(
            self.matrix,
            self.rhs,
            tol,
            max_iters or 10 * self.size,
            preconditioner=self.matrix.diagonal(),
        )
        if self.gauge is not None:
            v = self.gauge
            result.x = result.x - (result.x @ v) / (v @ v) * v
        return result


def _flat(values: Union[Tensor, float], h: int, w: int, what: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 0:
        return np.full(h * w, float(a))
    if a.size != h * w:
        raise ShapeError(f"{what} of shape {a.shape} doesn't match the {h}x{w} grid.")
    return a.reshape(-1)


def depth_system(
    d_star: Tensor,
    # Upsampled from the previous level, or None at the coarsest level.
    d_prev: Optional[Tensor],
    # ``C(grad D*) o grad D*``, already composed.
    guided_grad: GradientField,
    lambda_d: float,
) -> ScreenedPoissonSystem:
    h, w = np.shape(d_star)[:2]
    if guided_grad.shape[:2] != (h, w):
        raise ShapeError(f"Guided gradient shape {guided_grad.shape} doesn't match depth shape {np.shape(d_star)}.")
    n = h * w
    k = 1.0 if d_prev is None else 2.0
    matrix = k * sp.identity(n, format="csr") + lambda_d * gradient_normal_matrix(h, w)
    rhs = _flat(d_star, h, w, "D*") + lambda_d * divergence_adjoint(guided_grad).values.reshape(-1)
    if d_prev is not None:
        rhs = rhs + _flat(d_prev, h, w, "previous-level depth")
    return ScreenedPoissonSystem(matrix.tocsr(), rhs, (h, w))


# The coupled system for one color channel. Unknowns are ``[A; S]``; the image formation term ``L^2 (I - A - S)^2`` couples the blocks.
def intrinsic_channel_system(
    i: Tensor,
    # ``L^2``, the squared luminance weight.
    weight: Tensor,
    ga: GradientField,
    gs: GradientField,
    a_prev: Optional[Tensor],
    s_prev: Optional[Tensor],
    lambda_a: float,
    lambda_s: float,
) -> ScreenedPoissonSystem:
    h, w = np.shape(i)[:2]
    n = h * w
    wvec = _flat(weight, h, w, "luminance weight")
    if a_prev is None and s_prev is None:
        if not wvec.any():
            raise GaugeError("The luminance weight is zero everywhere and no previous level anchors the solution.")
        if lambda_a == 0 and lambda_s == 0:
            raise GaugeError("lambda_A = lambda_S = 0 with no previous level: nothing separates albedo from shading.")
    elif a_prev is None or s_prev is None:
        raise ValueError("Pass both previous-level albedo and shading, or neither.")

    p = 0.0 if a_prev is None else 1.0
    wdiag = sp.diags(wvec)
    lap = gradient_normal_matrix(h, w)
    eye = sp.identity(n)
    matrix = sp.bmat(
        [
            [wdiag + p * eye + lambda_a * lap, wdiag],
            [wdiag, wdiag + p * eye + lambda_s * lap],
        ],
        format="csr",
    )
    wi = wvec * _flat(i, h, w, "I")
    rhs_a = wi + lambda_a * divergence_adjoint(ga).values.reshape(-1)
    rhs_s = wi + lambda_s * divergence_adjoint(gs).values.reshape(-1)
    gauge = None
    if a_prev is None:
        # ``(A + c, S - c)`` leaves the energy unchanged.
        gauge = np.concatenate([np.ones(n), -np.ones(n)])
    else:
        rhs_a = rhs_a + _flat(a_prev, h, w, "previous-level albedo")
        rhs_s = rhs_s + _flat(s_prev, h, w, "previous-level shading")
    return ScreenedPoissonSystem(matrix, np.concatenate([rhs_a, rhs_s]), (h, w), gauge)


# Conjugate gradients
# ===================
@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    # Relative residual ``|b - Ax| / |b|`` after each iteration.
    residuals: List[float] = field(default_factory=list)
    # ``x^T A x / 2 - b^T x`` after each iteration; CG decreases it monotonically.
    objectives: List[float] = field(default_factory=list)


Operator = Union[sp.spmatrix, np.ndarray, LinearOperator, Callable[[np.ndarray], np.ndarray]]


def cg_solve(
    apply_operator: Operator,
    rhs: np.ndarray,
    tol: float = 1e-8,
    max_iters: Optional[int] = None,
    # The operator's diagonal, for Jacobi preconditioning. Zero entries are left unscaled.
    preconditioner: Optional[np.ndarray] = None,
) -> CgResult:
    b = np.asarray(rhs, dtype=np.float64).reshape(-1)
    n = b.size
    if callable(apply_operator) and not isinstance(apply_operator, (sp.spmatrix, np.ndarray, LinearOperator)):
        op: Union[sp.spmatrix, np.ndarray, LinearOperator] = LinearOperator((n, n), matvec=apply_operator, dtype=np.float64)
    else:
        op = apply_operator  # type: ignore
    max_iters = max_iters or 10 * n
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return CgResult(np.zeros(n), 0, [0.0], [0.0])

    m = None
    if preconditioner is not None:
        diag = np.asarray(preconditioner, dtype=np.float64)
        inv = np.divide(1.0, diag, out=np.ones_like(diag), where=diag != 0)
        m = sp.diags(inv)

    result = CgResult(np.zeros(n), 0)

    def record(xk: np.ndarray) -> None:
        ax = op @ xk
        result.iterations += 1
        result.residuals.append(float(np.linalg.norm(b - ax)) / bnorm)
        result.objectives.append(float(0.5 * xk @ ax - b @ xk))

    x, info = cg(op, b, rtol=tol, atol=0.0, maxiter=max_iters, M=m, callback=record)
    result.x = x
    final = float(np.linalg.norm(b - op @ x)) / bnorm
    if info != 0:
        jflogger.error(f"CG stopped after {result.iterations} iterations with relative residual {final:.3e}.")
        raise SolverError("Conjugate gradients did not converge", final, result.iterations)
    jflogger.debug(f"CG converged in {result.iterations} iterations; relative residual {final:.3e}.")
    return result


# Inference solves
# ================
def solve_depth(
    d_star: Tensor,
    d_prev: Optional[Tensor],
    guided_grad: GradientField,
    lambda_d: float,
    tol: float = 1e-8,
    max_iters: Optional[int] = None,
) -> Tensor:
    system = depth_system(d_star, d_prev, guided_grad, lambda_d)
    h, w = system.shape
    return system.solve(tol, max_iters).x.reshape(h, w, 1)


def solve_intrinsic(
    i: Tensor,
    # The luminance weight ``L`` (not squared), ``(H, W)`` or ``(H, W, 1)``.
    lum: Tensor,
    ga: GradientField,
    gs: GradientField,
    a_prev: Optional[Tensor],
    s_prev: Optional[Tensor],
    lambda_a: float,
    lambda_s: float,
    tol: float = 1e-8,
    max_iters: Optional[int] = None,
) -> Tuple[Tensor, Tensor]:
    i = np.asarray(i, dtype=np.float64)
    h, w, c = i.shape
    weight = np.asarray(lum, dtype=np.float64).reshape(h, w) ** 2

    def channel(k: int) -> np.ndarray:
        system = intrinsic_channel_system(
            i[:, :, k],
            weight,
            GradientField(ga.gx[:, :, k : k + 1], ga.gy[:, :, k : k + 1]),
            GradientField(gs.gx[:, :, k : k + 1], gs.gy[:, :, k : k + 1]),
            None if a_prev is None else np.asarray(a_prev)[:, :, k],
            None if s_prev is None else np.asarray(s_prev)[:, :, k],
            lambda_a,
            lambda_s,
        )
        return system.solve(tol, max_iters).x

    # The channels are independent; ``map`` keeps them in order.
    with ThreadPoolExecutor(max_workers=settings.workers) as pool:
        solutions = list(pool.map(channel, range(c)))
    n = h * w
    a = np.stack([x[:n].reshape(h, w) for x in solutions], axis=-1)
    s = np.stack([x[n:].reshape(h, w) for x in solutions], axis=-1)
    return a, s
