"""Design that minimizes the variance of the reconstruction bound over the
state space ("fair" tomography).

For minimal setups the bound is B(r) = sum b(r)/lambda with b quadratic in
the state, so B is a quadratic polynomial in r and its variance over the
averaging ball is exactly expressible through the ball moments:

    var B = lam^{-1 T} V lam^{-1},      V_{gamma delta} = sum of the
    covariances Cov(b_A, b_B) over the outcome pairs of the two blocks.

Writing b_A = p_A (d_A - (D p)_A) with p = c + A r, each b_A splits into a
constant, a linear form l_A . r and a quadratic form -r^T S_A r with
S_A = sym(a_A w_A^T), w = D a.  Over an isotropic ball the covariance then
collapses to

    Cov(b_A, b_B) = <<x^2>> l_A . l_B
                    + (<<x^2 y^2>> - <<x^2>>^2) (tr S_A)(tr S_B)
                    + <<x^2 y^2>> [ (a_A.a_B)(w_A.w_B) + (a_A.w_B)(w_A.a_B) ],

using <<x^4>> = 3 <<x^2 y^2>>.  The distinct-coordinate double sums hidden
in the trace and scalar-product terms are evaluated as full sums minus
their diagonals, keeping every entry at O((N^2-1)^2) cost.

The minimizing design solves V lam^{-1} = eta lam^2 on the simplex, which a
damped Newton iteration reaches to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import SphereMoments, sphere_moments
from .bloch import ExperimentSetup
from .design import Design
from .design_numeric import OptimizerSettings
from .errors import ConvergenceError, ValidationError
from .fisher import kernel_matrices


@dataclass(frozen=True)
class VarianceMatrix:
    """Variance data of the bound over the state space.

    ``entries`` holds the per-outcome-pair covariances; ``matrix`` their
    block aggregation over configurations.  ``w_matrix`` = D A and
    ``x_matrix`` = A * W (elementwise) are the building blocks reused by
    diagnostics and tests.
    """

    matrix: np.ndarray = field(repr=False)
    entries: np.ndarray = field(repr=False)
    w_matrix: np.ndarray = field(repr=False)
    x_matrix: np.ndarray = field(repr=False)
    moments: SphereMoments
    config_index: np.ndarray = field(repr=False)


def variance_matrix(setup: ExperimentSetup, radius: float) -> VarianceMatrix:
    """Exact covariance matrix of the bound contributions over the ball.

    Requires a minimal setup; raises the dimension mismatch otherwise.
    """
    gram, block, diag, red = kernel_matrices(setup)
    mom = sphere_moments(setup.dimension, radius)
    a_t = red.a_matrix
    c_t = red.offsets
    w = block @ a_t                       # rows w_A = (D a)_A
    x = a_t * w                           # X_{A j} = a_{A j} w_{A j}

    lin = (diag - block @ c_t)[:, None] * a_t - c_t[:, None] * w
    tr_s = x.sum(axis=1)                  # tr S_A = sum_j a_{A j} w_{A j}
    cross = a_t @ w.T                     # (a_A . w_B)
    entries = (
        mom.x2 * (lin @ lin.T)
        + (mom.x2y2 - mom.x2 ** 2) * np.outer(tr_s, tr_s)
        + mom.x2y2 * (gram * (w @ w.T) + cross * cross.T)
    )
    entries = 0.5 * (entries + entries.T)

    onehot = (red.config_index[:, None]
              == np.arange(setup.n_configs)[None, :]).astype(float)
    matrix = onehot.T @ entries @ onehot
    matrix = 0.5 * (matrix + matrix.T)
    return VarianceMatrix(matrix=matrix, entries=entries, w_matrix=w,
                          x_matrix=x, moments=mom,
                          config_index=red.config_index)


def crb_variance(variance: VarianceMatrix | np.ndarray, design: Design) -> float:
    """Quadratic form lam^{-1 T} V lam^{-1}; +inf on zero weights."""
    v = variance.matrix if isinstance(variance, VarianceMatrix) else np.asarray(variance)
    lam = design.weights
    if np.any(lam <= 0.0):
        return float("inf")
    inv = 1.0 / lam
    return float(inv @ v @ inv)


@dataclass(frozen=True)
class OdtResult:
    design: Design
    variance: float
    eta: float
    residual: float
    iterations: int


def odt_design(variance: VarianceMatrix | np.ndarray,
               settings: OptimizerSettings | None = None) -> OdtResult:
    """Design minimizing the bound variance.

    Newton iteration on the stationarity system V lam^{-1} = eta lam^2 with
    the simplex constraint; the reported residual is that equation's norm
    scaled by max(1, eta).
    """
    v = variance.matrix if isinstance(variance, VarianceMatrix) else np.asarray(variance)
    settings = settings or OptimizerSettings(tolerance=1e-10)
    m = v.shape[0]
    if not np.any(v):
        raise ValidationError("variance matrix is zero; every design is stationary")
    lam = np.full(m, 1.0 / m)

    def value(l):
        inv = 1.0 / l
        return float(inv @ v @ inv)

    def residual_of(l):
        inv = 1.0 / l
        vi = v @ inv
        l2 = l * l
        eta = float((l2 @ vi) / (l2 @ l2))
        return float(np.linalg.norm(vi - eta * l2)) / max(1.0, abs(eta)), eta

    best = (lam.copy(), value(lam), np.inf, 0.0)
    for iteration in range(settings.max_iterations):
        res, eta = residual_of(lam)
        if res < best[2]:
            best = (lam.copy(), value(lam), res, eta)
        if res <= settings.tolerance:
            return OdtResult(design=Design(lam / lam.sum()), variance=value(lam),
                             eta=eta, residual=res, iterations=iteration)
        inv = 1.0 / lam
        vi = v @ inv
        grad = -2.0 * vi * inv * inv
        hess = 4.0 * np.diag(vi * inv ** 3) + 2.0 * (inv ** 2)[:, None] * v * (inv ** 2)[None, :]
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = hess
        kkt[:m, m] = 1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([-grad, [1.0 - lam.sum()]])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        step = sol[:m]
        neg = step < 0
        alpha = 1.0 if not np.any(neg) else min(1.0, 0.9 * float(np.min(-lam[neg] / step[neg])))
        base = value(lam)
        slope = float(grad @ step)
        accepted = False
        while alpha > 1e-14:
            cand = lam + alpha * step
            if np.all(cand > 0) and value(cand) <= base + 1e-4 * alpha * min(slope, 0.0):
                lam = cand
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break

    res, eta = residual_of(lam)
    if res <= settings.tolerance:
        return OdtResult(design=Design(lam / lam.sum()), variance=value(lam),
                         eta=eta, residual=res, iterations=settings.max_iterations)
    raise ConvergenceError(
        f"fairness design stalled at residual {best[2]:.3e}",
        best=OdtResult(design=Design(best[0] / best[0].sum()), variance=best[1],
                       residual=best[2], eta=best[3],
                       iterations=settings.max_iterations),
        residual=best[2])
