"""Triangular-factor parameterization of the density matrix and the
constrained reconstruction bound.

Writing rho = T^dagger T with T upper triangular (nonnegative real
diagonal) encodes positivity structurally; the remaining degrees of freedom
form the real unit vector theta obtained by vectorizing the real and
imaginary parts of T^dagger column by column and dropping the structural
zeros.  Outcome probabilities become quadratic forms p = theta^T Q theta,
and the information matrix in these coordinates always has theta as an
eigenvector with eigenvalue 4, which reduces the equality-constrained bound
to tr{F^{-1}} - 1/4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bloch import ExperimentSetup, probabilities as bloch_probabilities
from .design import Design
from .design_numeric import DesignResult, OptimizerSettings, \
    WeightedDesignProblem, minimize_crb_on_simplex
from .errors import SingularityError, ValidationError
from .fisher import FisherBundle, PROBABILITY_FLOOR, bundle_from_matrix, \
    weighted_information

#: eigenvalues of rho above this may be clipped to zero before factoring
CLIP_FLOOR = -1e-10
#: pivot threshold for declaring a factor row structurally zero
PIVOT_TOL = 1e-14


@lru_cache(maxsize=None)
def theta_index_map(dimension: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the kept entries of t = [vec Re(T^dag); vec Im(T^dag)].

    Vectorization is column-major over the full N x N array; the lower
    triangle (including the diagonal) survives in the real block and the
    strictly lower triangle in the imaginary block, giving N^2 coordinates.
    """
    n = dimension
    real_keep, imag_keep = [], []
    for col in range(n):
        for row in range(n):
            flat = col * n + row
            if row >= col:
                real_keep.append(flat)
            if row > col:
                imag_keep.append(n * n + flat)
    return np.array(real_keep, dtype=int), np.array(imag_keep, dtype=int)


def kept_indices(dimension: int) -> np.ndarray:
    real_keep, imag_keep = theta_index_map(dimension)
    return np.concatenate([real_keep, imag_keep])


@dataclass(frozen=True)
class CholeskyState:
    """Factor T, its full coefficient vector t, and the reduced theta."""

    factor: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    dimension: int


def _semidefinite_upper_factor(rho: np.ndarray, dimension: int) -> np.ndarray:
    """Upper-triangular T with rho = T^dag T and nonnegative real diagonal.

    Rank deficiency is handled by zeroing the remainder of a row whenever
    its pivot vanishes, which fixes the factor uniquely for the states this
    package produces.
    """
    n = dimension
    t = np.zeros((n, n), dtype=complex)
    for i in range(n):
        pivot = rho[i, i].real - float(np.sum(np.abs(t[:i, i]) ** 2))
        if pivot <= PIVOT_TOL:
            continue
        t[i, i] = np.sqrt(pivot)
        for j in range(i + 1, n):
            t[i, j] = (rho[i, j] - np.vdot(t[:i, i], t[:i, j])) / t[i, i]
    return t


def cholesky_vector(rho: np.ndarray, clip: bool = True) -> CholeskyState:
    """Factor a unit-trace positive matrix into its coefficient vector.

    Eigenvalues in [-1e-10, 0) are clipped to zero (with the matrix rebuilt)
    when ``clip`` is set, which is what estimated states need; anything more
    negative is rejected.
    """
    rho = np.asarray(rho, dtype=complex)
    herm = np.abs(rho - rho.conj().T).max()
    if herm > 1e-10:
        raise ValidationError(f"matrix is not Hermitian (asymmetry {herm:.3e})")
    trace_err = abs(np.trace(rho).real - 1.0)
    if trace_err > 1e-10:
        raise ValidationError(f"matrix trace deviates from 1 by {trace_err:.3e}")
    n = rho.shape[0]
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < CLIP_FLOOR:
        raise ValidationError(
            f"matrix has negative eigenvalue {vals.min():.3e}")
    if vals.min() < 0.0:
        if not clip:
            raise ValidationError(
                f"matrix has negative eigenvalue {vals.min():.3e}")
        vals_c, vecs = np.linalg.eigh(rho)
        vals_c = np.clip(vals_c, 0.0, None)
        rho = (vecs * vals_c) @ vecs.conj().T

    factor = _semidefinite_upper_factor(rho, n)
    t_dag = factor.conj().T
    t = np.concatenate([np.real(t_dag).flatten(order="F"),
                        np.imag(t_dag).flatten(order="F")])
    theta = t[kept_indices(n)]
    norm = float(np.linalg.norm(theta))
    if abs(norm - 1.0) > 1e-8:
        raise ValidationError(f"coefficient vector norm {norm} deviates from 1")
    theta = theta / norm
    return CholeskyState(factor=factor, t=t, theta=theta, dimension=n)


def theta_to_density(theta: np.ndarray, dimension: int) -> np.ndarray:
    """Rebuild rho = T^dag T from a coefficient vector."""
    theta = np.asarray(theta, dtype=float)
    n = dimension
    if theta.shape != (n * n,):
        raise ValidationError(
            f"coefficient vector must have length {n * n}, got {theta.shape}")
    t_full = np.zeros(2 * n * n)
    t_full[kept_indices(n)] = theta
    t_dag = (t_full[:n * n] + 1j * t_full[n * n:]).reshape((n, n), order="F")
    return t_dag @ t_dag.conj().T


@dataclass(frozen=True)
class QuadraticForms:
    """Per-outcome quadratic forms Q with p = theta^T Q theta.

    ``embeddings`` holds the 2N^2 x 2N^2 real forms on the full t vector
    and ``separation_matrix`` the complex-to-real splitter they derive
    from; both are retained because the structural identities they satisfy
    are asserted in the tests.
    """

    forms: np.ndarray = field(repr=False)
    embeddings: np.ndarray = field(repr=False)
    separation_matrix: np.ndarray = field(repr=False)
    dimension: int


def separation_matrix(dimension: int) -> np.ndarray:
    """The 2 x 2 block matrix [[1, 1], [-i, i]] kron identity, which maps
    the pair (v, conj v) to twice its real and imaginary parts."""
    n2 = dimension * dimension
    core = np.array([[1.0, 1.0], [-1j, 1j]])
    return np.kron(core, np.eye(n2))


def quadratic_forms(setup: ExperimentSetup) -> QuadraticForms:
    """Quadratic statistics forms of every outcome of a setup."""
    n = setup.dimension
    n2 = n * n
    keep = kept_indices(n)
    eye = np.eye(n)
    forms, embeds = [], []
    for cfg in setup.configs:
        for out in cfg.outcomes:
            h = np.kron(eye, out.matrix)
            hr, hi = np.real(h), np.imag(h)
            p_big = np.block([[hr, -hi], [hi, hr]])
            embeds.append(p_big)
            q = p_big[np.ix_(keep, keep)]
            forms.append(0.5 * (q + q.T))
    return QuadraticForms(forms=np.stack(forms), embeddings=np.stack(embeds),
                          separation_matrix=separation_matrix(n),
                          dimension=n)


def theta_probabilities(forms: QuadraticForms, theta: np.ndarray) -> np.ndarray:
    return np.einsum("j,ijk,k->i", theta, forms.forms, theta)


def statistics_rows(forms: QuadraticForms, theta: np.ndarray) -> np.ndarray:
    """Sensitivity rows z = 2 theta^T Q, the quadratic analogue of the
    outcome direction vectors."""
    return 2.0 * np.einsum("j,ijk->ik", theta, forms.forms)


def fisher_cholesky(setup: ExperimentSetup, design: Design, theta: np.ndarray,
                    forms: QuadraticForms | None = None) -> FisherBundle:
    """Information matrix Z^T Lambda P^{-1} Z in factor coordinates.

    theta is always an eigenvector with eigenvalue 4; near-pure states make
    the remaining spectrum collapse, which the bundle reports through its
    singular flag.
    """
    forms = quadratic_forms(setup) if forms is None else forms
    theta = np.asarray(theta, dtype=float)
    p = theta_probabilities(forms, theta)
    lam_rows = design.weights[setup.config_index]
    active = lam_rows > 0
    if np.any(active & (p <= PROBABILITY_FLOOR)):
        row = int(np.nonzero(active & (p <= PROBABILITY_FLOOR))[0][0])
        raise SingularityError(
            f"outcome {setup.outcome_label(row)} has probability {p[row]:.3e} "
            "in factor coordinates")
    weights = np.where(active, lam_rows / np.maximum(p, PROBABILITY_FLOOR), 0.0)
    z = statistics_rows(forms, theta)
    return bundle_from_matrix(weighted_information(z, weights))


@dataclass(frozen=True)
class CcrbResult:
    """Constrained bound by null-space projection, with the closed form."""

    value: float
    closed_form: float
    singular: bool


def ccrb(bundle: FisherBundle, theta: np.ndarray) -> CcrbResult:
    """Constrained bound for the unit-norm constraint on theta.

    Projects the information matrix onto the orthogonal complement of theta
    and inverts there; the closed form tr{F^{-1}} - 1/4 is returned
    alongside whenever the full matrix is invertible.  Pure states make the
    restricted matrix singular and the bound infinite.
    """
    theta = np.asarray(theta, dtype=float)
    n2 = len(theta)
    basis = np.linalg.qr(
        np.concatenate([theta[:, None], np.eye(n2)], axis=1))[0]
    u = basis[:, 1:n2]
    restricted = u.T @ bundle.matrix @ u
    vals = np.linalg.eigvalsh(0.5 * (restricted + restricted.T))
    top = vals[-1] if len(vals) else 0.0
    singular = top <= 0.0 or vals[0] < 1e-12 * top
    value = float("inf") if singular else float(np.sum(1.0 / vals))
    closed = bundle.crb - 0.25 if not bundle.singular else float("inf")
    return CcrbResult(value=value, closed_form=closed, singular=singular)


def constrained_crb(setup: ExperimentSetup, design: Design, theta: np.ndarray,
                    forms: QuadraticForms | None = None) -> CcrbResult:
    """Convenience wrapper: information matrix plus constrained bound."""
    return ccrb(fisher_cholesky(setup, design, theta, forms), theta)


def optimize_design_cholesky(setup: ExperimentSetup, theta: np.ndarray,
                             settings: OptimizerSettings | None = None,
                             forms: QuadraticForms | None = None) -> DesignResult:
    """Design minimizing the constrained bound at a factor-space state.

    The constant shift between tr{F^{-1}} and the constrained bound does
    not move the optimum, so the simplex optimizer runs on the plain trace
    with the quadratic sensitivity rows in place of the affine ones.  The
    returned objective is the constrained bound.
    """
    forms = quadratic_forms(setup) if forms is None else forms
    theta = np.asarray(theta, dtype=float)
    p = theta_probabilities(forms, theta)
    if np.any(p <= PROBABILITY_FLOOR):
        row = int(np.argmin(p))
        raise SingularityError(
            f"outcome {setup.outcome_label(row)} has probability {p[row]:.3e} "
            "in factor coordinates; the bound is undefined here")
    problem = WeightedDesignProblem(rows=statistics_rows(forms, theta),
                                    row_weights=1.0 / p,
                                    config_index=setup.config_index,
                                    n_configs=setup.n_configs)
    result = minimize_crb_on_simplex(problem, settings)
    return DesignResult(design=result.design, objective=result.objective - 0.25,
                        eta=result.eta, residual=result.residual,
                        iterations=result.iterations, boundary=result.boundary)
