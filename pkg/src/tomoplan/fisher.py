"""Fisher information, the reconstruction-error bound, and the kernel
objects of minimal tomography.

For a design lambda and a state with outcome probabilities p, the Fisher
information (per shot) is

    F = sum_{outcomes} (lambda_gamma / p) a a^T = A^T Lambda P^{-1} A,

and B = tr{F^{-1}} bounds the total mean squared error of any unbiased
reconstruction, scaled by the number of shots.  When the setup is minimal
(independent outcomes match the parameter count) the bound has the closed
form B = sum b / lambda with b computed from the Gram matrix of the
measurement directions; this is what the analytic design formulas consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import ExperimentSetup, Reduction, probabilities
from .design import Design
from .errors import MinimalityError, SingularityError

#: probabilities at or below this floor with positive design weight are
#: treated as statistical singularities rather than huge Fisher weights
PROBABILITY_FLOOR = 1e-12

#: eigenvalues below this fraction of the largest are treated as zero
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class FisherBundle:
    """Fisher matrix with its spectral decomposition and the bound tr{F^-1}.

    ``crb`` is +inf when the matrix is singular (``singular`` is then set).
    """

    matrix: np.ndarray = field(repr=False)
    crb: float
    singular: bool
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    def inverse(self) -> np.ndarray:
        if self.singular:
            raise SingularityError("Fisher matrix is singular")
        return (self.eigenvectors / self.eigenvalues) @ self.eigenvectors.T


def bundle_from_matrix(f: np.ndarray) -> FisherBundle:
    """Spectral analysis of a symmetric Fisher matrix.

    The bound is computed as the sum of inverse eigenvalues instead of an
    explicit inverse, and singularity is judged relative to the largest
    eigenvalue.
    """
    f = 0.5 * (f + f.T)
    eigval, eigvec = np.linalg.eigh(f)
    top = eigval[-1] if len(eigval) else 0.0
    singular = top <= 0.0 or eigval[0] < SINGULAR_RTOL * top
    crb = float("inf") if singular else float(np.sum(1.0 / eigval))
    return FisherBundle(matrix=f, crb=crb, singular=singular,
                        eigenvalues=eigval, eigenvectors=eigvec)


def weighted_information(rows: np.ndarray, row_weights: np.ndarray) -> np.ndarray:
    """Assemble sum_i w_i row_i row_i^T as a single matrix product."""
    return rows.T @ (rows * row_weights[:, None])


def _statistical_weights(setup: ExperimentSetup, design: Design,
                         p: np.ndarray) -> np.ndarray:
    """Per-outcome weights lambda_gamma / p, guarding the p -> 0 boundary."""
    lam_rows = design.weights[setup.config_index]
    w = np.zeros_like(p)
    active = lam_rows > 0
    bad = active & (p <= PROBABILITY_FLOOR)
    if np.any(bad):
        row = int(np.nonzero(bad)[0][0])
        raise SingularityError(
            f"outcome {setup.outcome_label(row)} has probability "
            f"{p[row]:.3e} but positive design weight")
    w[active] = lam_rows[active] / p[active]
    return w


def fisher_info(setup: ExperimentSetup, design: Design, r: np.ndarray) -> FisherBundle:
    """Fisher information of the design at a state, with its bound.

    Raises SingularityError when an outcome with positive weight has
    vanishing probability; returns a bundle flagged singular (crb = +inf)
    when the measurement directions fail to span the parameter space.
    """
    p = probabilities(setup, r)
    w = _statistical_weights(setup, design, p)
    return bundle_from_matrix(weighted_information(setup.a_matrix, w))


def averaged_information(setup: ExperimentSetup, design: Design,
                         g: np.ndarray) -> FisherBundle:
    """Fisher bundle with 1/p replaced by fixed per-outcome weights g.

    Used for state-independent design: g holds the state-space averages of
    the reciprocal probabilities.
    """
    g = np.asarray(g, dtype=float)
    lam_rows = design.weights[setup.config_index]
    return bundle_from_matrix(weighted_information(setup.a_matrix, lam_rows * g))


@dataclass(frozen=True)
class MinimalKernel:
    """Closed-form ingredients of the bound for minimal tomography.

    K is the Gram matrix of the independent measurement directions,
    D the block-diagonal part of K^{-1} over configuration blocks,
    d its diagonal, and b = p * (d - D p) the per-outcome bound
    contributions at the reduced probability vector p.
    """

    gram: np.ndarray = field(repr=False)
    block_inverse: np.ndarray = field(repr=False)
    diag_inverse: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    reduction: Reduction = field(repr=False)

    @property
    def config_index(self) -> np.ndarray:
        return self.reduction.config_index


def kernel_matrices(setup: ExperimentSetup,
                    reduction: Reduction | None = None):
    """Gram matrix K of the reduced map and the pieces of its inverse.

    Returns (K, K^{-1} restricted to configuration blocks, diag K^{-1},
    reduction).  Requires a minimal setup.
    """
    red = setup.reduction if reduction is None else reduction
    n_par = setup.n_parameters
    if red.n_independent != n_par:
        raise MinimalityError(
            f"setup has {red.n_independent} independent outcomes but the "
            f"state space has {n_par} parameters; minimal tomography "
            "requires them to match")
    a_tilde = red.a_matrix
    gram = a_tilde @ a_tilde.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularityError(
            "reduced measurement map is rank-deficient (Gram condition "
            f"number {cond:.3e})")
    k_inv = np.linalg.inv(gram)
    block = np.zeros_like(k_inv)
    for g in range(setup.n_configs):
        sel = red.config_index == g
        idx = np.nonzero(sel)[0]
        block[np.ix_(idx, idx)] = k_inv[np.ix_(idx, idx)]
    return gram, block, np.diag(k_inv).copy(), red


def minimal_kernel(setup: ExperimentSetup, r: np.ndarray,
                   drop: list[int] | None = None) -> MinimalKernel:
    """Kernel objects evaluated at a state.

    ``drop`` overrides which outcome of each configuration is eliminated;
    the bound is invariant under that choice.
    """
    reduction = None if drop is None else setup.reduce(drop)
    gram, block, diag, red = kernel_matrices(setup, reduction)
    p_red = red.offsets + red.a_matrix @ np.asarray(r, dtype=float)
    b = p_red * (diag - block @ p_red)
    return MinimalKernel(gram=gram, block_inverse=block, diag_inverse=diag,
                         b=b, probabilities=p_red, reduction=red)


def crb_minimal(kernel: MinimalKernel, design: Design) -> float:
    """Closed-form bound sum_{outcomes} b / lambda for a minimal setup.

    Returns +inf when a configuration with nonzero b receives zero weight.
    """
    lam = design.weights[kernel.config_index]
    total = 0.0
    for b_val, l_val in zip(kernel.b, lam):
        if l_val <= 0.0:
            if abs(b_val) > 0.0:
                return float("inf")
            continue
        total += b_val / l_val
    return float(total)
