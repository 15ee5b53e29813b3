"""Synthetic data generation and the three reconstruction methods.

* inversion: least-squares solve of the affine statistics map; unbiased but
  may land outside the physical state set,
* least squares: inversion followed by projection onto the physical set
  (radial rescaling for qubits, eigenvalue clipping in higher dimension),
* maximum likelihood: the symmetrized fixed-point iteration
  rho <- (R rho + rho R)/2 with R = (1/M) sum (pbar/phat) Pi, started from
  the projected inversion estimate; physical inversion estimates are
  accepted as-is since they already maximize the likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bloch import EIGENVALUE_FLOOR, ExperimentSetup, HermitianBasis, \
    bloch_to_density, max_bloch_radius, probabilities
from .errors import SingularityError, ValidationError

#: probability floor inside the likelihood ratio pbar/phat
ML_PROBABILITY_FLOOR = 1e-12
#: iteration stops when the trace distance between successive states drops here
ML_CONVERGENCE = 1e-9
ML_MAX_ITERATIONS = 5000


@dataclass(frozen=True)
class DataRecord:
    """Outcome counts of one simulated experiment."""

    counts: np.ndarray            # per outcome, aligned with setup rows
    shots: np.ndarray             # per configuration
    seed: tuple[int, ...]

    def __post_init__(self):
        self.counts.setflags(write=False)
        self.shots.setflags(write=False)

    @property
    def n_total(self) -> int:
        return int(self.shots.sum())

    def frequencies(self, setup: ExperimentSetup) -> np.ndarray:
        """Empirical outcome frequencies n / N per configuration block."""
        shots_rows = self.shots[setup.config_index]
        with np.errstate(divide="ignore", invalid="ignore"):
            freq = np.where(shots_rows > 0, self.counts / shots_rows, 0.0)
        return freq


@dataclass(frozen=True)
class Estimate:
    """A reconstructed state with its method tag and physicality flag."""

    r: np.ndarray
    basis: HermitianBasis
    method: str
    physical: bool
    iterations: int = 0

    def density(self) -> np.ndarray:
        return bloch_to_density(self.r, self.basis)


def _seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def sample_data(setup: ExperimentSetup, shots: np.ndarray, r: np.ndarray,
                seed) -> DataRecord:
    """Draw multinomial counts for every configuration.

    Each configuration uses its own generator derived from the seed tuple
    extended by the configuration index, so results are reproducible and
    independent configurations can be regenerated in isolation.
    """
    shots = np.asarray(shots, dtype=int)
    if len(shots) != setup.n_configs:
        raise ValidationError("one shot count per configuration required")
    p = probabilities(setup, r)
    if p.min() < -1e-9:
        raise ValidationError(
            f"state produces negative probability {p.min():.3e}; "
            "it is not physical")
    base = _seed_tuple(seed)
    counts = np.zeros(setup.n_outcomes_total, dtype=int)
    for gamma, sl in enumerate(setup.config_slices()):
        if shots[gamma] == 0:
            continue
        block = np.clip(p[sl], 0.0, None)
        block = block / block.sum()
        rng = np.random.default_rng(base + (gamma,))
        counts[sl] = rng.multinomial(int(shots[gamma]), block)
    return DataRecord(counts=counts, shots=shots, seed=base)


def is_physical_bloch(r: np.ndarray, basis: HermitianBasis) -> bool:
    rho = bloch_to_density(r, basis)
    return float(np.linalg.eigvalsh(rho).min()) >= EIGENVALUE_FLOOR


def invert(setup: ExperimentSetup, data: DataRecord) -> Estimate:
    """Least-squares solution of A r = pbar - c (exact solve when minimal).

    The result may be unphysical; the flag records which.
    """
    freq = data.frequencies(setup)
    rhs = freq - setup.offsets
    sol, _, rank, _ = np.linalg.lstsq(setup.a_matrix, rhs, rcond=None)
    if rank < setup.n_parameters:
        raise SingularityError(
            f"measurement map has rank {rank} < {setup.n_parameters}; "
            "inversion is underdetermined")
    return Estimate(r=sol, basis=setup.basis, method="inversion",
                    physical=is_physical_bloch(sol, setup.basis))


def least_squares(estimate: Estimate) -> Estimate:
    """Project an estimate onto the physical set.

    Qubits: rescale the coordinate vector onto the physical sphere when it
    sticks out.  Higher dimensions (where the physical set is not a ball):
    clip negative eigenvalues to zero and renormalize the trace.  The
    latter is a pragmatic extension of the qubit rule.
    """
    basis = estimate.basis
    if estimate.physical:
        return replace(estimate, method="least-squares")
    if basis.dimension == 2:
        radius = max_bloch_radius(2)
        norm = float(np.linalg.norm(estimate.r))
        r_new = estimate.r if norm == 0.0 else estimate.r * (radius / norm)
    else:
        rho = estimate.density()
        vals, vecs = np.linalg.eigh(rho)
        vals = np.clip(vals, 0.0, None)
        vals = vals / vals.sum()
        rho_new = (vecs * vals) @ vecs.conj().T
        r_new = np.real(np.einsum("ab,jba->j", rho_new, basis.elements))
    return Estimate(r=r_new, basis=basis, method="least-squares", physical=True)


def log_likelihood(setup: ExperimentSetup, data: DataRecord,
                   r: np.ndarray) -> float:
    """Log-likelihood sum n ln p, ignoring the count-ordering prefactor."""
    p = probabilities(setup, r)
    total = 0.0
    for n, prob in zip(data.counts, p):
        if n == 0:
            continue
        if prob <= 0.0:
            return float("-inf")
        total += n * math.log(prob)
    return total


def _trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())


def max_likelihood(setup: ExperimentSetup, data: DataRecord,
                   initial: Estimate | None = None) -> Estimate:
    """Maximum-likelihood reconstruction via the symmetrized fixed point.

    A physical inversion estimate is returned directly (zero iterations).
    Otherwise the iteration starts from the projected estimate and stops
    when successive states are closer than the trace-distance tolerance.
    The iterate with the highest log-likelihood seen is returned, so the
    output never scores below its starting point.
    """
    inv_est = invert(setup, data) if initial is None else initial
    if inv_est.physical:
        return replace(inv_est, method="max-likelihood", iterations=0)
    start = least_squares(inv_est)

    basis = setup.basis
    pis = np.stack([out.matrix for cfg in setup.configs for out in cfg.outcomes])
    freq = data.frequencies(setup)
    m = setup.n_configs

    rho = bloch_to_density(start.r, basis)
    best_r = start.r
    best_ll = log_likelihood(setup, data, start.r)
    iterations = 0
    for iterations in range(1, ML_MAX_ITERATIONS + 1):
        r_vec = np.real(np.einsum("ab,jba->j", rho, basis.elements))
        p_hat = np.maximum(probabilities(setup, r_vec), ML_PROBABILITY_FLOOR)
        ratio = freq / p_hat
        r_op = np.einsum("i,iab->ab", ratio, pis) / m
        rho_next = 0.5 * (r_op @ rho + rho @ r_op)
        rho_next = 0.5 * (rho_next + rho_next.conj().T)
        step = _trace_distance(rho_next, rho)
        rho = rho_next
        if step < ML_CONVERGENCE:
            break

    r_final = np.real(np.einsum("ab,jba->j", rho, basis.elements))
    ll_final = log_likelihood(setup, data, r_final)
    if ll_final < best_ll or not is_physical_bloch(r_final, basis):
        r_final = best_r
    return Estimate(r=r_final, basis=basis, method="max-likelihood",
                    physical=True, iterations=iterations)
