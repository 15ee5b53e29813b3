"""Bloch-vector algebra: operator basis, state/POVM coordinates, statistics map.

A density matrix on an N-dimensional system is written rho = I/N + r.sigma,
where sigma is an orthonormal basis of traceless Hermitian matrices
(tr{sigma_j sigma_k} = delta_jk) and r is a real vector of length N^2 - 1.
POVM elements decompose the same way, Pi = c I + a.sigma, so that outcome
probabilities are affine in the state: p = c + A r, with the rows of A given
by the outcome vectors a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

#: tolerance for Hermiticity / unit-trace / completeness checks on inputs
INPUT_TOL = 1e-10
#: smallest admissible eigenvalue of a state or POVM element
EIGENVALUE_FLOOR = -1e-10
#: tolerance for basis orthonormality and reconstruction identities
ALGEBRA_TOL = 1e-12


@dataclass(frozen=True)
class HermitianBasis:
    """Orthonormal basis of the traceless Hermitian N x N matrices.

    ``elements`` has shape (N^2 - 1, N, N).  The construction order is fixed:
    symmetric off-diagonal pairs (E_jk + E_kj)/sqrt(2) for j < k in row-major
    order, then the antisymmetric pairs -i(E_jk - E_kj)/sqrt(2), then the
    diagonal matrices diag(1, ..., 1, -m, 0, ...)/sqrt(m(m+1)) for
    m = 1 .. N-1.  For N = 2 this gives the Pauli matrices divided by
    sqrt(2).  Every downstream coordinate vector depends on this order.
    """

    dimension: int
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.elements.setflags(write=False)

    def __len__(self) -> int:
        return self.elements.shape[0]

    def gram_matrix(self) -> np.ndarray:
        """Matrix of trace inner products tr{sigma_j sigma_k}."""
        return np.real(np.einsum("jab,kba->jk", self.elements, self.elements))


def generate_basis(dimension: int) -> HermitianBasis:
    """Build the generalized Gell-Mann basis for an N-dimensional system."""
    if dimension < 2:
        raise ValidationError(f"system dimension must be at least 2, got {dimension}")
    n = dimension
    mats = []
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[j, k] = inv_sqrt2
            m[k, j] = inv_sqrt2
            mats.append(m)
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[j, k] = -1j * inv_sqrt2
            m[k, j] = 1j * inv_sqrt2
            mats.append(m)
    for m_idx in range(1, n):
        diag = np.zeros(n)
        diag[:m_idx] = 1.0
        diag[m_idx] = -m_idx
        mats.append(np.diag(diag).astype(complex) / math.sqrt(m_idx * (m_idx + 1)))
    return HermitianBasis(dimension=n, elements=np.stack(mats))


def max_bloch_radius(dimension: int) -> float:
    """Radius of the sphere containing all physical states, sqrt((N-1)/N)."""
    return math.sqrt((dimension - 1) / dimension)


@dataclass(frozen=True)
class BlochState:
    """A state given by its coordinate vector in a fixed operator basis."""

    r: np.ndarray
    basis: HermitianBasis

    @property
    def physical(self) -> bool:
        rho = bloch_to_density(self.r, self.basis)
        return float(np.linalg.eigvalsh(rho).min()) >= EIGENVALUE_FLOOR


def _check_hermitian(matrix: np.ndarray, what: str) -> None:
    asym = np.abs(matrix - matrix.conj().T).max()
    if asym > INPUT_TOL:
        raise ValidationError(f"{what} is not Hermitian (asymmetry {asym:.3e})")


def density_to_bloch(rho: np.ndarray, basis: HermitianBasis) -> BlochState:
    """Coordinates r_j = tr{rho sigma_j} of a unit-trace Hermitian matrix."""
    rho = np.asarray(rho, dtype=complex)
    _check_hermitian(rho, "density matrix")
    trace_err = abs(np.trace(rho) - 1.0)
    if trace_err > INPUT_TOL:
        raise ValidationError(f"density matrix trace deviates from 1 by {trace_err:.3e}")
    r = np.real(np.einsum("ab,jba->j", rho, basis.elements))
    return BlochState(r=r, basis=basis)


def bloch_to_density(r: np.ndarray, basis: HermitianBasis) -> np.ndarray:
    """Reconstruct rho = I/N + r.sigma from coordinates."""
    r = np.asarray(r, dtype=float)
    n = basis.dimension
    return np.eye(n, dtype=complex) / n + np.einsum("j,jab->ab", r, basis.elements)


@dataclass(frozen=True)
class PovmOutcome:
    """One POVM element with its affine coordinates Pi = c I + a.sigma."""

    matrix: np.ndarray
    offset: float
    direction: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.direction.setflags(write=False)


def povm_to_affine(pi: np.ndarray, basis: HermitianBasis) -> PovmOutcome:
    """Decompose a positive Hermitian matrix into (c, a) coordinates."""
    pi = np.asarray(pi, dtype=complex)
    _check_hermitian(pi, "POVM element")
    lam_min = float(np.linalg.eigvalsh(pi).min())
    if lam_min < EIGENVALUE_FLOOR:
        raise ValidationError(f"POVM element has negative eigenvalue {lam_min:.3e}")
    c = float(np.real(np.trace(pi))) / basis.dimension
    a = np.real(np.einsum("ab,jba->j", pi, basis.elements))
    return PovmOutcome(matrix=pi, offset=c, direction=a)


def outcome_from_affine(offset: float, direction: np.ndarray,
                        basis: HermitianBasis) -> PovmOutcome:
    """Build a PovmOutcome from coordinates; the matrix is reconstructed."""
    direction = np.asarray(direction, dtype=float)
    matrix = offset * np.eye(basis.dimension, dtype=complex) \
        + np.einsum("j,jab->ab", direction, basis.elements)
    return PovmOutcome(matrix=matrix, offset=float(offset), direction=direction)


@dataclass(frozen=True)
class MeasurementConfig:
    """One apparatus setting with its complete, mutually exclusive outcomes."""

    label: str
    outcomes: tuple[PovmOutcome, ...]

    def __post_init__(self):
        if len(self.outcomes) < 2:
            raise ValidationError(
                f"configuration {self.label!r} needs at least 2 outcomes")

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)


def config_from_matrices(label: str, matrices, basis: HermitianBasis) -> MeasurementConfig:
    return MeasurementConfig(
        label=label,
        outcomes=tuple(povm_to_affine(m, basis) for m in matrices),
    )


def config_from_affine(label: str, offsets, directions,
                       basis: HermitianBasis) -> MeasurementConfig:
    return MeasurementConfig(
        label=label,
        outcomes=tuple(outcome_from_affine(c, a, basis)
                       for c, a in zip(offsets, directions, strict=True)),
    )


@dataclass(frozen=True)
class Reduction:
    """Independent-outcome view of a setup, with one outcome per
    configuration eliminated through the completeness constraint."""

    a_matrix: np.ndarray        # (n_ind, N^2-1)
    offsets: np.ndarray         # (n_ind,)
    kept_rows: np.ndarray       # indices into the full outcome list
    dropped_rows: np.ndarray    # one per configuration
    config_index: np.ndarray    # configuration of each kept row

    @property
    def n_independent(self) -> int:
        return self.a_matrix.shape[0]


@dataclass(frozen=True)
class ExperimentSetup:
    """A measurement ensemble together with its affine statistics map.

    ``a_matrix`` stacks the outcome vectors a as rows (shape
    n_tot x (N^2-1)), ``offsets`` collects the scalars c, and
    ``config_index`` maps each row to its configuration.  ``reduction`` is
    the default independent-outcome view obtained by deleting the last
    outcome of every configuration.
    """

    basis: HermitianBasis
    configs: tuple[MeasurementConfig, ...]
    a_matrix: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    config_index: np.ndarray = field(init=False, repr=False)
    reduction: Reduction = field(init=False, repr=False)

    def __post_init__(self):
        rows, offs, idx = [], [], []
        for g, cfg in enumerate(self.configs):
            for out in cfg.outcomes:
                rows.append(out.direction)
                offs.append(out.offset)
                idx.append(g)
        object.__setattr__(self, "a_matrix", np.array(rows))
        object.__setattr__(self, "offsets", np.array(offs))
        object.__setattr__(self, "config_index", np.array(idx, dtype=int))
        object.__setattr__(self, "reduction", self.reduce())

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    @property
    def n_configs(self) -> int:
        return len(self.configs)

    @property
    def n_outcomes_total(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_parameters(self) -> int:
        return self.basis.dimension ** 2 - 1

    @property
    def is_minimal(self) -> bool:
        """True when the independent outcomes exactly match the parameter
        count, so the statistics map is square and invertible in principle."""
        return self.reduction.n_independent == self.n_parameters

    def config_slices(self) -> list[slice]:
        """Row ranges of each configuration inside the full outcome list."""
        slices, start = [], 0
        for cfg in self.configs:
            slices.append(slice(start, start + cfg.n_outcomes))
            start += cfg.n_outcomes
        return slices

    def outcome_label(self, row: int) -> str:
        g = int(self.config_index[row])
        offset = row - int(np.searchsorted(self.config_index, g))
        return f"{self.configs[g].label}[{offset}]"

    def reduce(self, drop: list[int] | None = None) -> Reduction:
        """Build an independent-outcome view.

        ``drop`` selects which outcome index to eliminate in each
        configuration; the default is the last one.  The bound computed from
        any choice agrees, which is exercised by the tests.
        """
        if drop is None:
            drop = [cfg.n_outcomes - 1 for cfg in self.configs]
        if len(drop) != self.n_configs:
            raise ValidationError("one dropped outcome per configuration required")
        kept, dropped, cfg_idx = [], [], []
        start = 0
        for g, cfg in enumerate(self.configs):
            if not 0 <= drop[g] < cfg.n_outcomes:
                raise ValidationError(
                    f"dropped outcome {drop[g]} out of range for {cfg.label!r}")
            for alpha in range(cfg.n_outcomes):
                row = start + alpha
                if alpha == drop[g]:
                    dropped.append(row)
                else:
                    kept.append(row)
                    cfg_idx.append(g)
            start += cfg.n_outcomes
        kept = np.array(kept, dtype=int)
        return Reduction(
            a_matrix=self.a_matrix[kept],
            offsets=self.offsets[kept],
            kept_rows=kept,
            dropped_rows=np.array(dropped, dtype=int),
            config_index=np.array(cfg_idx, dtype=int),
        )


def probabilities(setup: ExperimentSetup, r: np.ndarray) -> np.ndarray:
    """Outcome probabilities p = c + A r for all configurations.

    The caller is responsible for supplying a physical state; for such
    states every configuration block sums to one and all entries lie in
    [0, 1].
    """
    return setup.offsets + setup.a_matrix @ np.asarray(r, dtype=float)


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    magnitude: float

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: magnitude {self.magnitude:.3e}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "setup valid"
        return "\n".join(str(v) for v in self.violations)


def validate_setup(setup: ExperimentSetup) -> ValidationReport:
    """Check every structural invariant and report all violations found.

    An empty report means the setup is usable by every other operation.
    """
    found: list[Violation] = []
    basis = setup.basis

    gram = basis.gram_matrix()
    gram_err = np.abs(gram - np.eye(len(basis))).max()
    if gram_err > ALGEBRA_TOL:
        found.append(Violation("basis-orthonormality", "operator basis", float(gram_err)))
    traces = np.abs(np.einsum("jaa->j", basis.elements))
    if traces.max() > ALGEBRA_TOL:
        found.append(Violation("basis-tracelessness", "operator basis", float(traces.max())))
    if len(basis) != basis.dimension ** 2 - 1:
        found.append(Violation("basis-count", "operator basis",
                               float(abs(len(basis) - basis.dimension ** 2 + 1))))

    for cfg in setup.configs:
        c_sum = sum(out.offset for out in cfg.outcomes)
        if abs(c_sum - 1.0) > INPUT_TOL:
            found.append(Violation("completeness-offset", cfg.label, abs(c_sum - 1.0)))
        a_sum = np.abs(sum(out.direction for out in cfg.outcomes)).max()
        if a_sum > INPUT_TOL:
            found.append(Violation("completeness-direction", cfg.label, float(a_sum)))
        for alpha, out in enumerate(cfg.outcomes):
            where = f"{cfg.label}[{alpha}]"
            asym = np.abs(out.matrix - out.matrix.conj().T).max()
            if asym > INPUT_TOL:
                found.append(Violation("hermiticity", where, float(asym)))
                continue
            lam_min = float(np.linalg.eigvalsh(out.matrix).min())
            if lam_min < EIGENVALUE_FLOOR:
                found.append(Violation("positivity", where, -lam_min))
            rebuilt = out.offset * np.eye(basis.dimension) \
                + np.einsum("j,jab->ab", out.direction, basis.elements)
            rec_err = np.abs(rebuilt - out.matrix).max()
            if rec_err > 1e-11:
                found.append(Violation("reconstruction", where, float(rec_err)))

    return ValidationReport(violations=tuple(found))
