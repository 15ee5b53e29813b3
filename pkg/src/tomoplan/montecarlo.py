"""Simulation campaigns on Bloch-ball sample grids.

The grid places Chebyshev nodes along the radius and polar angle and
equispaced nodes around the azimuth; quadrature weights are interpolatory
against the volume element r^2 sin(theta), built from exact modified
moments, so constants integrate to the exact ball volume and smooth
integrands converge spectrally.  Campaigns draw multinomial data for every
(state, run) pair with per-(state, configuration) generator streams derived
from the master seed, reconstruct with the requested estimators in batched
form, and reduce in fixed order, making every result bit-reproducible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bloch import ExperimentSetup, bloch_to_density, max_bloch_radius, \
    probabilities
from .cholesky import cholesky_vector, optimize_design_cholesky, quadratic_forms
from .design import Design, discrepancy, round_design
from .design_analytic import minimal_oed
from .design_numeric import optimize_design
from .errors import SingularityError, TomographyError, ValidationError
from .estimators import ML_CONVERGENCE, ML_MAX_ITERATIONS, \
    ML_PROBABILITY_FLOOR
from .fisher import fisher_info

__all__ = [
    "SphereGrid", "sphere_grid", "CampaignResult", "run_trials",
    "BruteForceResult", "brute_force_average_oed", "discrepancy",
]

_BOUNDARY_SHRINK = 1.0 - 1e-6


def _chebyshev_lobatto(count: int) -> np.ndarray:
    return np.cos(np.pi * np.arange(count - 1, -1, -1) / (count - 1))


def _cheb_definite_integral(coeffs: np.ndarray) -> float:
    """Integral over [-1, 1] of a Chebyshev series."""
    total = 0.0
    for m, c in enumerate(coeffs):
        if m % 2 == 0:
            total += c * 2.0 / (1.0 - m * m)
    return total


def _interpolatory_weights(nodes_u: np.ndarray, moments: np.ndarray) -> np.ndarray:
    """Weights reproducing the given Chebyshev-basis moments at the nodes."""
    n = len(nodes_u)
    vander = np.polynomial.chebyshev.chebvander(nodes_u, n - 1).T
    return np.linalg.solve(vander, moments)


def _radial_rule(count: int, radius: float):
    """Nodes on [0, R] and weights against the measure r^2 dr."""
    u = _chebyshev_lobatto(count)
    r = radius * (u + 1.0) / 2.0
    # moments int_0^R T_k(2r/R - 1) r^2 dr = (R/2)^3 int T_k(u) (u+1)^2 du
    shift = np.array([1.5, 2.0, 0.5])     # (u+1)^2 in the Chebyshev basis
    moments = np.empty(count)
    for k in range(count):
        unit = np.zeros(k + 1)
        unit[k] = 1.0
        product = np.polynomial.chebyshev.chebmul(unit, shift)
        moments[k] = (radius / 2.0) ** 3 * _cheb_definite_integral(product)
    return r, _interpolatory_weights(u, moments)


def _polar_rule(count: int):
    """Nodes on [0, pi] and weights against the measure sin(theta) dtheta."""
    u = _chebyshev_lobatto(count)
    theta = math.pi * (u + 1.0) / 2.0
    # moments (pi/2) int_-1^1 T_k(u) cos(pi u / 2) du by high-order quadrature
    gl_x, gl_w = np.polynomial.legendre.leggauss(max(64, 4 * count))
    cosfac = np.cos(math.pi * gl_x / 2.0)
    vander = np.polynomial.chebyshev.chebvander(gl_x, count - 1)
    moments = (math.pi / 2.0) * (gl_w * cosfac) @ vander
    return theta, _interpolatory_weights(u, moments)


@dataclass(frozen=True)
class SphereGrid:
    """Sample states with volume-element quadrature weights.

    ``weights`` integrate to the ball volume; ``normalized_weights`` to one.
    The flattened ordering is radial outermost, azimuth innermost.
    """

    states: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    spherical: np.ndarray = field(repr=False)   # columns r, theta, phi
    n_radial: int
    n_polar: int
    n_azimuth: int
    radius: float

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def average(self, values: np.ndarray) -> float:
        return float(self.normalized_weights @ values)

    def subset(self, mask: np.ndarray) -> "SphereGrid":
        """Filtered view with weights renormalized to the retained cells."""
        return SphereGrid(states=self.states[mask], weights=self.weights[mask],
                          spherical=self.spherical[mask],
                          n_radial=self.n_radial, n_polar=self.n_polar,
                          n_azimuth=self.n_azimuth, radius=self.radius)


def sphere_grid(n_radial: int, n_polar: int, n_azimuth: int,
                radius: float | None = None) -> SphereGrid:
    """Product grid over the qubit state ball.

    Every count must be at least 2; the default radius is the physical
    one, 1/sqrt(2).
    """
    if min(n_radial, n_polar, n_azimuth) < 2:
        raise ValidationError("each grid direction needs at least 2 points")
    radius = max_bloch_radius(2) if radius is None else float(radius)
    r, w_r = _radial_rule(n_radial, radius)
    theta, w_t = _polar_rule(n_polar)
    phi = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    w_p = np.full(n_azimuth, 2.0 * math.pi / n_azimuth)

    rr, tt, pp = np.meshgrid(r, theta, phi, indexing="ij")
    states = np.stack([
        (rr * np.sin(tt) * np.cos(pp)).ravel(),
        (rr * np.sin(tt) * np.sin(pp)).ravel(),
        (rr * np.cos(tt)).ravel(),
    ], axis=1)
    weights = (w_r[:, None, None] * w_t[None, :, None]
               * w_p[None, None, :]).ravel()
    spherical = np.stack([rr.ravel(), tt.ravel(), pp.ravel()], axis=1)
    return SphereGrid(states=states, weights=weights, spherical=spherical,
                      n_radial=n_radial, n_polar=n_polar, n_azimuth=n_azimuth,
                      radius=radius)


ESTIMATOR_NAMES = ("inversion", "least-squares", "max-likelihood")


@dataclass(frozen=True)
class CampaignResult:
    """Per-state reconstruction errors of a simulation campaign."""

    grid: SphereGrid = field(repr=False)
    crb: np.ndarray = field(repr=False)
    mse: dict = field(repr=False)
    theta_mse: dict | None = field(repr=False)
    shots: np.ndarray
    n_total: int
    runs: int
    seed: int
    estimators: tuple[str, ...]

    def sphere_average_mse(self, estimator: str) -> float:
        return self.grid.average(self.mse[estimator])

    def sphere_average_crb(self) -> float:
        return self.grid.average(self.crb)

    def summary(self) -> dict:
        out = {
            "n_total": self.n_total,
            "runs": self.runs,
            "seed": self.seed,
            "sphere_average_crb_per_shot": self.sphere_average_crb(),
            "sphere_average_mse": {
                name: self.sphere_average_mse(name) for name in self.estimators
            } if self.runs else {},
        }
        return out


def _batched_physical_mask(r_hats: np.ndarray, basis) -> np.ndarray:
    rho = np.eye(basis.dimension)[None] / basis.dimension \
        + np.einsum("kj,jab->kab", r_hats, basis.elements)
    eigs = np.linalg.eigvalsh(rho)
    return eigs[:, 0] >= -1e-10


def _batched_least_squares(r_hats: np.ndarray, physical: np.ndarray,
                           basis) -> np.ndarray:
    out = r_hats.copy()
    bad = ~physical
    if not np.any(bad):
        return out
    if basis.dimension == 2:
        radius = max_bloch_radius(2)
        norms = np.linalg.norm(r_hats[bad], axis=1)
        out[bad] = r_hats[bad] * (radius / norms)[:, None]
    else:
        rho = np.eye(basis.dimension)[None] / basis.dimension \
            + np.einsum("kj,jab->kab", r_hats[bad], basis.elements)
        vals, vecs = np.linalg.eigh(rho)
        vals = np.clip(vals, 0.0, None)
        vals /= vals.sum(axis=1, keepdims=True)
        rho_new = np.einsum("kab,kb,kcb->kac", vecs, vals, vecs.conj())
        out[bad] = np.real(np.einsum("kab,jba->kj", rho_new, basis.elements))
    return out


def _batched_hradil(setup: ExperimentSetup, pis: np.ndarray,
                    freqs: np.ndarray, r_start: np.ndarray) -> np.ndarray:
    """Run the symmetrized likelihood fixed point on a batch of data sets.

    Convergence is judged with 0.5 sqrt(N) ||delta||_F, which equals the
    trace distance for the traceless 2x2 increments of qubit batches and
    upper-bounds it in higher dimension.
    """
    basis = setup.basis
    n = basis.dimension
    m = setup.n_configs
    k = r_start.shape[0]
    rho = np.eye(n)[None] / n + np.einsum("kj,jab->kab", r_start, basis.elements)
    active = np.ones(k, dtype=bool)
    factor = 0.5 * math.sqrt(n)
    for _ in range(ML_MAX_ITERATIONS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub = rho[idx]
        r_vec = np.real(np.einsum("kab,jba->kj", sub, basis.elements))
        p_hat = np.maximum(setup.offsets[None, :] + r_vec @ setup.a_matrix.T,
                           ML_PROBABILITY_FLOOR)
        ratio = freqs[idx] / p_hat
        r_ops = np.einsum("ki,iab->kab", ratio, pis) / m
        nxt = 0.5 * (r_ops @ sub + sub @ r_ops)
        nxt = 0.5 * (nxt + np.conj(np.transpose(nxt, (0, 2, 1))))
        delta = nxt - sub
        dist = factor * np.sqrt(
            np.real(np.einsum("kab,kba->k", delta, np.conj(np.transpose(delta, (0, 2, 1))))))
        rho[idx] = nxt
        active[idx[dist < ML_CONVERGENCE]] = False
    return rho


def _log_likelihoods(setup: ExperimentSetup, counts: np.ndarray,
                     r_hats: np.ndarray) -> np.ndarray:
    p = setup.offsets[None, :] + r_hats @ setup.a_matrix.T
    safe = np.maximum(p, 1e-300)
    terms = np.where(counts > 0, counts * np.log(safe), 0.0)
    invalid = (counts > 0) & (p <= 0.0)
    ll = terms.sum(axis=1)
    ll[invalid.any(axis=1)] = -np.inf
    return ll


def _simulate_state(setup: ExperimentSetup, shots: np.ndarray, r: np.ndarray,
                    runs: int, seed: int, state_index: int,
                    estimators: tuple[str, ...], exact_statistics: bool,
                    track_theta: bool, pinv: np.ndarray, pis: np.ndarray):
    """All runs for one sample state; returns mse / theta-mse per estimator."""
    basis = setup.basis
    p = probabilities(setup, r)
    n_rows = setup.n_outcomes_total

    if exact_statistics:
        freqs = np.tile(p, (runs, 1))
        counts = freqs * shots[setup.config_index][None, :]
    else:
        freqs = np.zeros((runs, n_rows))
        counts = np.zeros((runs, n_rows))
        for gamma, sl in enumerate(setup.config_slices()):
            if shots[gamma] == 0:
                continue
            block = np.clip(p[sl], 0.0, None)
            block = block / block.sum()
            rng = np.random.default_rng((seed, state_index, gamma))
            drawn = rng.multinomial(int(shots[gamma]), block, size=runs)
            counts[:, sl] = drawn
            freqs[:, sl] = drawn / shots[gamma]

    r_inv = (freqs - setup.offsets[None, :]) @ pinv.T
    physical = _batched_physical_mask(r_inv, basis)
    estimates = {}
    if "inversion" in estimators:
        estimates["inversion"] = r_inv
    need_lsq = "least-squares" in estimators or "max-likelihood" in estimators
    if need_lsq:
        r_lsq = _batched_least_squares(r_inv, physical, basis)
        if "least-squares" in estimators:
            estimates["least-squares"] = r_lsq
    if "max-likelihood" in estimators:
        r_ml = r_inv.copy()
        bad = np.flatnonzero(~physical)
        if bad.size:
            rho_ml = _batched_hradil(setup, pis, freqs[bad], r_lsq[bad])
            r_cand = np.real(np.einsum("kab,jba->kj", rho_ml, basis.elements))
            # keep the likelihood-best physical state per run
            ll_cand = _log_likelihoods(setup, counts[bad], r_cand)
            ll_start = _log_likelihoods(setup, counts[bad], r_lsq[bad])
            ok = _batched_physical_mask(r_cand, basis) & (ll_cand >= ll_start)
            chosen = np.where(ok[:, None], r_cand, r_lsq[bad])
            r_ml[bad] = chosen
        estimates["max-likelihood"] = r_ml

    mse = {name: np.mean(np.sum((vals - r[None, :]) ** 2, axis=1))
           for name, vals in estimates.items()}

    theta_mse = None
    if track_theta:
        theta_true = cholesky_vector(bloch_to_density(r, basis)).theta
        theta_mse = {}
        for name in ("least-squares", "max-likelihood"):
            if name not in estimates:
                continue
            errs = np.empty(runs)
            for k in range(runs):
                rho_k = bloch_to_density(estimates[name][k], basis)
                theta_k = cholesky_vector(rho_k).theta
                errs[k] = np.sum((theta_k - theta_true) ** 2)
            theta_mse[name] = float(errs.mean())
    return mse, theta_mse


def _worker(args):
    return _simulate_state(*args)


def run_trials(setup: ExperimentSetup, design: Design, grid: SphereGrid,
               n_total: int, runs: int,
               estimators: tuple[str, ...] = ESTIMATOR_NAMES,
               seed: int = 0, exact_statistics: bool = False,
               track_theta: bool = False,
               workers: int | None = None) -> CampaignResult:
    """Simulate reconstruction over all grid states.

    Returns per-state mean squared errors for the requested estimators and
    the per-state bound (realized-design information divided by the shot
    count).  ``runs = 0`` skips simulation but still fills the bound
    column.  Identical inputs and seed give identical results, regardless
    of the worker count.
    """
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            raise ValidationError(f"unknown estimator {name!r}")
    shots = round_design(design, n_total)
    realized = Design.normalized(shots.astype(float)) if n_total > 0 else design

    crb = np.empty(len(grid))
    for i, r in enumerate(grid.states):
        try:
            crb[i] = fisher_info(setup, realized, r).crb / max(n_total, 1)
        except SingularityError:
            crb[i] = float("inf")

    mse: dict[str, np.ndarray] = {}
    theta: dict[str, np.ndarray] | None = None
    if runs > 0:
        pinv = np.linalg.pinv(setup.a_matrix)
        pis = np.stack([out.matrix for cfg in setup.configs
                        for out in cfg.outcomes])
        tasks = [(setup, shots, grid.states[i], runs, seed, i, tuple(estimators),
                  exact_statistics, track_theta, pinv, pis)
                 for i in range(len(grid))]
        if workers is None:
            workers = int(os.environ.get("TOMOPLAN_THREADS", "1"))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_worker, tasks, chunksize=4))
        else:
            results = [_simulate_state(*task) for task in tasks]

        mse = {name: np.array([res[0][name] for res in results])
               for name in estimators}
        if track_theta:
            theta = {}
            for name in ("least-squares", "max-likelihood"):
                if name in estimators:
                    theta[name] = np.array([res[1][name] for res in results])

    return CampaignResult(grid=grid, crb=crb, mse=mse, theta_mse=theta,
                          shots=shots, n_total=n_total, runs=runs, seed=seed,
                          estimators=tuple(estimators))


@dataclass(frozen=True)
class BruteForceResult:
    design: Design
    excluded_nodes: tuple[int, ...]


def brute_force_average_oed(setup: ExperimentSetup, grid: SphereGrid,
                            representation: str = "bloch") -> BruteForceResult:
    """Quadrature average of the per-state optimal design over the ball.

    Feasible for qubits, where a few hundred nodes resolve the average.
    Nodes on the pure-state boundary are pulled inward by a relative 1e-6
    before the factor-coordinate optimization, whose information matrix is
    singular exactly on the boundary.  Nodes where the per-state design
    fails are excluded and the quadrature weights renormalized.
    """
    if setup.dimension != 2:
        raise ValidationError("brute-force averaging is a qubit-scale method")
    if representation not in ("bloch", "cholesky"):
        raise ValidationError(f"unknown representation {representation!r}")
    radius = max_bloch_radius(2)
    forms = quadratic_forms(setup) if representation == "cholesky" else None

    weights = grid.normalized_weights
    accum = np.zeros(setup.n_configs)
    used = 0.0
    excluded: list[int] = []
    for i, r in enumerate(grid.states):
        norm = float(np.linalg.norm(r))
        r_reg = r
        if norm > radius * _BOUNDARY_SHRINK:
            r_reg = r * (radius * _BOUNDARY_SHRINK / norm)
        try:
            if representation == "bloch":
                if setup.is_minimal:
                    lam = minimal_oed(setup, r_reg).weights
                else:
                    lam = optimize_design(setup, state=r_reg).design.weights
            else:
                theta = cholesky_vector(bloch_to_density(r_reg, setup.basis)).theta
                lam = optimize_design_cholesky(setup, theta, forms=forms).design.weights
        except TomographyError:
            excluded.append(i)
            continue
        accum += weights[i] * lam
        used += weights[i]
    if used <= 0.0:
        raise SingularityError("every grid node failed; no average design")
    return BruteForceResult(design=Design.normalized(accum / used),
                            excluded_nodes=tuple(excluded))
