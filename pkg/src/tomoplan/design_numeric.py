"""Numerical design optimization on the weight simplex.

The reconstruction-error bound B = tr{F^{-1}} is minimized over designs
lambda subject to sum(lambda) = 1, using the analytic gradient

    grad J = eta 1 - t,    t_gamma = sum_{outcomes of gamma} w a^T F^{-2} a,

where w is the per-outcome statistical weight (1/p at a known state, or its
state-space average for state-independent design) and eta is the Lagrange
multiplier of the normalization constraint.  The Hessian of the bound,

    H_{gamma delta} = 2 sum_{i in gamma, j in delta} w_i w_j
                      (a_i^T F^{-1} a_j)(a_j^T F^{-2} a_i),

drives an equality-constrained Newton iteration with backtracking; weights
pinned at zero are handled by an active set, so boundary designs are
permitted and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bloch import ExperimentSetup, probabilities
from .design import Design
from .errors import ConvergenceError, SingularityError
from .fisher import PROBABILITY_FLOOR, SINGULAR_RTOL

_ACTIVE_TOL = 1e-12      # weights at or below this are treated as pinned
_RELEASE_MARGIN = 1e-9   # sensitivity excess needed to unpin a weight
_ARMIJO = 1e-4


@dataclass(frozen=True)
class OptimizerSettings:
    """Controls for the simplex Newton iteration.

    ``tolerance`` bounds the stationarity residual, measured on the
    projected gradient scaled by max(1, |eta|) so that poorly conditioned
    problems (bounds of order 1e6 and larger) remain solvable at double
    precision.
    """

    max_iterations: int = 500
    tolerance: float = 1e-9
    initial_design: Design | None = None


@dataclass(frozen=True)
class DesignResult:
    """An optimized design with stationarity diagnostics."""

    design: Design
    objective: float
    eta: float
    residual: float
    iterations: int
    boundary: bool

    @property
    def weights(self) -> np.ndarray:
        return self.design.weights


@dataclass(frozen=True)
class WeightedDesignProblem:
    """Bound-minimization data: outcome rows, fixed per-row weights, and the
    row -> configuration map.  F(lambda) = rows^T diag(lambda_row * w) rows."""

    rows: np.ndarray = field(repr=False)
    row_weights: np.ndarray = field(repr=False)
    config_index: np.ndarray = field(repr=False)
    n_configs: int

    def __post_init__(self):
        if np.any(self.row_weights < 0):
            raise SingularityError("negative statistical weight")

    def onehot(self) -> np.ndarray:
        return (self.config_index[:, None]
                == np.arange(self.n_configs)[None, :]).astype(float)


def statistical_problem(setup: ExperimentSetup, r: np.ndarray) -> WeightedDesignProblem:
    """Problem with weights 1/p evaluated at a known state."""
    p = probabilities(setup, r)
    if np.any(p <= PROBABILITY_FLOOR):
        row = int(np.argmin(p))
        raise SingularityError(
            f"outcome {setup.outcome_label(row)} has probability {p[row]:.3e};"
            " the bound is undefined at this state")
    return WeightedDesignProblem(rows=setup.a_matrix, row_weights=1.0 / p,
                                 config_index=setup.config_index,
                                 n_configs=setup.n_configs)


def averaged_problem(setup: ExperimentSetup, g: np.ndarray) -> WeightedDesignProblem:
    """Problem with fixed averaged weights g in place of 1/p."""
    return WeightedDesignProblem(rows=setup.a_matrix,
                                 row_weights=np.asarray(g, dtype=float),
                                 config_index=setup.config_index,
                                 n_configs=setup.n_configs)


class _Evaluation:
    """Objective, sensitivities and curvature of the bound at one design."""

    __slots__ = ("objective", "sensitivity", "_problem", "_eigval", "_rows_v")

    def __init__(self, problem: WeightedDesignProblem, lam: np.ndarray):
        w = problem.row_weights * lam[problem.config_index]
        f = problem.rows.T @ (problem.rows * w[:, None])
        eigval, eigvec = np.linalg.eigh(0.5 * (f + f.T))
        top = eigval[-1]
        if top <= 0.0 or eigval[0] < SINGULAR_RTOL * top:
            self.objective = float("inf")
            self.sensitivity = None
            return
        self._problem = problem
        self._eigval = eigval
        self._rows_v = problem.rows @ eigvec
        self.objective = float(np.sum(1.0 / eigval))
        quad = (self._rows_v ** 2 / eigval[None, :] ** 2).sum(axis=1)
        self.sensitivity = np.bincount(problem.config_index,
                                       weights=problem.row_weights * quad,
                                       minlength=problem.n_configs)

    def hessian(self) -> np.ndarray:
        pr = self._problem
        y1 = (self._rows_v / self._eigval[None, :]) @ self._rows_v.T
        y2 = (self._rows_v / self._eigval[None, :] ** 2) @ self._rows_v.T
        outer_w = np.outer(pr.row_weights, pr.row_weights)
        onehot = pr.onehot()
        return 2.0 * (onehot.T @ (outer_w * y1 * y2) @ onehot)


def cost_gradient(problem: WeightedDesignProblem, design: Design,
                  eta: float | None = None) -> np.ndarray:
    """Gradient of the constrained cost eta*1 - t at a design.

    With ``eta=None`` the multiplier is set to the value minimizing the
    gradient norm, which is the mean sensitivity (the norm is quadratic in
    eta, so the line search has this closed form).
    """
    ev = _Evaluation(problem, design.weights)
    if ev.sensitivity is None:
        raise SingularityError("Fisher matrix singular at this design")
    if eta is None:
        eta = float(ev.sensitivity.mean())
    return eta - ev.sensitivity


def cost_hessian(problem: WeightedDesignProblem, design: Design) -> np.ndarray:
    """Hessian of the bound with respect to the design weights."""
    ev = _Evaluation(problem, design.weights)
    if ev.sensitivity is None:
        raise SingularityError("Fisher matrix singular at this design")
    return ev.hessian()


def _residual(lam: np.ndarray, t: np.ndarray, active: np.ndarray):
    """Projected-gradient stationarity measure and the multiplier used."""
    eta = float(t[active].mean())
    res = np.where(active, t - eta, np.maximum(t - eta, 0.0))
    scale = max(1.0, abs(eta))
    return float(np.linalg.norm(res)) / scale, eta


def minimize_crb_on_simplex(problem: WeightedDesignProblem,
                            settings: OptimizerSettings | None = None) -> DesignResult:
    """Minimize tr{F(lambda)^{-1}} over the design simplex.

    Equality-constrained Newton steps with Armijo backtracking; weights
    driven to the boundary are pinned at zero and re-released if their
    sensitivity later exceeds the multiplier.  Raises ConvergenceError
    (carrying the best iterate) if the residual tolerance is not met.
    """
    settings = settings or OptimizerSettings()
    m = problem.n_configs
    if settings.initial_design is not None:
        lam = settings.initial_design.weights.copy()
    else:
        lam = np.full(m, 1.0 / m)
    # start strictly inside the simplex so the first evaluation is defined
    lam = np.maximum(lam, 0.0)
    if np.any(lam <= _ACTIVE_TOL):
        lam = np.maximum(lam, 16 * _ACTIVE_TOL)
    lam = lam / lam.sum()

    active = lam > _ACTIVE_TOL
    ev = _Evaluation(problem, lam)
    if ev.sensitivity is None:
        raise SingularityError("Fisher matrix singular at the initial design")

    best = (lam.copy(), ev.objective, np.inf)
    for iteration in range(settings.max_iterations):
        t = ev.sensitivity
        residual, eta = _residual(lam, t, active)
        if residual < best[2]:
            best = (lam.copy(), ev.objective, residual)
        if residual <= settings.tolerance:
            return DesignResult(design=Design(np.where(active, lam, 0.0) /
                                              lam[active].sum()),
                                objective=ev.objective, eta=eta,
                                residual=residual, iterations=iteration,
                                boundary=bool(np.any(~active)))

        # re-release pinned weights whose sensitivity says they should grow
        release = (~active) & (t > eta + _RELEASE_MARGIN * max(1.0, abs(eta)))
        if np.any(release):
            lam[release] = 1e-8
            lam = lam / lam.sum()
            active = active | release
            ev = _Evaluation(problem, lam)
            continue

        idx = np.nonzero(active)[0]
        h_full = ev.hessian()
        h = h_full[np.ix_(idx, idx)]
        k = len(idx)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = h
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([t[idx], [1.0 - lam[idx].sum()]])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        step = np.zeros(m)
        step[idx] = sol[:k]
        slope = float(-t @ step)

        def try_step(step, slope):
            neg = step < 0
            alpha = 1.0
            if np.any(neg):
                alpha = min(1.0, 0.95 * float(np.min(-lam[neg] / step[neg])))
            # allow rounding-level increases so the final polishing steps
            # near machine precision are not rejected
            noise = 1e-14 * max(1.0, abs(ev.objective))
            while alpha > 1e-14:
                cand = lam + alpha * step
                cand_ev = _Evaluation(problem, cand)
                if cand_ev.sensitivity is not None and cand_ev.objective <= \
                        ev.objective + _ARMIJO * alpha * min(slope, 0.0) + noise:
                    return cand, cand_ev
                alpha *= 0.5
            return None, None

        cand, cand_ev = try_step(step, slope)
        if cand is None:
            # singular curvature: fall back to a multiplicative descent step
            scaled = np.where(active, lam * np.sqrt(np.maximum(t, 0.0)
                                                    / max(eta, 1e-300)), 0.0)
            if scaled.sum() <= 0.0:
                break
            step = scaled / scaled.sum() - lam
            cand, cand_ev = try_step(step, float(-t @ step))
            if cand is None:
                break
        lam, ev = cand, cand_ev

        pinned = active & (lam <= _ACTIVE_TOL)
        if np.any(pinned):
            lam[pinned] = 0.0
            active = active & ~pinned
            lam = lam / lam.sum()
            ev = _Evaluation(problem, lam)

    # final check: the loop may have exited right at the solution
    t = ev.sensitivity
    residual, eta = _residual(lam, t, active)
    if residual <= settings.tolerance:
        return DesignResult(design=Design(np.where(active, lam, 0.0) /
                                          lam[active].sum()),
                            objective=ev.objective, eta=eta, residual=residual,
                            iterations=settings.max_iterations,
                            boundary=bool(np.any(~active)))
    best_design = Design.normalized(np.maximum(best[0], 0.0))
    raise ConvergenceError(
        f"design optimization stalled at residual {best[2]:.3e} "
        f"(tolerance {settings.tolerance:.1e})",
        best=DesignResult(design=best_design, objective=best[1], eta=eta,
                          residual=best[2], iterations=settings.max_iterations,
                          boundary=bool(np.any(~active))),
        residual=best[2])


def optimize_design(setup: ExperimentSetup, *, state: np.ndarray | None = None,
                    g: np.ndarray | None = None,
                    settings: OptimizerSettings | None = None) -> DesignResult:
    """Find the design minimizing the bound at a state (``state=``) or for
    fixed averaged weights (``g=``)."""
    if (state is None) == (g is None):
        raise ValueError("provide exactly one of state= or g=")
    if state is not None:
        problem = statistical_problem(setup, np.asarray(state, dtype=float))
    else:
        problem = averaged_problem(setup, g)
    return minimize_crb_on_simplex(problem, settings)
