"""State-space averaging: reciprocal-probability integrals, ball moments,
and the two state-independent design routes.

The set of physical states is approximated by a ball of radius R in the
(N^2-1)-dimensional coordinate space, with R between the inscribed radius
1/sqrt(N(N-1)) and the circumscribed radius sqrt((N-1)/N); the two coincide
for qubits, where the approximation is exact.  Averages over the ball enter
in two ways:

* g = <1/p> per outcome feeds the averaged information matrix
  <F> = A^T Lambda G A, minimized numerically or, for minimal setups,
  through a closed-form weight vector.
* the coordinate moments <<x^2>>, <<x^2 y^2>>, <<x^4>> average the
  closed-form bound directly, again yielding closed-form weights.

For qubits g has an elementary closed form; in higher dimension the ball
average reduces to a one-dimensional slice integral that is evaluated by
Gauss-Legendre quadrature after a sine substitution (machine precision for
every dimension and admissible outcome).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import ExperimentSetup
from .design import Design
from .design_numeric import OptimizerSettings, averaged_problem, \
    minimize_crb_on_simplex
from .design_analytic import design_from_block_sums
from .errors import DegenerateDesignError, DivergentAverageError, ValidationError
from .fisher import FisherBundle, averaged_information, kernel_matrices

#: relative anisotropy R|a|/c below which the Taylor branch replaces the
#: closed form, whose bracketed terms cancel to third order as |a| -> 0;
#: at the switch point both branches are accurate to about 1e-12
_TAYLOR_SWITCH = 3e-2


def state_space_radius(dimension: int, mode: str = "min",
                       value: float | None = None) -> float:
    """Averaging-ball radius: inscribed ('min'), circumscribed ('max'), or a
    user value checked against that range ('value')."""
    if dimension < 2:
        raise ValidationError("dimension must be at least 2")
    r_min = 1.0 / math.sqrt(dimension * (dimension - 1))
    r_max = math.sqrt((dimension - 1) / dimension)
    if mode == "min":
        return r_min
    if mode == "max":
        return r_max
    if mode == "value":
        if value is None:
            raise ValidationError("mode 'value' requires a radius")
        if not r_min - 1e-12 <= value <= r_max + 1e-12:
            raise ValidationError(
                f"radius {value} outside the physical range "
                f"[{r_min:.6f}, {r_max:.6f}] for dimension {dimension}")
        return float(value)
    raise ValidationError(f"unknown radius mode {mode!r}")


@dataclass(frozen=True)
class SphereMoments:
    """Single-coordinate moments of the uniform ball in N^2-1 dimensions."""

    x2: float
    x2y2: float
    x4: float


def sphere_moments(dimension: int, radius: float) -> SphereMoments:
    """Moments <<x^2>>, <<x^2 y^2>> and <<x^4>> = 3 <<x^2 y^2>>.

    Evaluated from the Gamma-function expressions for a ball of the given
    radius in N^2 - 1 dimensions.
    """
    n = dimension * dimension - 1
    lg = math.lgamma
    x2 = radius ** 2 * n * math.exp(lg(n / 2) - lg((n + 2) / 2)) / (2 * (n + 2))
    x2y2 = radius ** 4 * n * math.exp(lg(n / 2) - lg((n + 4) / 2)) / (4 * (n + 4))
    return SphereMoments(x2=x2, x2y2=x2y2, x4=3.0 * x2y2)


def log_moment_integrals(n_max: int, a: float, b: float, radius: float) -> np.ndarray:
    """The integrals int_0^R x^n ln(a + b x) dx for n = 0 .. n_max.

    Computed by the first-order recurrence in n with compensated summation
    of its terms.  The recurrence amplifies rounding by a factor |a/b| per
    order, so this is intended for moderate degree; the averaging integrals
    themselves use quadrature.
    """
    if a <= 0 or a + b * radius <= 0:
        raise DivergentAverageError("logarithm argument vanishes inside the range")
    out = np.empty(n_max + 1)
    top = a + b * radius
    out[0] = (top * (math.log(top) - 1.0) - a * (math.log(a) - 1.0)) / b
    for n in range(1, n_max + 1):
        terms = (
            radius ** n / b * (top * (math.log(top) - 1.0) + a),
            radius ** (n + 1) * n / (n + 1),
            -n * a / b * out[n - 1],
        )
        acc = comp = 0.0
        for term in terms:
            y = term - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        out[n] = acc / (n + 1)
    return out


def _reciprocal_mean_qubit(c: float, amag: float, radius: float) -> float:
    """Closed-form ball average of 1/(c + a.r) for a three-dimensional ball.

    When the probability zero touches the ball boundary (c = R|a|) the
    logarithmic term has the finite limit zero, which is substituted
    explicitly so boundary-symmetric measurements evaluate cleanly.
    """
    x = radius * amag
    gap = c - x
    if gap <= 1e-300:
        log_term = 0.0
    else:
        log_term = (c * c - x * x) * math.log(gap / (c + x))
    return 3.0 / (4.0 * radius ** 3 * amag ** 3) * (log_term + 2.0 * c * x)


def _reciprocal_mean_taylor(c: float, amag: float, radius: float, n: int) -> float:
    """Small-anisotropy expansion of <1/p>, exact through sixth order."""
    x2 = radius ** 2 / (n + 2)
    x4 = 3.0 * radius ** 4 / ((n + 2) * (n + 4))
    x6 = 15.0 * radius ** 6 / ((n + 2) * (n + 4) * (n + 6))
    u = amag / c
    return (1.0 + x2 * u ** 2 + x4 * u ** 4 + x6 * u ** 6) / c


def _reciprocal_mean_slice(c: float, amag: float, radius: float, n: int) -> float:
    """Ball average of 1/(c + a.r) via the one-dimensional slice reduction.

    Writing x for the coordinate along a, the average is
    int (R^2 - x^2)^{(n-1)/2} / (c + |a| x) dx over [-R, R], normalized by
    the same integral without the denominator.  The substitution x = R sin t
    removes the endpoint derivative singularities, after which
    Gauss-Legendre converges geometrically; the node count is doubled until
    the value is stable to full precision.
    """
    half_power = (n - 1) / 2.0

    def evaluate(order: int) -> float:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        t = 0.5 * math.pi * nodes
        integrand = np.cos(t) ** n / (c + amag * radius * np.sin(t))
        return 0.5 * math.pi * float(weights @ integrand)

    norm = math.exp(math.lgamma(half_power + 1.0)
                    - math.lgamma(half_power + 1.5)) * math.sqrt(math.pi)
    order, value = 64, evaluate(64)
    while order < 2048:
        order *= 2
        refined = evaluate(order)
        if abs(refined - value) <= 1e-14 * abs(refined):
            value = refined
            break
        value = refined
    return value / norm


def reciprocal_mean(c: float, amag: float, radius: float, dimension: int) -> float:
    """Average of 1/(c + a.r) over the uniform ball of the given radius.

    Raises DivergentAverageError when the probability vanishes strictly
    inside the ball (c < R |a|, up to rounding).  A zero that just touches
    the boundary is integrable and evaluated as the corresponding limit,
    which is what maximally symmetric projective measurements produce.
    """
    n = dimension * dimension - 1
    reach = radius * amag
    if c <= 1e-300:
        raise DivergentAverageError(
            f"outcome probability vanishes at the ball centre (offset {c:.4e})")
    if c - reach < -1e-12 * max(1.0, c + reach):
        raise DivergentAverageError(
            f"outcome probability vanishes inside the averaging ball "
            f"(offset {c:.4e}, reach {reach:.4e})")
    if reach < _TAYLOR_SWITCH * c:
        return _reciprocal_mean_taylor(c, amag, radius, n)
    if dimension == 2:
        return _reciprocal_mean_qubit(c, amag, radius)
    return _reciprocal_mean_slice(c, amag, radius, n)


def g_coefficients(setup: ExperimentSetup, radius: float) -> np.ndarray:
    """Averaged reciprocal probabilities <1/p> for every outcome."""
    mags = np.linalg.norm(setup.a_matrix, axis=1)
    out = np.empty(setup.n_outcomes_total)
    for row, (c, amag) in enumerate(zip(setup.offsets, mags)):
        try:
            out[row] = reciprocal_mean(float(c), float(amag), radius,
                                       setup.dimension)
        except DivergentAverageError as err:
            raise DivergentAverageError(
                f"outcome {setup.outcome_label(row)}: {err}") from None
    return out


@dataclass(frozen=True)
class AveragingContext:
    """Everything the state-independent design formulas consume.

    The kernel-based vectors (f, the two averaged bound contributions) are
    populated only when the setup is minimal; they are None otherwise.
    """

    dimension: int
    radius: float
    g: np.ndarray = field(repr=False)
    moments: SphereMoments
    f: np.ndarray | None = field(default=None, repr=False)
    avg_b_fisher: np.ndarray | None = field(default=None, repr=False)
    avg_b_direct: np.ndarray | None = field(default=None, repr=False)


def direct_averaged_b(setup: ExperimentSetup, radius: float) -> np.ndarray:
    """Ball average of the per-outcome bound contributions b, in closed form.

    Only the second coordinate moment enters:
    <<b>> = c * (d - D c) - <<x^2>> diag(D K) on the independent outcomes.
    Requires a minimal setup.
    """
    gram, block, diag, red = kernel_matrices(setup)
    x2 = sphere_moments(setup.dimension, radius).x2
    c_red = red.offsets
    return c_red * (diag - block @ c_red) - x2 * np.diag(block @ gram)


def averaging_context(setup: ExperimentSetup, radius: float) -> AveragingContext:
    """Precompute g, the ball moments, and (for minimal setups) the averaged
    bound contributions of both averaging routes."""
    g = g_coefficients(setup, radius)
    moments = sphere_moments(setup.dimension, radius)
    f = avg_b_fisher = avg_b_direct = None
    if setup.is_minimal:
        gram, block, diag, red = kernel_matrices(setup)
        g_red = g[red.kept_rows]
        f = np.empty(red.n_independent)
        for gamma in range(setup.n_configs):
            sel = setup.config_index == gamma
            f[red.config_index == gamma] = 1.0 / np.sum(1.0 / g[sel])
        inv_g = 1.0 / g_red
        avg_b_fisher = inv_g * (diag - f * (block @ inv_g))
        avg_b_direct = direct_averaged_b(setup, radius)
    return AveragingContext(dimension=setup.dimension, radius=radius, g=g,
                            moments=moments, f=f, avg_b_fisher=avg_b_fisher,
                            avg_b_direct=avg_b_direct)


def averaged_fisher(setup: ExperimentSetup, design: Design,
                    context: AveragingContext | np.ndarray) -> FisherBundle:
    """Averaged information matrix <F> = A^T Lambda G A with its bound.

    ``context`` may also be a raw g vector, which makes point-mass and other
    custom priors easy to inject.
    """
    g = context.g if isinstance(context, AveragingContext) else context
    return averaged_information(setup, design, g)


def average_oed_fisher(setup: ExperimentSetup, radius: float | None = None,
                       context: AveragingContext | None = None,
                       settings: OptimizerSettings | None = None) -> Design:
    """State-independent design from the averaged information matrix.

    Minimal setups use the closed-form weights sqrt(block sums of <b>);
    over-determined setups fall back to the numerical simplex optimization
    with the averaged weights g in place of 1/p.
    """
    if context is None:
        if radius is None:
            raise ValidationError("provide a radius or a prebuilt context")
        context = averaging_context(setup, radius)
    if context.avg_b_fisher is not None:
        sums = np.bincount(setup.reduction.config_index,
                           weights=context.avg_b_fisher,
                           minlength=setup.n_configs)
        return design_from_block_sums(sums)
    result = minimize_crb_on_simplex(averaged_problem(setup, context.g), settings)
    return result.design


def average_oed_crb(setup: ExperimentSetup, radius: float | None = None,
                    context: AveragingContext | None = None) -> Design:
    """State-independent design from the directly averaged bound.

    Applicable to minimal setups only, where the bound is available in
    closed form before averaging.  This route never touches g, so it also
    works for setups whose reciprocal-probability averages diverge.
    """
    if context is not None and context.avg_b_direct is not None:
        avg_b = context.avg_b_direct
    elif context is not None:
        raise ValidationError("direct bound averaging requires a minimal setup")
    else:
        if radius is None:
            raise ValidationError("provide a radius or a prebuilt context")
        avg_b = direct_averaged_b(setup, radius)
    sums = np.bincount(setup.reduction.config_index, weights=avg_b,
                       minlength=setup.n_configs)
    if np.any(sums < 0):
        bad = int(np.argmin(sums))
        raise DegenerateDesignError(
            f"configuration {setup.configs[bad].label!r} has negative "
            f"averaged bound contribution {sums[bad]:.3e}")
    return design_from_block_sums(sums)


def averaged_crb_fisher(setup: ExperimentSetup, design: Design,
                        context: AveragingContext) -> float:
    """Bound value tr{<F>^{-1}} of a design under the averaged information."""
    return averaged_fisher(setup, design, context).crb


def averaged_crb_direct(setup: ExperimentSetup, design: Design,
                        radius: float | None = None,
                        context: AveragingContext | None = None) -> float:
    """Directly averaged bound <<B>> = sum <<b>> / lambda (minimal only)."""
    if context is not None and context.avg_b_direct is not None:
        avg_b = context.avg_b_direct
    elif context is not None:
        raise ValidationError("direct bound averaging requires a minimal setup")
    elif radius is not None:
        avg_b = direct_averaged_b(setup, radius)
    else:
        raise ValidationError("provide a radius or a prebuilt context")
    lam = design.weights[setup.reduction.config_index]
    if np.any((lam <= 0) & (np.abs(avg_b) > 0)):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(lam > 0, avg_b / lam, 0.0)
    return float(vals.sum())
