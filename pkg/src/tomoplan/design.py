"""Experiment designs: fractional shot allocations over configurations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class Design:
    """Nonnegative weights over measurement configurations, summing to one."""

    weights: np.ndarray = field(repr=True)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1:
            raise ValidationError("design weights must be a vector")
        if w.min() < -SIMPLEX_TOL:
            raise ValidationError(f"negative design weight {w.min():.3e}")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"design weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def uniform(cls, n_configs: int) -> "Design":
        return cls(np.full(n_configs, 1.0 / n_configs))

    @classmethod
    def normalized(cls, raw: np.ndarray) -> "Design":
        """Project raw nonnegative weights onto the simplex by rescaling."""
        raw = np.asarray(raw, dtype=float)
        total = raw.sum()
        if total <= 0:
            raise ValidationError("cannot normalize nonpositive weights")
        return cls(raw / total)


def round_design(design: Design, n_total: int) -> np.ndarray:
    """Integer shot counts N_gamma closest to n_total * lambda.

    Largest-remainder rounding: counts sum to ``n_total`` exactly and each
    deviates from its target by at most one shot.  Ties are broken by
    configuration index, so the result is deterministic.
    """
    weights = design.weights
    if n_total < 0:
        raise ValidationError("total shot count must be nonnegative")
    if n_total < len(weights) and np.all(weights > 0):
        warnings.warn(
            f"{n_total} shots over {len(weights)} configurations leaves some "
            "with zero shots", stacklevel=2)
    target = n_total * weights
    counts = np.floor(target).astype(int)
    remainder = n_total - counts.sum()
    if remainder > 0:
        # stable sort descending by fractional part, ascending index on ties
        order = np.lexsort((np.arange(len(weights)), -(target - counts)))
        counts[order[:remainder]] += 1
    return counts


def discrepancy(weights_a: np.ndarray, weights_b: np.ndarray) -> float:
    """L1 distance between two designs."""
    a = np.asarray(weights_a, dtype=float)
    b = np.asarray(weights_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"design length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())
