"""Closed-form optimal designs for minimal tomography.

When the independent outcomes exactly match the parameter count, the bound
takes the separable form B = sum b / lambda and the optimal weights are

    lambda_gamma  proportional to  sqrt(sum_{outcomes} b),

normalized to the simplex.  For all-binary setups the block-diagonal kernel
collapses and the same weights read sqrt(d_gamma p_gamma (1 - p_gamma)).
"""

from __future__ import annotations

import warnings

import numpy as np

from .bloch import ExperimentSetup
from .design import Design
from .errors import DegenerateDesignError, MinimalityError
from .fisher import MinimalKernel, minimal_kernel

_BOUNDARY_P = 1e-9


def design_from_block_sums(block_sums: np.ndarray) -> Design:
    """Normalize sqrt(block sums) into a design, rejecting negative sums."""
    block_sums = np.asarray(block_sums, dtype=float)
    if np.any(block_sums < 0):
        bad = int(np.argmin(block_sums))
        raise DegenerateDesignError(
            f"configuration {bad} has negative bound contribution "
            f"{block_sums[bad]:.3e}; no real weight exists")
    return Design.normalized(np.sqrt(block_sums))


def _block_sums(kernel: MinimalKernel, n_configs: int) -> np.ndarray:
    return np.bincount(kernel.config_index, weights=kernel.b,
                       minlength=n_configs)


def minimal_oed(setup: ExperimentSetup, r: np.ndarray) -> Design:
    """Optimal design at a known interior state of a minimal setup."""
    kernel = minimal_kernel(setup, r)
    if kernel.probabilities.min() < _BOUNDARY_P or \
            kernel.probabilities.max() > 1.0 - _BOUNDARY_P:
        warnings.warn(
            "state is numerically at the outcome-probability boundary; the "
            "design is finite but the bound is nearly singular", stacklevel=2)
    return design_from_block_sums(_block_sums(kernel, setup.n_configs))


def minimal_oed_binary(setup: ExperimentSetup, r: np.ndarray) -> Design:
    """Binary-measurement specialization sqrt(d p (1-p)).

    Agrees exactly with minimal_oed; kept as an independent route because
    its simplicity makes it a useful cross-check and a faster kernel for
    sweeps over many states.
    """
    if any(cfg.n_outcomes != 2 for cfg in setup.configs):
        raise MinimalityError(
            "binary design formula requires every configuration to have "
            "exactly two outcomes")
    kernel = minimal_kernel(setup, r)
    p = kernel.probabilities
    radicand = kernel.diag_inverse * p * (1.0 - p)
    return design_from_block_sums(radicand)
