"""Shared construction helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np

import tomoplan as tp


def mub_setup() -> tp.ExperimentSetup:
    """Three orthogonal projective binary configurations on a qubit."""
    basis = tp.generate_basis(2)
    axes = np.eye(3) / math.sqrt(2)
    configs = tuple(
        tp.config_from_affine(label, [0.5, 0.5], [axes[i], -axes[i]], basis)
        for i, label in enumerate(("x", "y", "z"))
    )
    return tp.ExperimentSetup(basis=basis, configs=configs)


def random_binary_qubit_setup(rng: np.random.Generator, n_configs: int = 3,
                              amag_range=(0.25, 0.95),
                              margin: float = 0.02) -> tp.ExperimentSetup:
    """Random binary qubit configurations, positive with a safety margin.

    Directions are uniform on the sphere; |a| is drawn inside the physical
    range (scaled by 1/sqrt(2)); offsets keep both outcomes positive
    definite by at least ``margin``, which also keeps every
    reciprocal-probability average finite.
    """
    basis = tp.generate_basis(2)
    configs = []
    for k in range(n_configs):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        amag = rng.uniform(*amag_range) / math.sqrt(2)
        a = amag * direction
        reach = amag / math.sqrt(2)
        c = rng.uniform(reach + margin, 1.0 - reach - margin)
        configs.append(tp.config_from_affine(
            f"m{k}", [c, 1.0 - c], [a, -a], basis))
    return tp.ExperimentSetup(basis=basis, configs=tuple(configs))


def random_binary_qutrit_setup(rng: np.random.Generator,
                               n_configs: int = 8,
                               amag_range=(0.15, 0.4),
                               margin: float = 0.03) -> tp.ExperimentSetup:
    """Random binary qutrit configurations, minimal when n_configs = 8."""
    basis = tp.generate_basis(3)
    reach_factor = math.sqrt(2.0 / 3.0)   # largest |eigenvalue| of a unit a.sigma
    configs = []
    for k in range(n_configs):
        direction = rng.normal(size=8)
        direction /= np.linalg.norm(direction)
        amag = rng.uniform(*amag_range)
        a = amag * direction
        lo = reach_factor * amag + margin
        c = rng.uniform(lo, 1.0 - lo)
        configs.append(tp.config_from_affine(
            f"m{k}", [c, 1.0 - c], [a, -a], basis))
    return tp.ExperimentSetup(basis=basis, configs=tuple(configs))


def trine_plus_binary_setup(rng: np.random.Generator) -> tp.ExperimentSetup:
    """A three-outcome configuration plus one binary one: minimal on a
    qubit with mixed outcome arity."""
    basis = tp.generate_basis(2)
    angles = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
    scale = (2.0 / 3.0) / math.sqrt(2)
    trine_dirs = [scale * np.array([math.cos(t), 0.0, math.sin(t)])
                  for t in angles]
    trine = tp.config_from_affine("trine", [1 / 3] * 3, trine_dirs, basis)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    a = 0.4 / math.sqrt(2) * direction
    binary = tp.config_from_affine("bin", [0.5, 0.5], [a, -a], basis)
    return tp.ExperimentSetup(basis=basis, configs=(trine, binary))


def random_interior_qubit_state(rng: np.random.Generator,
                                max_fraction: float = 0.85) -> np.ndarray:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    radius = tp.max_bloch_radius(2) * max_fraction * rng.random() ** (1 / 3)
    return radius * direction


def random_density(rng: np.random.Generator, dimension: int) -> np.ndarray:
    g = rng.normal(size=(dimension, dimension)) \
        + 1j * rng.normal(size=(dimension, dimension))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def ball_samples(rng: np.random.Generator, count: int, dimension: int,
                 radius: float) -> np.ndarray:
    """Uniform samples from the ball of the given radius."""
    direction = rng.standard_normal((count, dimension))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * radius * rng.random(count)[:, None] ** (1.0 / dimension)
