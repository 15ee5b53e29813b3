import itertools
import math

import numpy as np
import pytest

import tomoplan as tp
from tomoplan.fisher import MinimalKernel

from util import mub_setup, random_binary_qubit_setup, \
    random_interior_qubit_state, trine_plus_binary_setup


def explicit_fisher_sum(setup, design, r):
    """Outer-product oracle, summed outcome by outcome."""
    p = tp.probabilities(setup, r)
    f = np.zeros((setup.n_parameters, setup.n_parameters))
    for row in range(setup.n_outcomes_total):
        lam = design.weights[setup.config_index[row]]
        if lam == 0:
            continue
        a = setup.a_matrix[row]
        f += lam / p[row] * np.outer(a, a)
    return f


class TestFisherInfo:
    def test_mub_uniform_at_origin(self):
        setup = mub_setup()
        bundle = tp.fisher_info(setup, tp.Design.uniform(3), np.zeros(3))
        np.testing.assert_allclose(bundle.matrix, (2 / 3) * np.eye(3), atol=1e-12)
        assert bundle.crb == pytest.approx(4.5, abs=1e-10)
        assert not bundle.singular

    def test_rank_deficient_setup_flags_singular(self):
        basis = tp.generate_basis(2)
        a = np.array([0.3, 0.0, 0.0])
        cfg = tp.config_from_affine("x", [0.5, 0.5], [a, -a], basis)
        setup = tp.ExperimentSetup(basis=basis, configs=(cfg,))
        bundle = tp.fisher_info(setup, tp.Design.uniform(1), np.zeros(3))
        assert bundle.singular
        assert bundle.crb == float("inf")

    def test_factored_matches_explicit_sum(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            setup = random_binary_qubit_setup(rng, n_configs=4)
            r = random_interior_qubit_state(rng)
            design = tp.Design(rng.dirichlet(np.ones(4)))
            bundle = tp.fisher_info(setup, design, r)
            oracle = explicit_fisher_sum(setup, design, r)
            assert np.abs(bundle.matrix - oracle).max() < 1e-10

    def test_linearity_in_design(self):
        rng = np.random.default_rng(23)
        setup = random_binary_qubit_setup(rng)
        r = random_interior_qubit_state(rng)
        d1 = tp.Design(rng.dirichlet(np.ones(3)))
        d2 = tp.Design(rng.dirichlet(np.ones(3)))
        for c in (0.0, 0.3, 1.0):
            mix = tp.Design(c * d1.weights + (1 - c) * d2.weights)
            lhs = tp.fisher_info(setup, mix, r).matrix
            rhs = c * tp.fisher_info(setup, d1, r).matrix \
                + (1 - c) * tp.fisher_info(setup, d2, r).matrix
            assert np.abs(lhs - rhs).max() < 1e-10

    def test_zero_probability_with_weight_raises(self):
        setup = mub_setup()
        pure_z = np.array([0.0, 0.0, 1 / math.sqrt(2)])
        with pytest.raises(tp.SingularityError, match="z"):
            tp.fisher_info(setup, tp.Design.uniform(3), pure_z)

    def test_enumeration_oracle(self):
        """Formula agrees with the defining ensemble average of the
        log-likelihood gradient outer product, enumerated exhaustively."""
        rng = np.random.default_rng(31)
        setup = random_binary_qubit_setup(rng)
        r = np.array([0.15, -0.1, 0.2])
        p = tp.probabilities(setup, r)
        shots = np.array([2, 2, 2])
        n_total = int(shots.sum())
        design = tp.Design(shots / n_total)

        f_oracle = np.zeros((3, 3))
        slices = setup.config_slices()
        for counts in itertools.product(*(range(s + 1) for s in shots)):
            prob = 1.0
            grad = np.zeros(3)
            for gamma, sl in enumerate(slices):
                n1 = counts[gamma]
                n2 = shots[gamma] - n1
                p1, p2 = p[sl]
                prob *= math.comb(shots[gamma], n1) * p1 ** n1 * p2 ** n2
                grad += n1 * setup.a_matrix[sl][0] / p1 \
                    + n2 * setup.a_matrix[sl][1] / p2
            f_oracle += prob * np.outer(grad, grad)
        f_oracle /= n_total

        bundle = tp.fisher_info(setup, design, r)
        assert np.abs(bundle.matrix - f_oracle).max() < 1e-8


class TestMinimalKernel:
    def test_mub_kernel_values(self):
        setup = mub_setup()
        kernel = tp.minimal_kernel(setup, np.zeros(3))
        np.testing.assert_allclose(kernel.diag_inverse, 2.0, atol=1e-12)
        np.testing.assert_allclose(kernel.b, 0.5, atol=1e-12)
        value = tp.crb_minimal(kernel, tp.Design.uniform(3))
        assert value == pytest.approx(4.5, abs=1e-10)

    def test_matches_full_inversion(self):
        rng = np.random.default_rng(41)
        for setup_factory in (lambda: random_binary_qubit_setup(rng),
                              lambda: trine_plus_binary_setup(rng)):
            setup = setup_factory()
            r = random_interior_qubit_state(rng)
            design = tp.Design(rng.dirichlet(np.ones(setup.n_configs)))
            kernel = tp.minimal_kernel(setup, r)
            assert tp.crb_minimal(kernel, design) == pytest.approx(
                tp.fisher_info(setup, design, r).crb, rel=1e-8)

    def test_deletion_choice_invariance(self):
        rng = np.random.default_rng(43)
        setup = trine_plus_binary_setup(rng)
        r = random_interior_qubit_state(rng)
        design = tp.Design(np.array([0.6, 0.4]))
        default = tp.crb_minimal(tp.minimal_kernel(setup, r), design)
        for drop in ([0, 0], [1, 0], [2, 1]):
            alt = tp.crb_minimal(tp.minimal_kernel(setup, r, drop=drop), design)
            assert alt == pytest.approx(default, rel=1e-8)

    def test_non_minimal_rejected(self):
        rng = np.random.default_rng(47)
        setup = random_binary_qubit_setup(rng, n_configs=4)
        with pytest.raises(tp.MinimalityError):
            tp.minimal_kernel(setup, np.zeros(3))

    def test_crb_minimal_edge_cases(self):
        setup = mub_setup()
        kernel = tp.minimal_kernel(setup, np.zeros(3))
        zero_kernel = MinimalKernel(
            gram=kernel.gram, block_inverse=kernel.block_inverse,
            diag_inverse=kernel.diag_inverse, b=np.zeros(3),
            probabilities=kernel.probabilities, reduction=kernel.reduction)
        assert tp.crb_minimal(zero_kernel, tp.Design.uniform(3)) == 0.0
        assert tp.crb_minimal(
            kernel, tp.Design(np.array([0.0, 0.5, 0.5]))) == float("inf")
