import math
import warnings

import numpy as np
import pytest

import tomoplan as tp
from tomoplan.design_analytic import design_from_block_sums

from util import mub_setup, random_binary_qubit_setup, \
    random_interior_qubit_state, trine_plus_binary_setup


class TestMinimalOed:
    def test_mub_at_origin_is_uniform(self):
        design = tp.minimal_oed(mub_setup(), np.zeros(3))
        np.testing.assert_allclose(design.weights, 1 / 3, atol=1e-12)

    def test_zero_block_gets_zero_weight(self):
        with pytest.raises(tp.DegenerateDesignError):
            design_from_block_sums(np.array([1.0, -0.5, 2.0]))
        design = design_from_block_sums(np.array([1.0, 0.0, 4.0]))
        assert design.weights[1] == 0.0
        assert design.weights[2] == pytest.approx(2 / 3)

    def test_beats_uniform(self):
        rng = np.random.default_rng(53)
        for _ in range(20):
            setup = random_binary_qubit_setup(rng)
            r = random_interior_qubit_state(rng)
            kernel = tp.minimal_kernel(setup, r)
            optimal = tp.minimal_oed(setup, r)
            assert tp.crb_minimal(kernel, optimal) <= \
                tp.crb_minimal(kernel, tp.Design.uniform(3)) + 1e-9

    def test_relabel_invariance(self):
        rng = np.random.default_rng(59)
        setup = trine_plus_binary_setup(rng)
        r = random_interior_qubit_state(rng)
        base_design = tp.minimal_oed(setup, r)
        base_value = tp.crb_minimal(tp.minimal_kernel(setup, r), base_design)
        for drop in ([0, 0], [1, 1], [2, 0]):
            kernel = tp.minimal_kernel(setup, r, drop=drop)
            sums = np.bincount(kernel.config_index, weights=kernel.b,
                               minlength=setup.n_configs)
            design = design_from_block_sums(sums)
            np.testing.assert_allclose(design.weights, base_design.weights,
                                       atol=1e-8)
            assert tp.crb_minimal(kernel, design) == pytest.approx(
                base_value, rel=1e-8)

    def test_boundary_state_warns(self):
        setup = mub_setup()
        pure_x = np.array([1 / math.sqrt(2), 0.0, 0.0])
        with pytest.warns(UserWarning):
            tp.minimal_oed(setup, pure_x)


class TestBinarySpecialization:
    def test_mub_arithmetic(self):
        design = tp.minimal_oed_binary(mub_setup(), np.zeros(3))
        np.testing.assert_allclose(design.weights, 1 / 3, atol=1e-12)

    def test_equals_general_formula(self):
        rng = np.random.default_rng(61)
        for _ in range(20):
            setup = random_binary_qubit_setup(rng)
            r = random_interior_qubit_state(rng)
            general = tp.minimal_oed(setup, r).weights
            binary = tp.minimal_oed_binary(setup, r).weights
            assert np.abs(general - binary).max() < 1e-12

    def test_z_profile_matches_general(self):
        setup = mub_setup()
        for z in (0.1, 0.3, 0.5, 0.65):
            r = np.array([0.0, 0.0, z / math.sqrt(2)])
            general = tp.minimal_oed(setup, r).weights
            binary = tp.minimal_oed_binary(setup, r).weights
            np.testing.assert_allclose(binary, general, atol=1e-12)
            # the aligned configuration loses weight as the state purifies
            assert binary[2] < binary[0]

    def test_deterministic_outcome_zeroes_config(self):
        setup = mub_setup()
        pure_z = np.array([0.0, 0.0, 1 / math.sqrt(2)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            design = tp.minimal_oed_binary(setup, pure_z)
        # the probability reaches 1 only up to rounding, so the weight
        # vanishes at the square-root-of-epsilon scale
        assert design.weights[2] == pytest.approx(0.0, abs=1e-7)

    def test_rejects_non_binary(self):
        rng = np.random.default_rng(67)
        setup = trine_plus_binary_setup(rng)
        with pytest.raises(tp.MinimalityError):
            tp.minimal_oed_binary(setup, np.zeros(3))
