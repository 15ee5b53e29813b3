import math

import numpy as np
import pytest
from scipy import integrate

import tomoplan as tp
from tomoplan.averaging import _reciprocal_mean_qubit, _reciprocal_mean_slice, \
    log_moment_integrals, reciprocal_mean

from util import ball_samples, mub_setup, random_binary_qubit_setup, \
    random_binary_qutrit_setup, random_interior_qubit_state


class TestRadii:
    def test_qubit_spheres_coincide(self):
        assert tp.state_space_radius(2, "min") == pytest.approx(1 / math.sqrt(2))
        assert tp.state_space_radius(2, "max") == pytest.approx(1 / math.sqrt(2))

    def test_qutrit_radii(self):
        assert tp.state_space_radius(3, "min") == pytest.approx(1 / math.sqrt(6))
        assert tp.state_space_radius(3, "max") == pytest.approx(math.sqrt(2 / 3))

    def test_value_mode_range_check(self):
        assert tp.state_space_radius(3, "value", 0.5) == 0.5
        with pytest.raises(tp.ValidationError):
            tp.state_space_radius(3, "value", 0.9)
        with pytest.raises(tp.ValidationError):
            tp.state_space_radius(3, "value", 0.1)


class TestSphereMoments:
    def test_qubit_second_moment_is_one_tenth(self):
        moments = tp.sphere_moments(2, 1 / math.sqrt(2))
        assert moments.x2 == pytest.approx(0.1, abs=1e-14)

    def test_quartic_ratio_exact(self):
        for dim in (2, 3, 5):
            moments = tp.sphere_moments(dim, tp.state_space_radius(dim, "min"))
            assert moments.x4 / moments.x2y2 == pytest.approx(3.0, abs=1e-13)

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(71)
        radius = 1 / math.sqrt(2)
        samples = ball_samples(rng, 400_000, 3, radius)
        moments = tp.sphere_moments(2, radius)
        assert np.mean(samples[:, 0] ** 2) == pytest.approx(moments.x2, rel=5e-3)
        assert np.mean(samples[:, 0] ** 2 * samples[:, 1] ** 2) == \
            pytest.approx(moments.x2y2, rel=2e-2)


class TestLogMomentIntegrals:
    def test_against_quadrature(self):
        radius = 0.6
        for a, b in ((0.5, 0.3), (0.5, -0.3), (0.4, 0.5), (1.2, -0.9)):
            values = log_moment_integrals(8, a, b, radius)
            for n in (0, 1, 3, 8):
                ref, _ = integrate.quad(
                    lambda x: x ** n * math.log(a + b * x), 0, radius,
                    epsabs=1e-14, epsrel=1e-13)
                assert values[n] == pytest.approx(ref, rel=1e-8, abs=1e-13)

    def test_divergent_argument_rejected(self):
        with pytest.raises(tp.DivergentAverageError):
            log_moment_integrals(3, 0.2, -0.5, 0.6)


class TestReciprocalMean:
    def test_isotropic_outcome(self):
        assert reciprocal_mean(0.4, 0.0, 0.5, 2) == pytest.approx(2.5, abs=1e-14)

    def test_taylor_branch_handoff(self):
        from tomoplan.averaging import _reciprocal_mean_taylor
        c, radius = 0.45, 1 / math.sqrt(2)
        switch = 3e-2 * c / radius
        for amag in (switch * 0.99, switch * 1.01):
            taylor = _reciprocal_mean_taylor(c, amag, radius, 3)
            closed = _reciprocal_mean_qubit(c, amag, radius)
            assert taylor == pytest.approx(closed, rel=1e-10)

    def test_qubit_closed_form_equals_slice_quadrature(self):
        for c, amag in ((0.5, 0.6), (0.35, 0.4), (0.7, 0.35)):
            closed = _reciprocal_mean_qubit(c, amag, 1 / math.sqrt(2))
            quad = _reciprocal_mean_slice(c, amag, 1 / math.sqrt(2), 3)
            assert closed == pytest.approx(quad, rel=1e-12)

    def test_qubit_monte_carlo_oracle(self):
        rng = np.random.default_rng(73)
        radius = 1 / math.sqrt(2)
        samples = ball_samples(rng, 300_000, 3, radius)
        c, amag = 0.5, 0.9 / math.sqrt(2)
        mc = np.mean(1.0 / (c + amag * samples[:, 0]))
        assert reciprocal_mean(c, amag, radius, 2) == pytest.approx(mc, rel=5e-3)

    def test_qutrit_monte_carlo_oracle(self):
        rng = np.random.default_rng(79)
        radius = tp.state_space_radius(3, "min")
        samples = ball_samples(rng, 300_000, 8, radius)
        c, amag = 0.4, 0.55
        mc = np.mean(1.0 / (c + amag * samples[:, 0]))
        assert reciprocal_mean(c, amag, radius, 3) == pytest.approx(mc, rel=1e-2)

    def test_boundary_touching_is_finite(self):
        # symmetric projective outcomes touch the ball boundary exactly
        radius = 1 / math.sqrt(2)
        value = reciprocal_mean(0.5, 1 / math.sqrt(2), radius, 2)
        assert value == pytest.approx(3.0, rel=1e-9)

    def test_divergence_inside_ball_rejected(self):
        with pytest.raises(tp.DivergentAverageError):
            reciprocal_mean(0.3, 0.7, 1 / math.sqrt(2), 2)
        with pytest.raises(tp.DivergentAverageError):
            reciprocal_mean(0.0, 0.0, 1 / math.sqrt(2), 2)


class TestGCoefficients:
    def test_mub_values(self):
        setup = mub_setup()
        g = tp.g_coefficients(setup, 1 / math.sqrt(2))
        np.testing.assert_allclose(g, 3.0, rtol=1e-9)

    def test_outcome_named_on_divergence(self):
        basis = tp.generate_basis(2)
        a = np.array([0.6, 0.0, 0.0])
        bad = tp.config_from_affine("wide", [0.35, 0.65], [a, -a], basis)
        setup = tp.ExperimentSetup(basis=basis, configs=(bad,))
        with pytest.raises(tp.DivergentAverageError, match="wide"):
            tp.g_coefficients(setup, 1 / math.sqrt(2))


class TestAveragedFisher:
    def test_mub_is_isotropic(self):
        setup = mub_setup()
        ctx = tp.averaging_context(setup, 1 / math.sqrt(2))
        bundle = tp.averaged_fisher(setup, tp.Design.uniform(3), ctx)
        np.testing.assert_allclose(bundle.matrix,
                                   bundle.matrix[0, 0] * np.eye(3), atol=1e-10)

    def test_point_mass_reduces_to_state_fisher(self):
        rng = np.random.default_rng(83)
        setup = random_binary_qubit_setup(rng)
        r = random_interior_qubit_state(rng)
        g = 1.0 / tp.probabilities(setup, r)
        design = tp.Design(rng.dirichlet(np.ones(3)))
        avg = tp.averaged_fisher(setup, design, g)
        ref = tp.fisher_info(setup, design, r)
        assert np.abs(avg.matrix - ref.matrix).max() < 1e-12

    def test_sampling_oracle(self):
        rng = np.random.default_rng(89)
        setup = random_binary_qubit_setup(rng)
        radius = 1 / math.sqrt(2)
        ctx = tp.averaging_context(setup, radius)
        design = tp.Design(np.array([0.5, 0.2, 0.3]))
        avg = tp.averaged_fisher(setup, design, ctx).matrix
        samples = ball_samples(rng, 200_000, 3, radius)
        acc = np.zeros((3, 3))
        for chunk in np.array_split(samples, 20):
            p = setup.offsets[None, :] + chunk @ setup.a_matrix.T
            w = design.weights[setup.config_index][None, :] / p
            acc += np.einsum("ki,ia,ib->ab", w, setup.a_matrix, setup.a_matrix)
        mc = acc / len(samples)
        assert np.abs(avg - mc).max() / np.abs(avg).max() < 1e-2


class TestAverageDesigns:
    def test_mub_uniform_both_routes(self):
        setup = mub_setup()
        radius = 1 / math.sqrt(2)
        fisher_route = tp.average_oed_fisher(setup, radius)
        direct_route = tp.average_oed_crb(setup, radius)
        np.testing.assert_allclose(fisher_route.weights, 1 / 3, atol=1e-10)
        np.testing.assert_allclose(direct_route.weights, 1 / 3, atol=1e-10)

    def test_minimal_closed_form_matches_numeric(self):
        rng = np.random.default_rng(97)
        radius = 1 / math.sqrt(2)
        for _ in range(8):
            setup = random_binary_qubit_setup(rng)
            ctx = tp.averaging_context(setup, radius)
            closed = tp.average_oed_fisher(setup, context=ctx).weights
            numeric = tp.optimize_design(setup, g=ctx.g).weights
            assert np.abs(closed - numeric).max() < 1e-6

    def test_binary_closed_form_hand_formula(self):
        rng = np.random.default_rng(101)
        setup = random_binary_qubit_setup(rng)
        radius = 1 / math.sqrt(2)
        ctx = tp.averaging_context(setup, radius)
        gram, block, diag, red = \
            __import__("tomoplan.fisher", fromlist=["kernel_matrices"]).kernel_matrices(setup)
        g_sums = np.array([ctx.g[setup.config_index == gamma].sum()
                           for gamma in range(3)])
        hand = np.sqrt(diag / g_sums)
        hand /= hand.sum()
        np.testing.assert_allclose(tp.average_oed_fisher(setup, context=ctx).weights,
                                   hand, atol=1e-12)

    def test_overdetermined_numeric_route(self):
        rng = np.random.default_rng(103)
        setup = random_binary_qubit_setup(rng, n_configs=4)
        radius = 1 / math.sqrt(2)
        ctx = tp.averaging_context(setup, radius)
        design = tp.average_oed_fisher(setup, context=ctx)
        value = tp.averaged_fisher(setup, design, ctx).crb
        uniform = tp.averaged_fisher(setup, tp.Design.uniform(4), ctx).crb
        assert value <= uniform + 1e-9

    def test_direct_route_beats_uniform(self):
        rng = np.random.default_rng(107)
        from tomoplan.averaging import averaged_crb_direct
        for _ in range(10):
            setup = random_binary_qubit_setup(rng)
            radius = 1 / math.sqrt(2)
            design = tp.average_oed_crb(setup, radius)
            assert averaged_crb_direct(setup, design, radius) <= \
                averaged_crb_direct(setup, tp.Design.uniform(3), radius) + 1e-9

    def test_degenerate_configuration_flagged(self):
        basis = tp.generate_basis(2)
        v = np.array([0.3, 0.0, 0.0])
        deg = tp.config_from_affine("deg", [1.0, 0.0], [v, -v], basis)
        rng = np.random.default_rng(109)
        normal = random_binary_qubit_setup(rng, n_configs=2)
        setup = tp.ExperimentSetup(basis=basis,
                                   configs=(deg,) + normal.configs)
        with pytest.raises(tp.DegenerateDesignError):
            tp.average_oed_crb(setup, 1 / math.sqrt(2))

    def test_direct_average_matches_monte_carlo(self):
        """The double-bracket average is literally the ball average of the
        closed-form bound at fixed weights."""
        rng = np.random.default_rng(113)
        from tomoplan.averaging import averaged_crb_direct
        setup = random_binary_qubit_setup(rng)
        radius = 1 / math.sqrt(2)
        lam = tp.Design(np.array([0.45, 0.3, 0.25]))
        formula = averaged_crb_direct(setup, lam, radius)
        red = setup.reduction
        kernel = tp.minimal_kernel(setup, np.zeros(3))
        samples = ball_samples(rng, 1_000_000, 3, radius)
        p = red.offsets[None, :] + samples @ red.a_matrix.T
        b = p * (kernel.diag_inverse[None, :] - p @ kernel.block_inverse.T)
        mc = float((b / lam.weights[red.config_index][None, :]).sum(axis=1).mean())
        assert formula == pytest.approx(mc, rel=1e-2)

    def test_radius_insensitivity_for_qutrits(self):
        rng = np.random.default_rng(127)
        changes = []
        for _ in range(6):
            setup = random_binary_qutrit_setup(rng)
            d_min = tp.average_oed_crb(setup, tp.state_space_radius(3, "min"))
            d_max = tp.average_oed_crb(setup, tp.state_space_radius(3, "max"))
            changes.append(tp.discrepancy(d_min.weights, d_max.weights))
        assert max(changes) < 0.2
