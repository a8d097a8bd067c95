import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad

from prcut.core.poisson_quadrature import (
    BernoulliProfile,
    batch_power_bound,
    batch_power_samples,
    gauss_legendre_unit,
    integral_upper_bound,
    order_for_degree,
    pb_inv1p_expect,
    pb_pmf,
    pb_pmf_enumerate,
    product_at_nodes,
    uniform_grid_integral,
)
from prcut.errors import ProfileError, QuadratureError

METHODS = ["quadrature", "pmf", "inclusion-exclusion"]


class TestGaussLegendre:
    def test_midpoint_rule(self):
        rule = gauss_legendre_unit(1)
        assert rule.nodes.tolist() == pytest.approx([0.5])
        assert rule.weights.tolist() == pytest.approx([1.0])

    def test_two_points(self):
        rule = gauss_legendre_unit(2)
        assert rule.nodes.tolist() == pytest.approx([0.21132487, 0.78867513], abs=1e-8)
        assert rule.weights.tolist() == pytest.approx([0.5, 0.5])

    @pytest.mark.parametrize("c", [1, 2, 5, 17, 64, 256])
    def test_weights_sum_to_one(self, c):
        rule = gauss_legendre_unit(c)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-13)
        assert np.all(np.diff(rule.nodes) > 0)
        assert rule.nodes[0] > 0 and rule.nodes[-1] < 1

    def test_matches_numpy_leggauss(self):
        x, w = np.polynomial.legendre.leggauss(12)
        rule = gauss_legendre_unit(12)
        assert np.allclose(rule.nodes, (x + 1) / 2, atol=1e-14)
        assert np.allclose(rule.weights, w / 2, atol=1e-14)

    def test_exact_on_polynomials(self, rng):
        for c in range(1, 33):
            rule = gauss_legendre_unit(c)
            coeffs = rng.uniform(-1, 1, size=2 * c)
            exact = float(np.sum(coeffs / np.arange(1, 2 * c + 1)))
            assert rule.integrate(npoly.polyval(rule.nodes, coeffs)) == pytest.approx(exact, abs=1e-12)

    @pytest.mark.parametrize("c", [0, 257])
    def test_order_out_of_range(self, c):
        with pytest.raises(QuadratureError):
            gauss_legendre_unit(c)

    def test_rules_are_read_only(self):
        with pytest.raises(ValueError):
            gauss_legendre_unit(3).nodes[0] = 0.0

    def test_order_for_degree(self):
        assert [order_for_degree(m) for m in (0, 1, 2, 3, 10)] == [1, 1, 2, 2, 6]


class TestPmf:
    def test_symmetric_binomial(self):
        assert pb_pmf([0.5, 0.5]).tolist() == pytest.approx([0.25, 0.5, 0.25])

    def test_point_mass(self):
        assert pb_pmf([0, 0, 0]).tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_hand_convolution(self):
        assert pb_pmf([0.2, 0.7]).tolist() == pytest.approx([0.24, 0.62, 0.14])

    def test_enumeration_agrees(self, rng):
        for _ in range(20):
            alpha = rng.random(int(rng.integers(1, 9)))
            assert np.allclose(pb_pmf(alpha), pb_pmf_enumerate(alpha), atol=1e-14)

    def test_out_of_range(self):
        with pytest.raises(ProfileError):
            BernoulliProfile(np.array([0.5, 1.2]))


class TestInverseExpectation:
    @pytest.mark.parametrize("method", METHODS)
    def test_empty_profile(self, method):
        assert pb_inv1p_expect([], method) == 1.0

    @pytest.mark.parametrize("method", METHODS)
    def test_two_halves(self, method):
        assert pb_inv1p_expect([0.5, 0.5], method) == pytest.approx(7 / 12, abs=1e-12)

    @pytest.mark.parametrize("method", METHODS)
    def test_all_ones(self, method):
        assert pb_inv1p_expect([1.0, 1.0, 1.0], method) == pytest.approx(0.25, abs=1e-12)

    def test_three_oracles_agree(self, rng):
        for _ in range(100):
            alpha = rng.random(int(rng.integers(1, 13)))
            alpha[rng.random(alpha.size) < 0.2] = 1.0
            values = [pb_inv1p_expect(alpha, method) for method in METHODS]
            assert max(values) - min(values) <= 1e-9

    def test_inclusion_exclusion_limit(self):
        with pytest.raises(ProfileError):
            pb_inv1p_expect(np.full(13, 0.5), "inclusion-exclusion")

    def test_unknown_method(self):
        with pytest.raises(ProfileError):
            pb_inv1p_expect([0.5], "monte-carlo")

    def test_large_profile_matches_pmf(self, rng):
        alpha = rng.random(400)
        assert pb_inv1p_expect(alpha) == pytest.approx(pb_inv1p_expect(alpha, "pmf"), rel=1e-9)

    def test_integrand_is_product_of_one_minus_alpha_t(self, rng):
        alpha = rng.random(9)
        value, _ = quad(lambda t: np.prod(1.0 - alpha * t), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
        assert pb_inv1p_expect(alpha) == pytest.approx(value, rel=1e-10)
        assert product_at_nodes(alpha, np.array([0.3]))[0] == pytest.approx(np.prod(1.0 - 0.3 * alpha))

    def test_product_hits_zero_at_one(self):
        values = product_at_nodes(np.array([1.0, 0.5]), np.array([0.5, 1.0]))
        assert values.tolist() == pytest.approx([0.375, 0.0])


class TestBounds:
    def test_integral_bound_example(self):
        bound = integral_upper_bound([0.5, 0.5])
        assert bound == pytest.approx(2 / 3)
        assert bound >= pb_inv1p_expect([0.5, 0.5])

    def test_integral_bound_is_tight_for_ones(self):
        assert integral_upper_bound(np.ones(4)) == pytest.approx(pb_inv1p_expect(np.ones(4)))
        assert integral_upper_bound(np.ones(4)) == pytest.approx(0.2)

    def test_integral_bound_zero_mean(self):
        assert integral_upper_bound([0.0, 0.0]) == math.inf

    def test_integral_bound_needs_variables(self):
        with pytest.raises(ProfileError):
            integral_upper_bound([])

    def test_integral_bound_holds(self, rng):
        for _ in range(300):
            alpha = rng.random(int(rng.integers(1, 64)))
            assert pb_inv1p_expect(alpha) <= integral_upper_bound(alpha) + 1e-12

    def test_batch_bound_sampled(self):
        alpha = np.full(4, 0.5)
        draws = batch_power_samples(alpha, 0.5, 1000, seed=3)
        stderr = draws.std(ddof=1) / math.sqrt(draws.size)
        assert draws.mean() >= pb_inv1p_expect(alpha) - 3 * stderr

    def test_batch_bound_with_inactive_variables(self):
        assert batch_power_bound(np.zeros(5), 0.4, 20, seed=0) == pytest.approx(1.0)

    def test_batch_bound_reproducible(self):
        alpha = np.array([0.1, 0.9, 0.4])
        assert batch_power_bound(alpha, 0.5, 1, seed=11) == batch_power_bound(alpha, 0.5, 1, seed=11)

    def test_batch_bound_inclusion_range(self):
        with pytest.raises(ProfileError):
            batch_power_samples([0.5], 1.0, 10, seed=0)


def test_uniform_grid_underestimates(rng):
    alpha = rng.random(20)
    exact = pb_inv1p_expect(alpha)
    coarse = uniform_grid_integral(alpha, 10)
    fine = uniform_grid_integral(alpha, 10_000)
    assert coarse <= fine <= exact
    assert exact - fine < 1e-3
