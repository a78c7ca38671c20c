"""Tests for deeppoly.objective: packing, the loss, its gradient and the simplified loss."""

import numpy as np
import pytest

from deeppoly.errors import ConfigError, LengthMismatch
from deeppoly.objective import (
    FitProblem,
    free_indices,
    l2_error_of,
    linear_ls_seed,
    loss,
    pack,
    residual_curve,
    simplified_loss,
    simplified_loss_gradient,
    simplified_loss_surface,
    unpack,
)
from deeppoly.polynomial import DeepPolynomial, Polynomial
from deeppoly.quadrature import gauss_legendre
from deeppoly.targets import parse_target

TANH = parse_target('tanh:alpha=3')
BESSEL40 = parse_target('bessel:n=40,c=30,s=1')


def fd_gradient(prob, v):
    g = np.empty_like(v)
    for i in range(len(v)):
        h = 1e-6 * max(1.0, abs(v[i]))
        vp, vm = v.copy(), v.copy()
        vp[i] += h
        vm[i] -= h
        g[i] = (prob.loss(vp) - prob.loss(vm)) / (2 * h)
    return g


class TestPacking:
    def test_free_indices_normalized(self):
        assert free_indices((5, 4)) == [[0, 1, 2, 3, 4], [1, 2]]

    def test_free_indices_unnormalized(self):
        assert free_indices((2, 3), normalized=False) == [[0, 1], [0, 1, 2]]

    def test_unpack_fills_fixed_coefficients(self):
        g = unpack([1, 2, 3, 4, 5], (3, 4))
        assert g.layers[0].coeffs == (1.0, 2.0, 3.0)
        assert g.layers[1].coeffs == (0.0, 4.0, 5.0, 1.0)
        assert g.normalized

    def test_round_trip(self):
        v = np.arange(1.0, 12.0)
        np.testing.assert_array_equal(pack(unpack(v, (5, 5, 5))), v)

    def test_unnormalized_round_trip(self):
        v = np.arange(1.0, 7.0)
        np.testing.assert_array_equal(pack(unpack(v, (3, 3), normalized=False), normalized=False), v)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            unpack(np.zeros(7), (5, 5))


class TestFitProblem:
    def test_dof(self):
        assert FitProblem(TANH, (5, 5)).dof == 8
        assert FitProblem(TANH, (5, 5), normalized=False).dof == 10

    def test_default_rule(self):
        assert FitProblem(TANH, (3,)).rule.m == 100

    @pytest.mark.parametrize('signature', [(), (5, 1), (0,)])
    def test_bad_signature(self, signature):
        with pytest.raises(ConfigError):
            FitProblem(TANH, signature)

    def test_describe(self):
        info = FitProblem(TANH, (4, 4, 4)).describe()
        assert info == {'target': 'tanh:alpha=3', 'signature': [4, 4, 4], 'quadrature_points': 100,
                        'normalized': True, 'dof': 8}


class TestLoss:
    def test_matches_direct_quadrature(self):
        prob = FitProblem(TANH, (3, 3))
        v = np.array([0.1, 0.5, -0.2, 0.3])
        x, w = prob.rule.nodes, prob.rule.weights
        g = DeepPolynomial((Polynomial((0.1, 0.5, -0.2)), Polynomial((0.0, 0.3, 1.0))))
        expected = 0.5 * np.sum(w * (np.tanh(3 * x) - g(x)) ** 2)
        assert loss(v, prob) == pytest.approx(expected, rel=1e-13)

    def test_zero_at_exact_representation(self):
        # q(y) = y^2 with p(x) = x^2 + x gives x^4 + 2x^3 + x^2
        prob = FitProblem(parse_target('custom:coeffs=0;0;1;2;1'), (3, 3))
        assert prob.loss(np.array([0.0, 0.0, 1.0, 1.0])) == pytest.approx(0.0, abs=1e-28)

    def test_l2_error_is_sqrt_two_f(self):
        prob = FitProblem(TANH, (3,))
        v = np.array([0.0, 1.0, 0.0])
        assert l2_error_of(v, prob) == pytest.approx(np.sqrt(2 * prob.loss(v)))

    def test_unnormalized_agrees_on_same_composite(self):
        v = np.array([0.2, -1.0, 0.4, 0.5, -0.3])
        normalized = FitProblem(TANH, (3, 4))
        unnormalized = FitProblem(TANH, (3, 4), normalized=False)
        g = normalized.unpack(v)
        assert unnormalized.loss(unnormalized.pack(g)) == pytest.approx(normalized.loss(v), rel=1e-14)

    def test_residual_curve(self):
        prob = FitProblem(TANH, (2,))
        xs = np.linspace(-1, 1, 5)
        f, g = residual_curve(np.array([0.0, 1.0]), prob, xs)
        np.testing.assert_allclose(f, np.tanh(3 * xs))
        np.testing.assert_allclose(g, xs)


class TestGradient:
    @pytest.mark.parametrize('signature, normalized', [
        ((4,), True),
        ((5, 5), True),
        ((3, 3, 3), True),
        ((3, 4), False),
    ])
    def test_matches_finite_differences(self, signature, normalized):
        prob = FitProblem(TANH, signature, normalized=normalized)
        rng = np.random.default_rng(11)
        for _ in range(50):
            v = rng.standard_normal(prob.dof)
            g = prob.gradient(v)
            g_fd = fd_gradient(prob, v)
            assert np.max(np.abs(g - g_fd)) <= 1e-5 * max(np.max(np.abs(g)), 1e-8)

    def test_loss_and_gradient_consistent(self):
        prob = FitProblem(TANH, (5, 5))
        v = np.linspace(-1, 1, 8)
        value, grad = prob.loss_and_gradient(v)
        assert value == prob.loss(v)
        np.testing.assert_array_equal(grad, prob.gradient(v))

    def test_gradient_vanishes_at_exact_fit(self):
        prob = FitProblem(parse_target('custom:coeffs=0;0;1;2;1'), (3, 3))
        np.testing.assert_allclose(prob.gradient(np.array([0.0, 0.0, 1.0, 1.0])), 0.0, atol=1e-13)


class TestLinearSeed:
    COEFFS = np.array([0.3, -1.2, 0.8, 0.5, 2.0])
    X = np.linspace(-1, 1, 51)

    def test_inner_identity_endpoint(self):
        v = linear_ls_seed(self.COEFFS, outer_degree=4)
        g = unpack(v, (5, 2))
        np.testing.assert_allclose(g(self.X), Polynomial(self.COEFFS)(self.X), atol=1e-13)

    def test_outer_linear_endpoint(self):
        v = linear_ls_seed(self.COEFFS, outer_degree=1)
        g = unpack(v, (2, 5))
        np.testing.assert_allclose(g(self.X), Polynomial(self.COEFFS)(self.X), atol=1e-13)

    def test_interior_split_rejected(self):
        with pytest.raises(ValueError):
            linear_ls_seed(self.COEFFS, outer_degree=2)

    def test_zero_leading_rejected(self):
        with pytest.raises(ValueError):
            linear_ls_seed([1.0, 2.0, 0.0], outer_degree=1)

    def test_endpoint_gradients_are_coupled(self):
        # same composite at both endpoints: b1 * dF/db_i (inner identity) == dF/da_i (outer linear)
        target = parse_target('bessel:n=1,c=5,s=1')
        left = FitProblem(target, (5, 2))
        right = FitProblem(target, (2, 5))
        v_left = linear_ls_seed(self.COEFFS, outer_degree=4)
        v_right = linear_ls_seed(self.COEFFS, outer_degree=1)
        assert left.loss(v_left) == pytest.approx(right.loss(v_right), rel=1e-12)
        g_left, g_right = left.gradient(v_left), right.gradient(v_right)
        b1 = v_right[1]
        np.testing.assert_allclose(b1 * g_left[1:4], g_right[2:], rtol=0, atol=1e-8)
        assert g_right[0] == pytest.approx(g_left[0], abs=1e-8)


class TestSimplifiedLoss:
    def test_equals_two_layer_problem(self):
        # q(y) = b1 * y, p(x) = x^2 + a1 * x is signature (2, 3) with b0 = 0
        rule = gauss_legendre()
        prob = FitProblem(BESSEL40, (2, 3), rule=rule)
        a1, b1 = 0.7, -0.4
        assert simplified_loss(a1, b1, BESSEL40, rule) == pytest.approx(prob.loss(np.array([0.0, b1, a1])), rel=1e-13)

    def test_flat_along_a1_when_b1_is_zero(self):
        a_values = np.linspace(-2, 2, 9)
        surface = simplified_loss_surface(BESSEL40, a_values, [-0.5, 0.0, 0.5])
        assert surface.shape == (3, 9)
        assert np.all(surface[1] == surface[1][0])
        assert np.ptp(surface[0]) > 0

    def test_gradient_matches_finite_differences(self):
        a1, b1, h = 0.3, 0.8, 1e-6
        d_a1, d_b1 = simplified_loss_gradient(a1, b1, BESSEL40)
        fd_a1 = (simplified_loss(a1 + h, b1, BESSEL40) - simplified_loss(a1 - h, b1, BESSEL40)) / (2 * h)
        fd_b1 = (simplified_loss(a1, b1 + h, BESSEL40) - simplified_loss(a1, b1 - h, BESSEL40)) / (2 * h)
        assert d_a1 == pytest.approx(fd_a1, rel=1e-6, abs=1e-10)
        assert d_b1 == pytest.approx(fd_b1, rel=1e-6, abs=1e-10)

    def test_a1_gradient_factors_through_b1(self):
        rule = gauss_legendre()
        x, w = rule.nodes, rule.weights
        f = BESSEL40(x)
        a1 = 0.5
        assert simplified_loss_gradient(a1, 0.0, BESSEL40, rule)[0] == 0.0
        for b1 in (0.25, 0.5):
            residual = f - b1 * (x * x + a1 * x)
            moment = -np.sum(w * residual * x)
            assert simplified_loss_gradient(a1, b1, BESSEL40, rule)[0] == pytest.approx(b1 * moment, rel=1e-8)

    def test_surface_matches_pointwise_loss(self):
        a_values, b_values = [-1.0, 0.5], [0.2, 1.5]
        surface = simplified_loss_surface(BESSEL40, a_values, b_values)
        assert surface[1, 0] == pytest.approx(simplified_loss(-1.0, 1.5, BESSEL40), rel=1e-14)
