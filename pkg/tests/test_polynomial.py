"""Tests for deeppoly.polynomial: evaluation, composition, normalization, decomposition."""

import numpy as np
import pytest

from deeppoly.errors import DegreeCapExceeded, SingularLeadingCoefficient
from deeppoly.polynomial import (
    DeepPolynomial,
    Polynomial,
    compose,
    decompose,
    degrees_of_freedom,
    derivative,
    expand,
    normalize_chain,
    normalize_pair,
)

GRID = np.linspace(-1.0, 1.0, 201)


class TestPolynomial:
    def test_scalar_evaluation_returns_float(self):
        value = Polynomial((1.0, 2.0, 3.0))(2.0)
        assert isinstance(value, float)
        assert value == 17.0

    def test_array_evaluation(self):
        p = Polynomial((0.0, 1.0))
        np.testing.assert_array_equal(p(GRID), GRID)

    def test_complex_argument(self):
        assert Polynomial((1.0, 0.0, 1.0))(1j) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Polynomial(())

    def test_trailing_zeros_kept(self):
        assert Polynomial((1.0, 2.0, 0.0)).degree == 2

    def test_json_round_trip(self):
        p = Polynomial((0.1, -2.5, 3.0))
        assert Polynomial.from_json(p.to_json()) == p

    def test_derivative(self):
        assert derivative(Polynomial((5.0, 1.0, 3.0))).coeffs == (1.0, 6.0)


class TestDeepPolynomial:
    def test_signature_and_degree(self):
        g = DeepPolynomial((Polynomial((1, 2, 3)), Polynomial((0, 1, 1, 1))))
        assert g.signature == (3, 4)
        assert g.degree == 6
        assert g.depth == 2

    def test_evaluates_innermost_first(self):
        outer = Polynomial((0.0, 0.0, 1.0))
        inner = Polynomial((1.0, 1.0))
        g = DeepPolynomial((outer, inner))
        np.testing.assert_allclose(g(GRID), (GRID + 1.0) ** 2, rtol=0, atol=1e-14)

    def test_json_round_trip(self):
        g = DeepPolynomial((Polynomial((1, 2)), Polynomial((0, 3, 1))), normalized=True)
        assert DeepPolynomial.from_json(g.to_json()) == g


class TestComposeAndExpand:
    def test_compose_square_of_shift(self):
        assert compose(Polynomial((0, 0, 1)), Polynomial((1, 1))).coeffs == (1.0, 2.0, 1.0)

    def test_expand_matches_nested_evaluation(self):
        rng = np.random.default_rng(1)
        g = DeepPolynomial(tuple(Polynomial(rng.standard_normal(4)) for _ in range(3)))
        flat = expand(g)
        assert flat.degree == 27
        np.testing.assert_allclose(flat(GRID), g(GRID), rtol=1e-10, atol=1e-10)

    def test_compose_is_associative(self):
        rng = np.random.default_rng(7)
        a, b, c = (Polynomial(rng.standard_normal(k)) for k in (4, 3, 5))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert left.degree == right.degree == 24
        np.testing.assert_allclose(left.coeffs, right.coeffs, rtol=0, atol=1e-11 * np.max(np.abs(left.coeffs)))

    def test_degree_cap(self):
        g = DeepPolynomial(tuple(Polynomial(np.ones(9)) for _ in range(3)))
        assert expand(g, cap=512).degree == 512
        with pytest.raises(DegreeCapExceeded):
            expand(g, cap=511)


class TestNormalization:
    def test_pair_preserves_composite(self):
        rng = np.random.default_rng(4)
        q = Polynomial(rng.standard_normal(5))
        p = Polynomial(rng.standard_normal(4))
        q_t, p_t = normalize_pair(q, p)
        before = DeepPolynomial((q, p))(GRID)
        after = DeepPolynomial((q_t, p_t))(GRID)
        assert np.max(np.abs(before - after)) <= 1e-9 * max(1.0, np.max(np.abs(before)))

    def test_pair_inner_is_monic_without_constant(self):
        _, p_t = normalize_pair(Polynomial((1, 2, 3)), Polynomial((0.5, -2.0, 4.0)))
        assert p_t.coeffs[0] == 0.0
        assert p_t.coeffs[-1] == 1.0

    def test_already_normalized_pair_unchanged(self):
        q = Polynomial((0.3, -1.0, 2.0))
        p = Polynomial((0.0, 0.7, 1.0))
        q_t, p_t = normalize_pair(q, p)
        np.testing.assert_allclose(q_t.coeffs, q.coeffs, rtol=0, atol=1e-15)
        assert p_t == p

    def test_zero_leading_coefficient(self):
        with pytest.raises(SingularLeadingCoefficient):
            normalize_pair(Polynomial((1, 1)), Polynomial((1, 2, 0)))

    def test_chain_preserves_composite(self):
        rng = np.random.default_rng(9)
        g = DeepPolynomial(tuple(Polynomial(rng.standard_normal(3)) for _ in range(3)))
        n = normalize_chain(g)
        assert n.normalized
        for layer in n.layers[1:]:
            assert layer.coeffs[0] == 0.0 and layer.coeffs[-1] == 1.0
        ref = g(GRID)
        assert np.max(np.abs(n(GRID) - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))

    def test_single_layer_chain(self):
        g = DeepPolynomial((Polynomial((1, 2)),))
        assert normalize_chain(g).layers == g.layers


class TestDegreesOfFreedom:
    @pytest.mark.parametrize('signature, expected', [
        ((5, 5), 8),
        ((5, 5, 5), 11),
        ((4, 4, 4), 8),
        ((15, 15), 28),
        ((1,), 1),
    ])
    def test_counts(self, signature, expected):
        assert degrees_of_freedom(signature) == expected

    def test_empty_signature(self):
        with pytest.raises(ValueError):
            degrees_of_freedom(())

    def test_zero_coefficient_layer(self):
        with pytest.raises(ValueError):
            degrees_of_freedom((3, 0))


class TestDecompose:
    def test_recovers_normalized_factors(self):
        q = Polynomial((0.3, -1.0, 2.0))
        p = Polynomial((0.0, 0.5, -0.2, 1.0))
        q_r, p_r = decompose(compose(q, p), outer_degree=2, inner_degree=3)
        np.testing.assert_allclose(p_r.coeffs, p.coeffs, atol=1e-12)
        np.testing.assert_allclose(q_r.coeffs, q.coeffs, atol=1e-12)

    def test_normalizing_then_decomposing_round_trip(self):
        rng = np.random.default_rng(2)
        q_t, p_t = normalize_pair(Polynomial(rng.standard_normal(4)), Polynomial(rng.standard_normal(3)))
        q_r, p_r = decompose(compose(q_t, p_t), outer_degree=3, inner_degree=2)
        np.testing.assert_allclose(p_r.coeffs, p_t.coeffs, atol=1e-9)
        np.testing.assert_allclose(q_r.coeffs, q_t.coeffs, atol=1e-9)

    def test_degree_mismatch(self):
        with pytest.raises(ValueError):
            decompose(Polynomial((1, 2, 3, 4)), outer_degree=2, inner_degree=2)
