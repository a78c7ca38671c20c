"""Tests for deeppoly.deflation: the deflation factor, deflated Newton and defmulti."""

import numpy as np
import pytest
import yaml

import config
from deeppoly.deflation import (
    DeflationState,
    deflate_step,
    deflated_gradient,
    deflated_jacobian,
    deflated_newton,
    deflation_factor,
    deflation_factor_gradient,
    deflation_grid,
    defmulti,
)
from deeppoly.errors import AtKnownRoot
from deeppoly.objective import FitProblem
from deeppoly.optimizer import OptimizerConfig
from deeppoly.targets import parse_target


class DoubleWell:
    """F(u) = 1/4 (u^2 - 1)^2, minima at u = -1 and u = +1."""

    dof = 1

    def loss(self, v):
        u = float(v[0])
        return 0.25 * (u * u - 1.0) ** 2

    def gradient(self, v):
        u = float(v[0])
        return np.array([u * (u * u - 1.0)])

    def loss_and_gradient(self, v):
        return self.loss(v), self.gradient(v)


class Bowl:
    """F(u) = 1/2 ||u||^2, a single minimum at the origin."""

    def __init__(self, dof=1):
        self.dof = dof

    def loss(self, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * float(v @ v)

    def gradient(self, v):
        return np.asarray(v, dtype=float).copy()

    def loss_and_gradient(self, v):
        return self.loss(v), self.gradient(v)


class SmoothBowl:
    """A non-quadratic convex loss in three variables."""

    dof = 3

    def loss(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sum(np.cosh(v)) + 0.2 * v[0] * v[1] - 0.1 * v[2])

    def gradient(self, v):
        v = np.asarray(v, dtype=float)
        return np.sinh(v) + np.array([0.2 * v[1], 0.2 * v[0], -0.1])

    def loss_and_gradient(self, v):
        return self.loss(v), self.gradient(v)


def fd_vector(func, u, h=1e-6):
    out = np.empty_like(u)
    for i in range(len(u)):
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        out[i] = (func(up) - func(um)) / (2 * h)
    return out


class TestDeflationState:
    @pytest.mark.parametrize('kwargs', [{'alpha': 0.5}, {'beta': -1.0}, {'perturb': 0.0}, {'max_iters': 0}])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            DeflationState(**kwargs)

    def test_defaults(self):
        state = DeflationState()
        assert (state.alpha, state.beta, state.perturb, state.step, state.max_iters) == (2.0, 1.0, 1e-3, 1.0, 200)
        assert state.roots == []

    def test_roots_become_arrays(self):
        state = DeflationState(roots=[[1, 2], (3, 4)])
        assert all(isinstance(r, np.ndarray) for r in state.roots)
        np.testing.assert_array_equal(state.distances(np.array([1.0, 2.0])), [0.0, np.sqrt(8.0)])


class TestDeflationFactor:
    def test_no_roots_gives_one_plus_beta(self):
        assert deflation_factor([0.3, 0.4], DeflationState(beta=0.5)) == 1.5

    def test_single_root(self):
        state = DeflationState(roots=[[0.0, 0.0]], alpha=2.0, beta=1.0)
        assert deflation_factor([3.0, 4.0], state) == pytest.approx(1.0 / 25.0 + 1.0)

    def test_product_over_roots(self):
        state = DeflationState(roots=[[0.0], [3.0]], alpha=1.0, beta=0.0)
        assert deflation_factor([1.0], state) == pytest.approx(0.5)

    def test_tends_to_beta_far_away(self):
        state = DeflationState(roots=[[0.0, 0.0]], alpha=2.0, beta=1.0)
        assert deflation_factor([1e6, 0.0], state) == pytest.approx(1.0, abs=1e-11)

    def test_at_known_root(self):
        state = DeflationState(roots=[[1.0, -1.0]])
        with pytest.raises(AtKnownRoot):
            deflation_factor([1.0, -1.0], state)
        with pytest.raises(AtKnownRoot):
            deflation_factor_gradient([1.0, -1.0], state)

    def test_gradient_matches_finite_differences(self):
        state = DeflationState(roots=[[0.0, 1.0, -1.0], [0.5, 0.5, 0.5]], alpha=2.0, beta=1.0)
        u = np.array([0.9, -0.4, 0.3])
        expected = fd_vector(lambda x: deflation_factor(x, state), u)
        np.testing.assert_allclose(deflation_factor_gradient(u, state), expected, rtol=1e-7, atol=1e-9)


class TestDeflatedField:
    def test_scales_the_gradient(self):
        state = DeflationState(roots=[[-1.0]], alpha=1.0, beta=1.0)
        u = np.array([0.5])
        expected = (1.0 / 1.5 + 1.0) * DoubleWell().gradient(u)
        np.testing.assert_allclose(deflated_gradient(u, DoubleWell(), state), expected)

    def test_keeps_other_stationary_points(self):
        state = DeflationState(roots=[[-1.0]], alpha=2.0, beta=1.0)
        np.testing.assert_array_equal(deflated_gradient(np.array([1.0]), DoubleWell(), state), [0.0])
        np.testing.assert_array_equal(deflated_gradient(np.array([0.0]), DoubleWell(), state), [0.0])

    def test_no_new_zeros_on_grid(self):
        state = DeflationState(roots=[[-1.0]], alpha=2.0, beta=1.0)
        grid = [u for u in np.linspace(-3.0, 3.0, 121) if abs(u + 1.0) > 1e-3]
        for u in grid:
            point = np.array([u])
            deflated_zero = deflated_gradient(point, DoubleWell(), state)[0] == 0.0
            plain_zero = DoubleWell().gradient(point)[0] == 0.0
            assert deflated_zero == plain_zero

    def test_assembled_jacobian_matches_fd(self):
        state = DeflationState(roots=[[0.2, -0.3, 0.1]], alpha=2.0, beta=1.0)
        u = np.array([0.7, 0.4, -0.5])
        fd = deflated_jacobian(u, SmoothBowl(), state, mode='fd')
        assembled = deflated_jacobian(u, SmoothBowl(), state, mode='assembled')
        np.testing.assert_allclose(assembled, fd, rtol=1e-5, atol=1e-7)

    def test_unknown_jacobian_mode(self):
        with pytest.raises(ValueError):
            deflated_jacobian(np.zeros(3), SmoothBowl(), DeflationState(), mode='exact')

    def test_step_without_roots_is_newton(self):
        # with no roots mu is the constant 1 + beta, so the step is plain Newton on grad F
        step = deflate_step(np.array([0.5]), DoubleWell(), DeflationState(), OptimizerConfig())
        u = 0.5
        expected = u - u * (u * u - 1.0) / (3 * u * u - 1.0)
        assert step.x[0] == pytest.approx(expected, rel=1e-7)
        assert not step.singular

    @pytest.mark.parametrize('mode', ['fd', 'assembled'])
    @pytest.mark.parametrize('alpha, factor', [(2.0, 2.0), (3.0, 1.5)])
    def test_step_near_root_moves_away_along_offset(self, mode, alpha, factor):
        # quadratic bowl, beta = 0: K p = G gives p = -offset / (alpha - 1)
        state = DeflationState(roots=[[0.0, 0.0]], alpha=alpha, beta=0.0)
        offset = np.array([0.03, 0.04])
        step = deflate_step(offset, Bowl(dof=2), state, OptimizerConfig(), mode=mode)
        np.testing.assert_allclose(step.x, factor * offset, rtol=1e-5)


class TestDeflatedNewton:
    def test_double_well_finds_other_minimum(self):
        state = DeflationState(roots=[[-1.0]], alpha=1.0, beta=1.0)
        result = deflated_newton(DoubleWell(), np.array([-0.999]), state, OptimizerConfig())
        assert result.x[0] == pytest.approx(1.0, abs=1e-6)
        assert 'deflation_diverged' not in result.flags

    def test_iteration_cap_is_flagged(self):
        state = DeflationState(roots=[[-1.0]], alpha=2.0, beta=1.0, max_iters=1)
        result = deflated_newton(DoubleWell(), np.array([-0.999]), state, OptimizerConfig())
        assert result.iterations == 1
        assert 'deflation_max_iters' in result.flags


class TestDefmulti:
    def test_zero_rounds_is_a_single_fit(self):
        rounds = defmulti(DoubleWell(), [-1.3], n_def=0, alpha=1.0, beta=1.0)
        assert len(rounds) == 1
        assert rounds[0].index == 0
        assert rounds[0].root[0] == pytest.approx(-1.0, abs=1e-7)
        assert not rounds[0].duplicate

    def test_negative_rounds_rejected(self):
        with pytest.raises(ValueError):
            defmulti(DoubleWell(), [-1.3], n_def=-1)

    def test_double_well_finds_both_minima(self):
        rounds = defmulti(DoubleWell(), [-1.3], n_def=1, alpha=1.0, beta=1.0)
        assert rounds[0].root[0] == pytest.approx(-1.0, abs=1e-7)
        assert rounds[1].root[0] == pytest.approx(1.0, abs=1e-7)
        assert not rounds[1].duplicate
        assert rounds[1].error == pytest.approx(0.0, abs=1e-10)

    def test_single_minimum_reconverges_as_duplicate(self):
        rounds = defmulti(Bowl(), [0.7], n_def=1, alpha=1.0, beta=1.0)
        assert rounds[1].duplicate
        assert 'duplicate_root' in rounds[1].flags
        assert np.linalg.norm(rounds[1].root - rounds[0].root) < config.DUPLICATE_ROOT_TOL

    def test_round_to_dict(self):
        info = defmulti(DoubleWell(), [-1.3], n_def=0, alpha=1.0, beta=1.0)[0].to_dict()
        assert set(info) == {'round', 'root', 'error', 'duplicate', 'iters', 'flags'}
        assert set(info['iters']) == {'deflation', 'bfgs', 'newton'}
        assert isinstance(info['root'][0], float)


class TestDeflationGrid:
    def test_one_run_per_pair(self):
        runs = deflation_grid(DoubleWell(), [-1.3], 0, alphas=[1, 2], betas=[0.5, 1.0])
        assert set(runs) == {(1.0, 0.5), (1.0, 1.0), (2.0, 0.5), (2.0, 1.0)}
        assert all(len(rounds) == 1 for rounds in runs.values())


@pytest.mark.slow
@pytest.mark.reference
class TestBesselDeflationFixture:
    @staticmethod
    def _preset():
        with open(config.PRESETS_FILE) as f:
            preset = yaml.safe_load(f)['presets']['deflation_bessel0']
        return FitProblem(parse_target(preset['target']), tuple(preset['sig'])), preset['init']

    def test_second_round_improves_on_first(self):
        prob, init = self._preset()
        runs = deflation_grid(prob, init, 1, alphas=[2.0, 3.0], betas=[0.1, 0.5, 1.0, 2.0, 10.0])
        first = next(iter(runs.values()))[0]
        assert 1.3e-01 <= first.error <= 5.4e-01
        assert all(rounds[0].error == first.error for rounds in runs.values())
        improved = [
            key for key, rounds in runs.items()
            if 8e-03 <= rounds[1].error <= 3.4e-02 and np.linalg.norm(rounds[1].root - rounds[0].root) >= 0.1
        ]
        assert improved, {key: rounds[1].error for key, rounds in runs.items()}
