"Test the penalized estimation of beta"
import unittest
import warnings

import numpy as np

from semicox.beta_solver import (ExpansionMode, PenaltyKind, PenaltySpec,
                                 adaptive_lasso_thetas, aic_select_theta,
                                 default_theta_grid, expand,
                                 lars_weighted_lasso, one_step_update,
                                 profile_maximizer, scad_deriv, scad_penalty)
from semicox.core import SurvivalDataset
from semicox.exceptions import ConvergenceWarning
from semicox.partial_lik import (LikelihoodContext, log_profile_pl,
                                 loglik_grad_hess)
from semicox.simulator import calibrate_censoring, gen_data, get_scenario


def simulated_context(n=300, seed=0):
    sc = get_scenario('uni-a', n=n)
    rate = calibrate_censoring(sc, size=20_000)
    ds = gen_data(sc, rate, np.random.default_rng(seed))
    return sc, LikelihoodContext.from_dataset(ds), sc.eta0(ds.w)


def lasso_objective(b, y, x, weights, n):
    return 0.5 * np.sum((y - x @ b) ** 2) + n * np.sum(weights * np.abs(b))


class TestPenalties(unittest.TestCase):
    def test_scad_derivative(self):
        t = np.array([0.0, 0.5, 1.0, 2.0, 3.7, 5.0])
        np.testing.assert_allclose(scad_deriv(1.0, 3.7, t),
                                   [1, 1, 1, 1.7 / 2.7, 0, 0])

    def test_scad_penalty(self):
        theta, a = 0.5, 3.7
        self.assertAlmostEqual(float(scad_penalty(theta, a, 0.25)), 0.125)
        flat = (a + 1) * theta ** 2 / 2
        self.assertAlmostEqual(float(scad_penalty(theta, a, 10.0)), flat)
        # continuous at the knots theta and a theta
        for knot in (theta, a * theta):
            below = float(scad_penalty(theta, a, knot - 1e-9))
            above = float(scad_penalty(theta, a, knot + 1e-9))
            self.assertAlmostEqual(below, above, places=7)

    def test_scad_penalty_derivative_agrees(self):
        theta, a = 0.3, 3.7
        for t in (0.1, 0.5, 0.9, 1.5):
            num = (scad_penalty(theta, a, t + 1e-6) -
                   scad_penalty(theta, a, t - 1e-6)) / 2e-6
            self.assertAlmostEqual(float(num),
                                   float(scad_deriv(theta, a, t)), places=5)

    def test_spec_validation(self):
        with self.assertRaises(ValueError):
            PenaltySpec(a=2.0)
        with self.assertRaises(ValueError):
            PenaltySpec(thetas=(0.1, -0.1))
        with self.assertRaises(ValueError):
            PenaltySpec().derivative([1.0])

    def test_adaptive_lasso_derivative_is_constant(self):
        spec = PenaltySpec(PenaltyKind.ALASSO).with_thetas([0.2, 0.4])
        np.testing.assert_allclose(spec.derivative([5.0, 0.01]), [0.2, 0.4])
        np.testing.assert_allclose(spec.value([-1.0, 0.5]), [0.2, 0.2])

    def test_adaptive_lasso_thetas(self):
        thetas = adaptive_lasso_thetas([0.5, -2.0, 0.0], 0.1)
        np.testing.assert_allclose(thetas[:2], [0.2, 0.05])
        self.assertTrue(np.isinf(thetas[2]))

    def test_default_theta_grid(self):
        grid = default_theta_grid(150, 1)
        self.assertEqual(len(grid), 30)
        self.assertTrue(np.all(grid > 0))
        self.assertTrue(np.all(np.diff(grid) > 0))


class TestLarsWeightedLasso(unittest.TestCase):
    def test_orthonormal_design_soft_thresholds(self):
        y = np.array([3.0, -0.5, 1.2, -2.0])
        weights = np.array([0.01, 0.01, 0.02, 0.005])
        n = 50
        coef = lars_weighted_lasso(y, np.eye(4), weights, n)
        expected = np.sign(y) * np.maximum(np.abs(y) - n * weights, 0)
        np.testing.assert_allclose(coef, expected, atol=1e-10)

    def test_kkt_conditions(self):
        rng = np.random.default_rng(0)
        for p in range(1, 9):
            x = rng.normal(size=(p + 3, p))
            y = rng.normal(size=p + 3) * 2
            weights = rng.uniform(0.5, 1.5, size=p)
            n = 0.5
            coef = lars_weighted_lasso(y, x, weights, n)
            corr = x.T @ (y - x @ coef)
            nonzero = coef != 0
            np.testing.assert_allclose(
                corr[nonzero], n * weights[nonzero] * np.sign(coef[nonzero]),
                atol=1e-8)
            self.assertTrue(np.all(np.abs(corr[~nonzero]) <=
                                   n * weights[~nonzero] + 1e-8))

    def test_grid_search(self):
        rng = np.random.default_rng(1)
        axis = np.linspace(-2, 2, 401)
        b1, b2 = np.meshgrid(axis, axis, indexing='ij')
        grid = np.column_stack([b1.ravel(), b2.ravel()])
        for _ in range(5):
            x = 0.3 * rng.normal(size=(2, 2)) + 2 * np.eye(2)
            y = x @ rng.uniform(-1, 1, size=2) + rng.normal(scale=0.3,
                                                            size=2)
            weights = rng.uniform(0.2, 1.0, size=2)
            n = 1.0
            coef = lars_weighted_lasso(y, x, weights, n)
            values = 0.5 * np.sum((y[np.newaxis, :] - grid @ x.T) ** 2,
                                  axis=1) + n * np.abs(grid) @ weights
            best = grid[np.argmin(values)]
            np.testing.assert_allclose(coef, best, atol=0.01 + 1e-9)
            self.assertLessEqual(lasso_objective(coef, y, x, weights, n),
                                 values.min() + 1e-9)

    def test_infinite_weight(self):
        coef = lars_weighted_lasso(np.array([2.0, 3.0]), np.eye(2),
                                   np.array([np.inf, 0.1]), 1.0)
        self.assertEqual(coef[0], 0.0)
        self.assertAlmostEqual(coef[1], 2.9)

    def test_zero_weight(self):
        with self.assertRaises(ValueError):
            lars_weighted_lasso(np.ones(2), np.eye(2), np.array([0.0, 1.0]),
                                1.0)


class TestOneStepUpdate(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.sc, cls.ctx, cls.eta = simulated_context()
        cls.prof = profile_maximizer(cls.ctx, cls.eta)

    def test_profile_maximizer(self):
        self.assertTrue(self.prof.converged)
        _, grad, _ = loglik_grad_hess(self.ctx, self.prof.beta, self.eta)
        self.assertLess(np.max(np.abs(grad)), 1e-6)

    def test_no_penalty_gives_profile_maximizer(self):
        spec = PenaltySpec(PenaltyKind.SCAD).with_thetas(np.zeros(8))
        fit = one_step_update(self.ctx, self.eta, np.zeros(8), spec)
        np.testing.assert_allclose(fit.beta, self.prof.beta, atol=1e-8)
        self.assertEqual(len(fit.active_set), 8)

    def test_no_penalty_previous_is_newton_step(self):
        spec = PenaltySpec(PenaltyKind.SCAD).with_thetas(np.zeros(8))
        start = np.full(8, 0.1)
        fit = one_step_update(self.ctx, self.eta, start, spec,
                              ExpansionMode.PREVIOUS)
        _, grad, hess = loglik_grad_hess(self.ctx, start, self.eta)
        np.testing.assert_allclose(fit.beta,
                                   start + np.linalg.solve(-hess, grad),
                                   atol=1e-8)

    def test_large_theta_zeroes_everything(self):
        spec = PenaltySpec(PenaltyKind.SCAD).with_thetas(np.full(8, 100.0))
        fit = one_step_update(self.ctx, self.eta, self.prof.beta, spec)
        np.testing.assert_array_equal(fit.beta, 0.0)
        self.assertEqual(fit.n_nonzero, 0)

    def test_forced_zero(self):
        thetas = adaptive_lasso_thetas(np.r_[self.prof.beta[:7], 0.0], 1e-3)
        spec = PenaltySpec(PenaltyKind.ALASSO).with_thetas(thetas)
        fit = one_step_update(self.ctx, self.eta, self.prof.beta, spec)
        self.assertEqual(fit.forced_zero, (7,))
        self.assertEqual(fit.beta[7], 0.0)

    def test_wrong_number_of_thetas(self):
        spec = PenaltySpec().with_thetas([0.1])
        with self.assertRaises(ValueError):
            one_step_update(self.ctx, self.eta, np.zeros(8), spec)

    def test_lla_objective_is_minimized(self):
        spec = PenaltySpec(PenaltyKind.SCAD).with_thetas(np.full(8, 0.05))
        exp_point = expand(self.ctx, self.eta, self.prof.beta)
        fit = one_step_update(self.ctx, self.eta, self.prof.beta, spec,
                              exp_point)
        weights = spec.derivative(exp_point.point)
        n = self.ctx.dataset.n

        def objective(b):
            return 0.5 * np.sum((exp_point.y - exp_point.chol @ b) ** 2) + \
                n * np.sum(weights * np.abs(b))

        best = objective(fit.beta)
        rng = np.random.default_rng(0)
        for _ in range(200):
            other = fit.beta + rng.normal(scale=0.01, size=8)
            self.assertLessEqual(best, objective(other) + 1e-9)


class TestOneStepAgainstGridSearch(unittest.TestCase):
    '''Brute-force maximization of l(beta) - n sum_j p_theta(|beta_j|) for
    d = 2. The first coefficient is beyond a theta, so SCAD leaves it
    unpenalized, and the second one is null.'''
    theta = 0.3

    @classmethod
    def setUpClass(cls):
        rng = np.random.default_rng(0)
        n = 200
        u = rng.normal(size=(n, 2))
        times = rng.standard_exponential(n) / np.exp(1.5 * u[:, 0])
        ds = SurvivalDataset.from_arrays(times, np.ones(n, dtype=int), u,
                                         rng.uniform(size=(n, 1)),
                                         rescale=False)
        cls.ctx = LikelihoodContext.from_dataset(ds)
        cls.eta = np.zeros(n)
        cls.grid = np.linspace(-2, 2, 801)
        cls.objective = cls.grid_objective(ds)

    @classmethod
    def grid_objective(cls, ds):
        order = np.argsort(ds.times)
        u = ds.u[order]
        penalty_b2 = scad_penalty(cls.theta, 3.7, cls.grid)
        values = np.empty((cls.grid.size, cls.grid.size))
        for i, b1 in enumerate(cls.grid):
            lp = b1 * u[:, [0]] + u[:, [1]] * cls.grid[np.newaxis, :]
            # no ties: the risk set of the k-th failure is the tail from k
            lse = np.logaddexp.accumulate(lp[::-1], axis=0)[::-1]
            loglik = np.sum(lp - lse, axis=0)
            values[i] = loglik - ds.n * (scad_penalty(cls.theta, 3.7, b1) +
                                         penalty_b2)
        return values

    def penalized(self, beta):
        return log_profile_pl(self.ctx, beta, self.eta) - \
            self.ctx.dataset.n * np.sum(scad_penalty(self.theta, 3.7, beta))

    def test_grid_objective(self):
        i, j = 300, 500
        beta = np.array([self.grid[i], self.grid[j]])
        self.assertAlmostEqual(self.objective[i, j], self.penalized(beta),
                               places=8)

    def test_matches_grid_maximizer(self):
        spec = PenaltySpec(PenaltyKind.SCAD).with_thetas([self.theta] * 2)
        prof = profile_maximizer(self.ctx, self.eta)
        fit = one_step_update(self.ctx, self.eta, prof.beta, spec)
        i, j = np.unravel_index(np.argmax(self.objective),
                                self.objective.shape)
        best = np.array([self.grid[i], self.grid[j]])

        self.assertEqual(best[1], 0.0)
        self.assertEqual(fit.beta[1], 0.0)
        self.assertLess(abs(fit.beta[0] - best[0]), 0.0125)
        self.assertGreater(self.penalized(fit.beta),
                           self.objective[i, j] - 0.05)


class TestAicSelection(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.sc, cls.ctx, cls.eta = simulated_context()
        cls.beta0 = profile_maximizer(cls.ctx, cls.eta).beta

    def test_selects_minimum_aic(self):
        spec = PenaltySpec(PenaltyKind.SCAD)
        grid = default_theta_grid(self.ctx.dataset.n, 8, size=10)
        theta, best = aic_select_theta(self.ctx, self.eta, self.beta0, spec,
                                       grid)
        self.assertIn(theta, grid)
        for other in grid:
            fit = one_step_update(self.ctx, self.eta, self.beta0,
                                  spec.with_thetas(np.full(8, other)))
            self.assertLessEqual(best.aic, fit.aic + 1e-10)

    def test_keeps_true_support(self):
        for kind in PenaltyKind:
            _, fit = aic_select_theta(self.ctx, self.eta, self.beta0,
                                      PenaltySpec(kind))
            for j in (0, 3, 6):
                self.assertNotEqual(fit.beta[j], 0.0)

    def test_exact_zeros(self):
        _, fit = aic_select_theta(self.ctx, self.eta, self.beta0,
                                  PenaltySpec(PenaltyKind.SCAD), [0.2])
        self.assertTrue(np.all((fit.beta == 0) | (np.abs(fit.beta) > 1e-10)))

    def test_tie_goes_to_sparser_model(self):
        spec = PenaltySpec(PenaltyKind.SCAD)
        # a huge theta and a repeated one give the same empty model
        theta, fit = aic_select_theta(self.ctx, self.eta, self.beta0, spec,
                                      [1e3, 1e4])
        self.assertEqual(theta, 1e3)
        self.assertEqual(fit.n_nonzero, 0)

    def test_empty_grid(self):
        with self.assertRaises(ValueError):
            aic_select_theta(self.ctx, self.eta, self.beta0, PenaltySpec(),
                             [])

    def test_previous_expansion(self):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            _, fit = aic_select_theta(self.ctx, self.eta, self.beta0,
                                      PenaltySpec(), None,
                                      ExpansionMode.PREVIOUS)
        self.assertEqual(fit.beta.shape, (8,))
        np.testing.assert_allclose(fit.expansion_point, self.beta0)


class TestPermutationInvariance(unittest.TestCase):
    def test_same_estimate_for_permuted_rows(self):
        sc, ctx, eta = simulated_context(n=150, seed=3)
        ds = ctx.dataset
        order = np.random.default_rng(0).permutation(ds.n)
        perm_ds = ds.permuted(order)
        perm_ctx = LikelihoodContext.from_dataset(perm_ds)
        spec = PenaltySpec(PenaltyKind.SCAD)
        _, fit = aic_select_theta(ctx, eta, np.zeros(8), spec)
        _, perm_fit = aic_select_theta(perm_ctx, eta[order], np.zeros(8),
                                       spec)
        np.testing.assert_allclose(fit.beta, perm_fit.beta, atol=1e-6)
