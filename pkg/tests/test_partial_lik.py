"Test the Cox partial likelihood and its derivatives"
import unittest

import numpy as np

from semicox.core import SurvivalDataset
from semicox.exceptions import ConvergenceError
from semicox.partial_lik import (LikelihoodContext, log_profile_pl,
                                 loglik_grad_hess, neg_log_pl,
                                 penalized_eta_objective, risk_probabilities)
from semicox.spline import build_basis, select_knots

H = 1e-5


def random_context(n=40, d=3, q=1, seed=0):
    rng = np.random.default_rng(seed)
    times = np.round(rng.exponential(size=n), 1)  # rounding creates ties
    events = rng.uniform(size=n) < 0.7
    events[0] = True
    ds = SurvivalDataset.from_arrays(times, events.astype(int),
                                     rng.normal(size=(n, d)),
                                     rng.uniform(size=(n, q)), rescale=False)
    return LikelihoodContext.from_dataset(ds), rng


def brute_force_loglik(ds, lp):
    total = 0.0
    for i in np.flatnonzero(ds.events):
        at_risk = ds.times >= ds.times[i]
        total += lp[i] - np.log(np.sum(np.exp(lp[at_risk])))
    return total


class TestLogLikelihood(unittest.TestCase):
    def test_matches_definition(self):
        ctx, rng = random_context()
        ds = ctx.dataset
        beta = rng.normal(size=ds.d)
        eta = rng.normal(size=ds.n)
        self.assertAlmostEqual(log_profile_pl(ctx, beta, eta),
                               brute_force_loglik(ds, ds.u @ beta + eta),
                               places=9)
        self.assertAlmostEqual(neg_log_pl(ctx, beta, eta),
                               -log_profile_pl(ctx, beta, eta) / ds.n)

    def test_two_failures(self):
        ds = SurvivalDataset.from_arrays([1.0, 2.0], [1, 1], [[0.3], [-0.2]],
                                         [[0.1], [0.9]], rescale=False)
        ctx = LikelihoodContext.from_dataset(ds)
        self.assertAlmostEqual(neg_log_pl(ctx, [0.0], np.zeros(2)),
                               np.log(2) / 2)

    def test_probabilities_sum_to_one(self):
        ctx, rng = random_context()
        probs, _ = risk_probabilities(ctx, rng.normal(size=ctx.dataset.n))
        np.testing.assert_allclose(probs.sum(axis=1), 1)
        self.assertTrue(np.all(probs[~ctx.risk.indicator] == 0))

    def test_large_linear_predictor(self):
        ctx, _ = random_context()
        lp = np.full(ctx.dataset.n, 800.0)
        _, loglik = risk_probabilities(ctx, lp)
        self.assertTrue(np.isfinite(loglik))
        _, shifted = risk_probabilities(ctx, lp - 800)
        self.assertAlmostEqual(loglik, shifted, places=6)

    def test_non_finite_linear_predictor(self):
        ctx, _ = random_context()
        lp = np.zeros(ctx.dataset.n)
        lp[3] = np.inf
        with self.assertRaises(ConvergenceError):
            risk_probabilities(ctx, lp)

    def test_offset_is_not_used_by_beta_problem(self):
        ctx, rng = random_context()
        beta = rng.normal(size=ctx.dataset.d)
        eta = np.zeros(ctx.dataset.n)
        shifted = ctx.with_offset(rng.normal(size=ctx.dataset.n))
        self.assertEqual(log_profile_pl(ctx, beta, eta),
                         log_profile_pl(shifted, beta, eta))

    def test_bad_offset(self):
        ctx, _ = random_context()
        with self.assertRaises(ValueError):
            ctx.with_offset(np.zeros(3))


class TestBetaDerivatives(unittest.TestCase):
    def test_finite_differences(self):
        for seed in range(10):
            ctx, rng = random_context(n=30 + seed, d=1 + seed % 5, seed=seed)
            d = ctx.dataset.d
            beta = rng.normal(scale=0.5, size=d)
            eta = rng.normal(scale=0.5, size=ctx.dataset.n)
            _, grad, hess = loglik_grad_hess(ctx, beta, eta)
            num_grad = np.zeros(d)
            num_hess = np.zeros((d, d))
            for j in range(d):
                step = np.zeros(d)
                step[j] = H
                num_grad[j] = (log_profile_pl(ctx, beta + step, eta) -
                               log_profile_pl(ctx, beta - step, eta)) / (2 * H)
                num_hess[:, j] = (loglik_grad_hess(ctx, beta + step, eta)[1] -
                                  loglik_grad_hess(ctx, beta - step, eta)[1]
                                  ) / (2 * H)
            np.testing.assert_allclose(grad, num_grad, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(hess, num_hess, rtol=1e-5, atol=1e-6)

    def test_hessian_negative_semidefinite(self):
        ctx, rng = random_context(d=4)
        _, _, hess = loglik_grad_hess(ctx, rng.normal(size=4),
                                      np.zeros(ctx.dataset.n))
        self.assertLess(np.linalg.eigvalsh(hess).max(), 1e-10)


class TestEtaDerivatives(unittest.TestCase):
    def test_finite_differences(self):
        for seed in range(5):
            ctx, rng = random_context(n=40, q=1 + seed % 2, seed=seed)
            ds = ctx.dataset
            ctx = ctx.with_beta(rng.normal(scale=0.3, size=ds.d))
            basis, design = build_basis(ds, select_knots(ds, seed, size=6))
            vector = rng.normal(scale=0.1, size=basis.dim)
            lam = 1e-3
            obj = penalized_eta_objective(ctx, basis, vector, lam, design)
            num_grad = np.zeros(basis.dim)
            num_hess = np.zeros((basis.dim, basis.dim))
            for j in range(basis.dim):
                step = np.zeros(basis.dim)
                step[j] = H
                plus = penalized_eta_objective(ctx, basis, vector + step, lam,
                                               design)
                minus = penalized_eta_objective(ctx, basis, vector - step,
                                                lam, design)
                num_grad[j] = (plus.value - minus.value) / (2 * H)
                num_hess[:, j] = (plus.gradient - minus.gradient) / (2 * H)
            np.testing.assert_allclose(obj.gradient, num_grad, rtol=1e-5,
                                       atol=1e-7)
            np.testing.assert_allclose(obj.hessian, num_hess, rtol=1e-5,
                                       atol=1e-7)

    def test_value(self):
        ctx, rng = random_context()
        ds = ctx.dataset
        basis, design = build_basis(ds, select_knots(ds, 0, size=5))
        vector = rng.normal(size=basis.dim)
        lam = 0.01
        obj = penalized_eta_objective(ctx, basis, vector, lam, design)
        expected = -brute_force_loglik(ds, design @ vector) / ds.n + \
            lam * vector @ basis.penalty_matrix() @ vector
        self.assertAlmostEqual(obj.value, expected, places=9)

    def test_lambda_must_be_positive(self):
        ctx, _ = random_context()
        ds = ctx.dataset
        basis, design = build_basis(ds, select_knots(ds, 0, size=5))
        with self.assertRaises(ValueError):
            penalized_eta_objective(ctx, basis, np.zeros(basis.dim), 0,
                                    design)
