"Test the KL diagnostics for the structure of eta"
import unittest
import warnings

import numpy as np

from semicox.backfit import FitConfig, fit
from semicox.core import SurvivalDataset, build_risk_sets
from semicox.exceptions import ConvergenceWarning, StructureError
from semicox.kl_select import (FEASIBLE_RATIO, KLReport, biased_weights,
                               diagnose, kl_distance, kl_project,
                               reports_to_frame, select_structure)
from semicox.simulator import calibrate_censoring, gen_data, get_scenario
from semicox.spline import Term


def small_dataset(seed=0, n=30):
    rng = np.random.default_rng(seed)
    times = rng.exponential(size=n)
    events = (rng.uniform(size=n) < 0.8).astype(int)
    events[0] = 1
    return SurvivalDataset.from_arrays(times, events,
                                       rng.normal(size=(n, 2)),
                                       rng.uniform(size=(n, 1)),
                                       rescale=False)


def report(structure, ratio, threshold=FEASIBLE_RATIO):
    return KLReport(structure=structure, kl_full_reduced=ratio,
                    kl_reduced_const=1 - ratio, kl_full_const=1.0,
                    ratio=ratio, feasible=ratio < threshold,
                    pythagorean_defect=0.0)


class TestKLDistance(unittest.TestCase):
    def setUp(self):
        self.ds = small_dataset()
        self.weights = biased_weights(self.ds, [0.5, -0.3])
        self.rng = np.random.default_rng(1)

    def test_weights_outside_risk_sets(self):
        risk = build_risk_sets(self.ds)
        log_a = self.weights.log_a
        self.assertEqual(log_a.shape, (self.ds.n_failures, self.ds.n))
        self.assertTrue(np.all(np.isneginf(log_a[~risk.indicator])))
        self.assertTrue(np.all(np.isfinite(log_a[risk.indicator])))
        self.assertLessEqual(log_a[risk.indicator].max(), 0)

    def test_zero_for_equal_functions(self):
        eta = self.rng.normal(size=self.ds.n)
        self.assertAlmostEqual(kl_distance(eta, eta, self.weights), 0)

    def test_hand_value(self):
        ds = SurvivalDataset.from_arrays([1.0, 2.0], [1, 0], [[0.5], [0.5]],
                                         [[0.2], [0.7]], rescale=False)
        weights = biased_weights(ds, [1.0])
        np.testing.assert_array_equal(weights.log_a, [[0.0, 0.0]])
        self.assertAlmostEqual(kl_distance([0.0, 0.0], [1.0, -1.0], weights),
                               np.log(np.cosh(1.0)))
        self.assertAlmostEqual(np.log(np.cosh(1.0)), 0.43378, places=5)

    def test_nonnegative(self):
        for _ in range(5):
            eta1 = self.rng.normal(size=self.ds.n)
            eta2 = self.rng.normal(size=self.ds.n)
            self.assertGreaterEqual(kl_distance(eta1, eta2, self.weights), 0)

    def test_constant_shift(self):
        eta1 = self.rng.normal(size=self.ds.n)
        eta2 = self.rng.normal(size=self.ds.n)
        self.assertAlmostEqual(kl_distance(eta1, eta2 + 3, self.weights),
                               kl_distance(eta1, eta2, self.weights))


class TestSelectStructure(unittest.TestCase):
    fitted = (Term.W1, Term.W2, Term.W12)

    def test_fewest_terms(self):
        reports = [report((Term.W1, Term.W2), 0.01), report((Term.W1,), 0.03),
                   report((Term.W2,), 0.6)]
        self.assertEqual(select_structure(reports, self.fitted), (Term.W1,))

    def test_tie_goes_to_smaller_ratio(self):
        reports = [report((Term.W1,), 0.04), report((Term.W2,), 0.02)]
        self.assertEqual(select_structure(reports, self.fitted), (Term.W2,))

    def test_none_feasible(self):
        reports = [report((Term.W1,), 0.2), report((Term.W2,), 0.3)]
        self.assertEqual(select_structure(reports, self.fitted), self.fitted)

    def test_frame(self):
        frame = reports_to_frame([report((Term.W1,), 0.2)])
        self.assertEqual(frame.structure[0], 'w1')
        self.assertFalse(frame.feasible[0])


class TestDiagnose(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        sc = get_scenario('null-w2-a', n=300)
        rate = calibrate_censoring(sc, size=20_000)
        ds = gen_data(sc, rate, np.random.default_rng(5))
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            cls.result = fit(ds, FitConfig(structure=(Term.W1, Term.W2)))
            cls.reports = diagnose(cls.result, [(Term.W1, Term.W2),
                                                (Term.W1,), (Term.W2,), ()])
        cls.by_name = {r.structure: r for r in cls.reports}

    def test_full_candidate(self):
        full = self.by_name[(Term.W1, Term.W2)]
        self.assertAlmostEqual(full.ratio, 0)
        self.assertTrue(full.feasible)

    def test_constant_candidate(self):
        const = self.by_name[()]
        self.assertAlmostEqual(const.ratio, 1)
        self.assertAlmostEqual(const.kl_reduced_const, 0)
        self.assertFalse(const.feasible)

    def test_pythagorean_decomposition(self):
        for rep in self.reports:
            self.assertLess(rep.pythagorean_defect, 1e-6)
            self.assertAlmostEqual(rep.kl_full_reduced + rep.kl_reduced_const,
                                   rep.kl_full_const, places=6)

    def test_drops_the_null_covariate(self):
        w1 = self.by_name[(Term.W1,)]
        w2 = self.by_name[(Term.W2,)]
        self.assertLess(w1.ratio, w2.ratio)
        self.assertFalse(w2.feasible)

    def test_projection_matches_moments(self):
        weights = biased_weights(self.result.dataset, self.result.beta)
        projection = kl_project(self.result.eta_fit, (Term.W1,), weights)
        self.assertTrue(projection.converged)
        self.assertAlmostEqual(projection.values.mean(), 0)
        # the projection only depends on w1
        w2_only = kl_project(self.result.eta_fit, (Term.W2,), weights)
        self.assertEqual(w2_only.coef.shape, projection.coef.shape)

    def test_not_nested(self):
        with self.assertRaises(StructureError):
            diagnose(self.result, [(Term.W12,)])
