"Test the backfitting algorithm"
import unittest
import warnings

import numpy as np

from semicox.backfit import FitConfig, TraceEntry, fit, initial_beta
from semicox.beta_solver import PenaltyKind, PenaltySpec, profile_maximizer
from semicox.core import SurvivalDataset
from semicox.exceptions import ConvergenceWarning
from semicox.monitor import EvType, Monitor
from semicox.partial_lik import LikelihoodContext
from semicox.simulator import calibrate_censoring, gen_data, get_scenario
from semicox.spline import Term


def simulated(n=200, seed=0, scenario='uni-a'):
    sc = get_scenario(scenario, n=n)
    rate = calibrate_censoring(sc, size=20_000)
    return gen_data(sc, rate, np.random.default_rng(seed))


def event_types(monitor):
    return [int(ev.split(',')[1]) for ev in monitor.get_events()]


class TestFitConfig(unittest.TestCase):
    def test_defaults(self):
        config = FitConfig()
        self.assertEqual(config.penalty.kind, PenaltyKind.SCAD)
        self.assertIsNone(config.structure)
        self.assertIsNone(config.lam)

    def test_validation(self):
        with self.assertRaises(ValueError):
            FitConfig(max_iter=0)
        with self.assertRaises(ValueError):
            FitConfig(tol=0)
        with self.assertRaises(ValueError):
            FitConfig(lam=-1.0)


class TestInitialBeta(unittest.TestCase):
    def test_profile_maximizer_with_zero_eta(self):
        ds = simulated(seed=1)
        ctx = LikelihoodContext.from_dataset(ds)
        expected = profile_maximizer(ctx, np.zeros(ds.n)).beta
        np.testing.assert_allclose(initial_beta(ds), expected)


class TestFit(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ds = simulated()
        cls.monitor = Monitor()
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            cls.result = fit(cls.ds, FitConfig(seed=1), monitor=cls.monitor,
                             label='t')

    def test_shapes(self):
        self.assertEqual(self.result.beta.shape, (8,))
        self.assertEqual(self.result.eta_fit.fitted.shape, (self.ds.n,))
        self.assertEqual(self.result.structure, (Term.W1,))

    def test_true_support_is_kept(self):
        for j in (0, 3, 6):
            self.assertNotEqual(self.result.beta[j], 0.0)

    def test_trace(self):
        trace = self.result.trace
        self.assertEqual(len(trace), self.result.iterations)
        self.assertIsInstance(trace[0], TraceEntry)
        # lambda is selected once and then kept
        self.assertEqual(len({entry.lam for entry in trace}), 1)
        frame = self.result.trace_frame()
        self.assertEqual(list(frame.columns), list(TraceEntry._fields))
        if self.result.converged:
            last = trace[-1]
            self.assertLess(max(last.beta_change, last.eta_change),
                            FitConfig().tol)

    def test_properties(self):
        self.assertEqual(self.result.lam, self.result.eta_fit.lam)
        self.assertEqual(self.result.theta, self.result.trace[-1].theta)
        self.assertIs(self.result.basis, self.result.eta_fit.basis)

    def test_monitor_events(self):
        types = event_types(self.monitor)
        self.assertEqual(types[0], EvType.FIT_START.value)
        self.assertIn(EvType.LAMBDA_SELECTED.value, types)
        self.assertIn(EvType.THETA_SELECTED.value, types)
        self.assertIn(EvType.BACKFIT_END.value, types)
        self.assertEqual(self.monitor.get_stats().fits, 1)

    def test_deterministic(self):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            again = fit(self.ds, FitConfig(seed=1))
        np.testing.assert_array_equal(again.beta, self.result.beta)
        np.testing.assert_array_equal(again.eta_fit.fitted,
                                      self.result.eta_fit.fitted)

    def test_permutation_invariance(self):
        order = np.random.default_rng(7).permutation(self.ds.n)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            perm = fit(self.ds.permuted(order), FitConfig(seed=1))
        np.testing.assert_allclose(perm.beta, self.result.beta, atol=1e-6)
        np.testing.assert_allclose(perm.eta_fit.fitted,
                                   self.result.eta_fit.fitted[order],
                                   atol=1e-6)


class TestFitVariants(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ds = simulated(n=150, seed=2)

    def test_fixed_lambda(self):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            result = fit(self.ds, FitConfig(lam=1e-3))
        self.assertEqual(result.lam, 1e-3)

    def test_adaptive_lasso(self):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            result = fit(self.ds,
                         FitConfig(penalty=PenaltySpec(PenaltyKind.ALASSO)))
        self.assertEqual(result.beta_fit.spec.kind, PenaltyKind.ALASSO)
        self.assertGreater(result.beta_fit.n_nonzero, 0)

    def test_iteration_limit(self):
        with self.assertWarns(ConvergenceWarning):
            result = fit(self.ds, FitConfig(lam=1e-3, max_iter=1))
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 1)

    def test_without_nonparametric_part(self):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            result = fit(self.ds, FitConfig(structure=()))
        self.assertEqual(result.basis.dim, 0)
        np.testing.assert_array_equal(result.eta_fit.fitted, 0.0)
        self.assertEqual(result.beta.shape, (8,))

    def test_without_parametric_part(self):
        ds = SurvivalDataset.from_arrays(self.ds.times,
                                         self.ds.events.astype(int), None,
                                         self.ds.w, rescale=False)
        result = fit(ds, FitConfig(lam=1e-3))
        self.assertEqual(result.beta.shape, (0,))
        self.assertEqual(result.iterations, 1)
        self.assertTrue(result.converged)


class TestBivariate(unittest.TestCase):
    def test_full_structure(self):
        ds = simulated(n=150, seed=3, scenario='mix-ab')
        structure = (Term.W1, Term.W2, Term.W12)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            result = fit(ds, FitConfig(structure=structure, max_iter=5))
        self.assertEqual(result.structure, structure)
        self.assertEqual(result.basis.null_dim, 3)
        self.assertTrue(np.all(np.isfinite(result.eta_fit.fitted)))
