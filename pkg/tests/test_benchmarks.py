"""Desk-scale Monte-Carlo checks of the estimators.

They take from minutes to hours, so they only run when the environment
variable SEMICOX_LONG_TESTS is set (tox -e long)."""
import os
import unittest
import warnings

import numpy as np

from semicox.backfit import FitConfig, fit
from semicox.eta_solver import select_lambda
from semicox.exceptions import ConvergenceWarning
from semicox.kl_select import diagnose
from semicox.simulator import (Procedure, Simulator, calibrate_censoring,
                               gen_data, get_scenario)
from semicox.spline import build_basis, grid_points, select_knots

LONG = bool(os.environ.get('SEMICOX_LONG_TESTS'))


@unittest.skipUnless(LONG, 'set SEMICOX_LONG_TESTS to run the benchmarks')
class TestSelectionBenchmark(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        sc = get_scenario('uni-a')
        cls.tables = Simulator().run_table(
            sc, [Procedure.MB, Procedure.MC], replicates=200, jobs=-1,
            seed=1, progress=False)
        cls.summary = cls.tables.summary.set_index('procedure')

    def test_scad_selection(self):
        mc = self.summary.loc['MC']
        self.assertGreaterEqual(mc.cc, 2.95)
        self.assertLessEqual(mc.under, 0.02)
        self.assertAlmostEqual(mc.correct, 0.476, delta=0.10)
        self.assertAlmostEqual(mc.ic, 0.825, delta=0.30)

    def test_standard_errors(self):
        se = self.tables.se[self.tables.se.procedure == 'MC']
        self.assertEqual(len(se), 3)
        for row in se.itertuples():
            self.assertLess(abs(row.sd_m - row.sd) / row.sd, 0.25)

    def test_eta_band(self):
        eta = self.tables.eta[self.tables.eta.procedure == 'MB']
        inner = eta[(eta.w >= 0.05) & (eta.w <= 0.95)]
        self.assertLess((inner['mean'] - inner.truth).abs().max(), 0.25)
        coverage = inner.coverage.mean()
        self.assertGreaterEqual(coverage, 0.90)
        self.assertLessEqual(coverage, 0.99)


@unittest.skipUnless(LONG, 'set SEMICOX_LONG_TESTS to run the benchmarks')
class TestModelErrorBenchmark(unittest.TestCase):
    def test_rme_ordering(self):
        sc = get_scenario('uni-a', n=500)
        tables = Simulator().run_table(sc, [Procedure.MA, Procedure.MC],
                                       replicates=100, jobs=-1, seed=2,
                                       progress=False)
        rme = tables.summary.set_index('procedure').median_rme
        self.assertLess(rme['MA'], rme['MC'])
        self.assertLess(rme['MA'], 0.15)
        self.assertAlmostEqual(rme['MC'], 0.396, delta=0.15)


@unittest.skipUnless(LONG, 'set SEMICOX_LONG_TESTS to run the benchmarks')
class TestStructureBenchmark(unittest.TestCase):
    def run_scenario(self, name):
        tables = Simulator().run_table(get_scenario(name), [Procedure.MC],
                                       replicates=200, jobs=-1, seed=3,
                                       progress=False)
        return tables.selection.set_index('procedure').loc['MC']

    def test_univariate_truth(self):
        self.assertAlmostEqual(self.run_scenario('null-w2-a').correct, 0.964,
                               delta=0.05)

    def test_bivariate_truth(self):
        self.assertAlmostEqual(self.run_scenario('mix-ab').correct, 0.914,
                               delta=0.08)


@unittest.skipUnless(LONG, 'set SEMICOX_LONG_TESTS to run the benchmarks')
class TestProperties(unittest.TestCase):
    def test_pythagorean_decomposition(self):
        sc = get_scenario('mix-ab')
        rate = calibrate_censoring(sc)
        candidates = sc.candidates + ((),)
        for seed in range(50):
            ds = gen_data(sc, rate, np.random.default_rng(seed))
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', ConvergenceWarning)
                result = fit(ds, FitConfig(structure=sc.fit_structure))
                reports = diagnose(result, candidates)
            for rep in reports:
                self.assertLess(rep.pythagorean_defect, 1e-6)

    def test_eta_error_decreases_with_n(self):
        grid = grid_points(1)
        errors = {}
        for n in (150, 500):
            sc = get_scenario('uni-a', n=n)
            rate = calibrate_censoring(sc)
            truth = sc.eta0(grid)
            errors[n] = []
            for seed in range(100):
                ds = gen_data(sc, rate, np.random.default_rng(seed))
                basis, design = build_basis(ds, select_knots(ds, seed))
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', ConvergenceWarning)
                    _, eta_fit = select_lambda(ds, basis, sc.beta0,
                                               design=design)
                diff = eta_fit.predict(grid) - truth
                errors[n].append(np.sqrt(np.mean(diff ** 2)))
        self.assertLess(np.median(errors[500]), np.median(errors[150]))
