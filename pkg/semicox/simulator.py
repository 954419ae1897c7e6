'''This module defines class Simulator, which runs the Monte-Carlo benchmarks
of semicox, together with the scenarios, the data generator and the metrics
computed for each replicate.
'''
import re
import time
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import (Callable, Dict, List, NamedTuple, Optional, Sequence,
                    Tuple)

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import brentq
from scipy.stats import median_abs_deviation

from .backfit import FitConfig, FitResult, fit
from .beta_solver import PenaltyKind, PenaltySpec, profile_maximizer
from .core import SurvivalDataset
from .eta_solver import eta_band
from .exceptions import (ConvergenceError, ConvergenceWarning, DataError,
                         SemicoxError)
from .inference import sandwich_cov
from .kl_select import diagnose, select_structure
from .monitor import Monitor, BenchmarkStats
from .partial_lik import LikelihoodContext
from .spline import Structure, Term, format_structure, grid_points

BETA0 = (0.8, 0, 0, 1, 0, 0, 0.6, 0)
CALIBRATION_SIZE = 100_000
MODEL_ERROR_SIZE = 100_000
CHUNK = 10_000


def eta0a(w):
    return 1.5 * np.sin(2 * np.pi * w - np.pi / 2)


def eta0b(w):
    return 4 * (w - 0.3) ** 2 + 4.7 * np.exp(-w) - 3.4643


ETA_FUNCTIONS: Dict[str, Callable] = {'eta0a': eta0a, 'eta0b': eta0b}

_TERM_RE = re.compile(r'^(?:([-+]?[0-9]*\.?[0-9]+(?:e[-+]?[0-9]+)?)\*)?'
                      r'(eta0a|eta0b)\((w1|w2)\)$')


@dataclass(frozen=True)
class EtaTruth():
    '''True nonparametric function as a weighted sum of eta0a/eta0b terms.

    Args:
        terms: (weight, function name, covariate index) triples
    '''
    terms: Tuple[Tuple[float, str, int], ...]

    @classmethod
    def parse(cls, text: str) -> 'EtaTruth':
        '''Parses expressions such as "eta0a(w1)" or
        "0.7*eta0a(w1)+0.3*eta0b(w2)". "0" is the zero function.'''
        text = text.replace(' ', '').lower()
        if text in ('0', ''):
            return cls(terms=())
        terms = []
        for token in text.split('+'):
            match = _TERM_RE.match(token)
            if not match:
                raise DataError(f'invalid eta0 term "{token}"')
            weight = float(match.group(1)) if match.group(1) else 1.0
            terms.append((weight, match.group(2), int(match.group(3)[1]) - 1))
        return cls(terms=tuple(terms))

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        values = np.zeros(w.shape[0])
        for weight, name, j in self.terms:
            values += weight * ETA_FUNCTIONS[name](w[:, j])
        return values

    @property
    def structure(self) -> Structure:
        used = {j for _, _, j in self.terms}
        return tuple(t for j, t in enumerate((Term.W1, Term.W2)) if j in used)

    @property
    def q(self) -> int:
        return max((j + 1 for _, _, j in self.terms), default=1)

    def __str__(self):
        if not self.terms:
            return '0'
        return '+'.join(f'{weight:g}*{name}(w{j + 1})'
                        for weight, name, j in self.terms)


@dataclass(frozen=True)
class Scenario():
    '''Simulation scenario.

    Args:
        name: identifier
        n: sample size
        eta0: true nonparametric function
        q: number of nonparametric covariates
        censor_target: expected censoring rate
        beta0: true coefficients
        rho: correlation of U, Cov(U_j, U_k) = rho^|j - k|
        fit_structure: ANOVA structure of the fitted models. None means all
            the main effects
        candidates: reduced structures checked with the KL diagnostic
    '''
    name: str
    n: int
    eta0: EtaTruth
    q: int = 1
    censor_target: float = 0.23
    beta0: Tuple[float, ...] = BETA0
    rho: float = 0.5
    fit_structure: Optional[Structure] = None
    candidates: Tuple[Structure, ...] = ()

    def __post_init__(self):
        if self.n < 2:
            raise ValueError('n must be at least 2')
        if not 0 <= self.censor_target < 1:
            raise ValueError('censor_target must be in [0, 1)')
        if self.eta0.q > self.q:
            raise ValueError('eta0 uses more covariates than q')

    @property
    def d(self) -> int:
        return len(self.beta0)

    @property
    def support(self) -> np.ndarray:
        '''Indices of the nonzero true coefficients'''
        return np.flatnonzero(np.asarray(self.beta0) != 0)

    @property
    def covariance(self) -> np.ndarray:
        idx = np.arange(self.d)
        return self.rho ** np.abs(idx[:, np.newaxis] - idx[np.newaxis, :])


_ADDITIVE = (Term.W1, Term.W2)
_FULL = (Term.W1, Term.W2, Term.W12)

SCENARIOS: Dict[str, Scenario] = {
    'uni-a': Scenario('uni-a', 150, EtaTruth.parse('eta0a(w1)'),
                      censor_target=0.23),
    'uni-b': Scenario('uni-b', 150, EtaTruth.parse('eta0b(w1)'),
                      censor_target=0.40),
    # w2 has no effect
    'null-w2-a': Scenario('null-w2-a', 150, EtaTruth.parse('eta0a(w1)'),
                          q=2, censor_target=0.23, fit_structure=_ADDITIVE,
                          candidates=((Term.W1,), (Term.W2,))),
    'null-w2-b': Scenario('null-w2-b', 150, EtaTruth.parse('eta0b(w1)'),
                          q=2, censor_target=0.40, fit_structure=_ADDITIVE,
                          candidates=((Term.W1,), (Term.W2,))),
    'mix-ab': Scenario('mix-ab', 150,
                       EtaTruth.parse('0.7*eta0a(w1)+0.3*eta0b(w2)'), q=2,
                       censor_target=0.25, fit_structure=_FULL,
                       candidates=(_ADDITIVE, (Term.W1,), (Term.W2,))),
    'sum-ab': Scenario('sum-ab', 150,
                       EtaTruth.parse('eta0a(w1)+eta0b(w2)'), q=2,
                       censor_target=0.39, fit_structure=_FULL,
                       candidates=(_ADDITIVE, (Term.W1,), (Term.W2,))),
}

# names of the published benchmark runs
SCENARIO_ALIASES: Dict[str, str] = {
    'table1-a': 'uni-a',
    'table1-b': 'uni-b',
    'table2': 'uni-a',
    'table3-1': 'null-w2-a',
    'table3-2': 'null-w2-b',
    'table3-3': 'mix-ab',
    'table3-4': 'sum-ab',
}


def scenario_names() -> List[str]:
    return list(SCENARIOS) + list(SCENARIO_ALIASES)


def get_scenario(name: str, n: Optional[int] = None,
                 eta0: Optional[str] = None,
                 censoring: Optional[float] = None) -> Scenario:
    '''Returns a predefined scenario, optionally with another sample size,
    true eta or censoring rate'''
    name = SCENARIO_ALIASES.get(name, name)
    if name not in SCENARIOS:
        raise DataError(f'unknown scenario "{name}". Valid scenarios: '
                        f'{", ".join(scenario_names())}')
    sc = SCENARIOS[name]
    changes = {}
    if n is not None:
        changes['n'] = n
    if eta0 is not None:
        changes['eta0'] = EtaTruth.parse(eta0)
    if censoring is not None:
        changes['censor_target'] = censoring
    return replace(sc, **changes) if changes else sc


class CovariateSample(NamedTuple):
    u: np.ndarray
    w: np.ndarray


def sample_covariates(sc: Scenario, rng: np.random.Generator,
                      size: int) -> CovariateSample:
    u = rng.multivariate_normal(np.zeros(sc.d), sc.covariance, size=size)
    w = rng.uniform(size=(size, sc.q))
    return CovariateSample(u=u, w=w)


def _hazard(sc: Scenario, sample: CovariateSample) -> np.ndarray:
    return np.exp(sample.u @ np.asarray(sc.beta0) + sc.eta0(sample.w))


def calibrate_censoring(sc: Scenario, target: Optional[float] = None,
                        seed: int = 0,
                        size: int = CALIBRATION_SIZE) -> float:
    '''Rate of the exponential censoring distribution that gives the target
    censoring rate. The censoring probability for rate c is estimated on a
    fixed sample of covariates as the mean of c / (c + hazard), and brentq
    solves for c.'''
    target = sc.censor_target if target is None else target
    if not 0 <= target < 1:
        raise ValueError(f'target must be in [0, 1), got {target}')
    if target == 0:
        return 0.0

    hazard = _hazard(sc, sample_covariates(sc, np.random.default_rng(seed),
                                           size))

    def excess(rate):
        return float(np.mean(rate / (rate + hazard))) - target

    high = 1.0
    for _ in range(60):
        if excess(high) > 0:
            break
        high *= 2
    else:
        raise ConvergenceError(f'cannot bracket the censoring rate for '
                               f'target {target}')
    return brentq(excess, 0.0, high, xtol=1e-12)


def gen_data(sc: Scenario, rate: float,
             rng: np.random.Generator) -> SurvivalDataset:
    '''Draws a dataset from the exponential hazard model
    h(t | U, W) = exp(U^T beta0 + eta0(W)) with exponential censoring'''
    sample = sample_covariates(sc, rng, sc.n)
    failure = rng.standard_exponential(sc.n) / _hazard(sc, sample)
    if rate > 0:
        censor = rng.standard_exponential(sc.n) / rate
    else:
        censor = np.full(sc.n, np.inf)
    times = np.minimum(failure, censor)
    events = failure <= censor
    return SurvivalDataset.from_arrays(times, events.astype(int), sample.u,
                                       sample.w, rescale=False)


def model_error(beta_hat, eta_hat: Callable, sc: Scenario,
                sample: Optional[CovariateSample] = None,
                mc_size: int = MODEL_ERROR_SIZE, seed: int = 0) -> float:
    '''Monte-Carlo estimate of
    E[(exp(-U^T beta_hat - eta_hat(W)) - exp(-U^T beta0 - eta0(W)))^2]'''
    if sample is None:
        if mc_size < 10_000:
            raise ValueError('mc_size must be at least 10^4')
        sample = sample_covariates(sc, np.random.default_rng(seed), mc_size)
    beta_hat = np.asarray(beta_hat, dtype=float)
    total = 0.0
    for start in range(0, sample.u.shape[0], CHUNK):
        u = sample.u[start:start + CHUNK]
        w = sample.w[start:start + CHUNK]
        fitted = np.exp(-u @ beta_hat - eta_hat(w))
        true = np.exp(-u @ np.asarray(sc.beta0) - sc.eta0(w))
        total += float(np.sum((fitted - true) ** 2))
    return total / sample.u.shape[0]


def relative_model_error(me_0: float, me: float) -> float:
    '''ME(M0) / ME(M). inf when only ME(M) is zero, nan when both are'''
    with np.errstate(divide='ignore', invalid='ignore'):
        return float(np.divide(me_0, me))


class FitClass(Enum):
    UNDER = 'under'
    CORRECT = 'correct'
    OVER = 'over'


class Selection(NamedTuple):
    cc: int
    ic: int
    fit_class: FitClass


def classify_fit(beta_hat, beta0) -> Selection:
    '''Counts of correctly (CC) and incorrectly (IC) selected nonzero
    coefficients, and the fit class'''
    selected = np.asarray(beta_hat) != 0
    true = np.asarray(beta0) != 0
    if selected.shape != true.shape:
        raise ValueError('beta_hat and beta0 must have the same length')
    cc = int(np.sum(selected & true))
    ic = int(np.sum(selected & ~true))
    if cc < true.sum():
        fit_class = FitClass.UNDER
    elif ic == 0:
        fit_class = FitClass.CORRECT
    else:
        fit_class = FitClass.OVER
    return Selection(cc=cc, ic=ic, fit_class=fit_class)


def classify_structure(selected: Structure, true: Structure) -> FitClass:
    '''Fit class of a selected ANOVA structure'''
    selected, true = set(selected), set(true)
    if not true <= selected:
        return FitClass.UNDER
    return FitClass.CORRECT if selected == true else FitClass.OVER


class Procedure(Enum):
    '''Estimation procedures compared in the benchmark'''
    M0 = 'M0'  # true support and true eta0, only beta estimated
    MA = 'MA'  # true support, eta0 taken as linear in W
    MB = 'MB'  # true support, eta0 estimated without penalty on beta
    MC = 'MC'  # full model with SCAD
    MD = 'MD'  # full model with adaptive LASSO


SELECTING = (Procedure.MC, Procedure.MD)
ETA_ESTIMATING = (Procedure.MB, Procedure.MC, Procedure.MD)


@dataclass
class ReplicateMetrics():
    '''Metrics of a procedure on one replicate'''
    procedure: Procedure
    replicate: int
    me: float
    rme: float = float('nan')
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    se: Optional[np.ndarray] = None
    selection: Optional[Selection] = None
    structure: Optional[Structure] = None
    structure_class: Optional[FitClass] = None
    eta_grid: Optional[pd.DataFrame] = None
    iterations: int = 0
    converged: bool = True


class ReplicateOutcome(NamedTuple):
    replicate: int
    metrics: List[ReplicateMetrics]
    error: Optional[str]
    elapsed: float


def _oracle_fit(ds: SurvivalDataset, sc: Scenario,
                offset: np.ndarray) -> np.ndarray:
    '''Unpenalized fit on the true support with a fixed eta'''
    oracle = ds.select_u(sc.support)
    ctx = LikelihoodContext.from_dataset(oracle)
    prof = profile_maximizer(ctx, offset)
    if not prof.converged:
        raise ConvergenceError('oracle Cox fit did not converge')
    beta = np.zeros(sc.d)
    beta[sc.support] = prof.beta
    return beta


def _linear_eta_fit(ds: SurvivalDataset, sc: Scenario):
    '''Oracle support plus eta taken as beta_W (W - 1/2)'''
    u = np.hstack([ds.u[:, sc.support], ds.w - 0.5])
    linear = SurvivalDataset.from_arrays(ds.times, ds.events.astype(int), u,
                                         ds.w, rescale=False)
    ctx = LikelihoodContext.from_dataset(linear)
    prof = profile_maximizer(ctx, np.zeros(ds.n))
    if not prof.converged:
        raise ConvergenceError('linear-eta Cox fit did not converge')
    beta = np.zeros(sc.d)
    beta[sc.support] = prof.beta[:sc.support.size]
    beta_w = prof.beta[sc.support.size:]

    def eta_hat(w):
        return (np.asarray(w) - 0.5) @ beta_w
    return beta, eta_hat


def _procedure_config(procedure: Procedure, sc: Scenario,
                      knot_seed: int) -> FitConfig:
    if procedure is Procedure.MB:
        return FitConfig(penalty=PenaltySpec(PenaltyKind.SCAD),
                         theta_grid=(0.0,), structure=sc.eta0.structure,
                         seed=knot_seed)
    kind = PenaltyKind.SCAD if procedure is Procedure.MC else \
        PenaltyKind.ALASSO
    return FitConfig(penalty=PenaltySpec(kind), structure=sc.fit_structure,
                     seed=knot_seed)


def run_replicate(sc: Scenario, procedures: Sequence[Procedure], rate: float,
                  seed_seq: np.random.SeedSequence, replicate: int,
                  mc_size: int = 10_000, level: float = 0.95
                  ) -> ReplicateOutcome:
    '''Generates one dataset and evaluates every procedure on it. Solver
    failures are returned as an error instead of raising, so that the
    replicate can be excluded.'''
    start = time.time()
    data_seed, mc_seed, knot_seed = seed_seq.spawn(3)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            ds = gen_data(sc, rate, np.random.default_rng(data_seed))
            sample = sample_covariates(sc, np.random.default_rng(mc_seed),
                                       mc_size)
            fit_seed = int(knot_seed.generate_state(1)[0])

            beta_0 = _oracle_fit(ds, sc, sc.eta0(ds.w))
            me_0 = model_error(beta_0, sc.eta0, sc, sample)
            metrics = [ReplicateMetrics(Procedure.M0, replicate, me_0, 1.0,
                                        beta_0)]

            for procedure in procedures:
                if procedure is Procedure.M0:
                    continue
                if procedure is Procedure.MA:
                    beta, eta_hat = _linear_eta_fit(ds, sc)
                    me = model_error(beta, eta_hat, sc, sample)
                    rme = relative_model_error(me_0, me)
                    metrics.append(ReplicateMetrics(procedure, replicate, me,
                                                    rme, beta))
                    continue
                metrics.append(_fit_metrics(procedure, sc, ds, sample,
                                            fit_seed, me_0, replicate, level))
    except (SemicoxError, np.linalg.LinAlgError) as err:
        return ReplicateOutcome(replicate, [], str(err), time.time() - start)
    return ReplicateOutcome(replicate, metrics, None, time.time() - start)


def _fit_metrics(procedure: Procedure, sc: Scenario, ds: SurvivalDataset,
                 sample: CovariateSample, knot_seed: int, me_0: float,
                 replicate: int, level: float) -> ReplicateMetrics:
    config = _procedure_config(procedure, sc, knot_seed)
    if procedure is Procedure.MB:
        result = fit(ds.select_u(sc.support), config)
        beta = np.zeros(sc.d)
        beta[sc.support] = result.beta
    else:
        result = fit(ds, config)
        beta = result.beta
    me = model_error(beta, result.eta_fit.predict, sc, sample)
    metrics = ReplicateMetrics(procedure, replicate, me,
                               relative_model_error(me_0, me), beta,
                               iterations=result.iterations,
                               converged=result.converged)

    if procedure in SELECTING:
        metrics.selection = classify_fit(beta, sc.beta0)
        metrics.se = sandwich_cov(result).standard_errors
        if sc.candidates:
            structure = _select(result, sc)
            metrics.structure = structure
            metrics.structure_class = classify_structure(
                structure, sc.eta0.structure)
    if sc.q == 1 and result.eta_fit.basis.dim:
        metrics.eta_grid = eta_band(result.eta_fit, grid_points(1), level)
    return metrics


def _select(result: FitResult, sc: Scenario) -> Structure:
    reports = diagnose(result, sc.candidates)
    return select_structure(reports, result.structure)


class TableResult(NamedTuple):
    '''DataFrames produced by a benchmark run'''
    summary: pd.DataFrame
    replicates: pd.DataFrame
    eta: pd.DataFrame
    se: pd.DataFrame
    selection: pd.DataFrame


def _nan_if_empty(values, func):
    values = [v for v in values if v is not None and not np.isnan(v)]
    return float(func(values)) if values else float('nan')


def summarize(sc: Scenario, procedures: Sequence[Procedure],
              outcomes: Sequence[ReplicateOutcome]) -> TableResult:
    '''Reduces the replicate outcomes, in replicate order, to the tables'''
    ok = [o for o in sorted(outcomes, key=lambda o: o.replicate)
          if o.error is None]
    failed = sum(1 for o in outcomes if o.error is not None)
    by_proc: Dict[Procedure, List[ReplicateMetrics]] = {
        p: [m for o in ok for m in o.metrics if m.procedure is p]
        for p in [Procedure.M0, *procedures]}

    summary_rows = []
    for proc, metrics in by_proc.items():
        row = {'procedure': proc.value,
               'replicates': len(metrics),
               'failed': failed,
               'median_rme': _nan_if_empty([m.rme for m in metrics],
                                           np.median),
               'median_me': _nan_if_empty([m.me for m in metrics], np.median)}
        if proc in SELECTING:
            sel = [m.selection for m in metrics]
            row.update({
                'cc': _nan_if_empty([s.cc for s in sel], np.mean),
                'ic': _nan_if_empty([s.ic for s in sel], np.mean),
                'under': _proportion([s.fit_class for s in sel],
                                     FitClass.UNDER),
                'correct': _proportion([s.fit_class for s in sel],
                                       FitClass.CORRECT),
                'over': _proportion([s.fit_class for s in sel],
                                    FitClass.OVER),
                'mean_iterations': _nan_if_empty(
                    [m.iterations for m in metrics], np.mean),
                'not_converged': sum(1 for m in metrics if not m.converged)})
        summary_rows.append(row)
    summary = pd.DataFrame(summary_rows)

    return TableResult(summary=summary,
                       replicates=_replicate_table(sc, by_proc, ok),
                       eta=_eta_table(sc, by_proc),
                       se=_se_table(sc, by_proc),
                       selection=_selection_table(sc, by_proc))


def _proportion(values, target) -> float:
    if not values:
        return float('nan')
    return sum(1 for v in values if v is target) / len(values)


def _replicate_table(sc: Scenario, by_proc, ok) -> pd.DataFrame:
    rows = {o.replicate: {'replicate': o.replicate} for o in ok}
    for proc, metrics in by_proc.items():
        tag = proc.value
        for m in metrics:
            row = rows[m.replicate]
            row[f'{tag}_me'] = m.me
            row[f'{tag}_rme'] = m.rme
            for j, b in enumerate(m.beta):
                row[f'{tag}_beta{j + 1}'] = b
            if m.selection is not None:
                row[f'{tag}_cc'] = m.selection.cc
                row[f'{tag}_ic'] = m.selection.ic
                row[f'{tag}_fit'] = m.selection.fit_class.value
            if m.structure is not None:
                row[f'{tag}_structure'] = format_structure(m.structure)
            if proc in (Procedure.MB, *SELECTING):
                row[f'{tag}_iterations'] = m.iterations
    return pd.DataFrame([rows[k] for k in sorted(rows)])


def _eta_table(sc: Scenario, by_proc) -> pd.DataFrame:
    '''Pointwise summaries of the eta estimates on the grid: mean, 2.5% and
    97.5% quantiles, mean band and coverage of eta0'''
    frames = []
    for proc in ETA_ESTIMATING:
        grids = [m.eta_grid for m in by_proc.get(proc, [])
                 if m.eta_grid is not None]
        if not grids:
            continue
        w = grids[0]['w1'].to_numpy()
        estimates = np.vstack([g['estimate'].to_numpy() for g in grids])
        lower = np.vstack([g['lower'].to_numpy() for g in grids])
        upper = np.vstack([g['upper'].to_numpy() for g in grids])
        truth = sc.eta0(w.reshape(-1, 1))
        frames.append(pd.DataFrame({
            'procedure': proc.value,
            'w': w,
            'truth': truth,
            'mean': estimates.mean(axis=0),
            'q025': np.quantile(estimates, 0.025, axis=0),
            'q975': np.quantile(estimates, 0.975, axis=0),
            'ci_lo': lower.mean(axis=0),
            'ci_hi': upper.mean(axis=0),
            'coverage': ((lower <= truth) & (truth <= upper)).mean(axis=0)}))
    columns = ['procedure', 'w', 'truth', 'mean', 'q025', 'q975', 'ci_lo',
               'ci_hi', 'coverage']
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]


def _se_table(sc: Scenario, by_proc) -> pd.DataFrame:
    '''Empirical SD of the nonzero estimates (MAD / 0.6745) against the
    median and the MAD of the estimated standard errors'''
    rows = []
    for proc in SELECTING:
        metrics = by_proc.get(proc, [])
        if not metrics:
            continue
        for j in sc.support:
            estimates = np.array([m.beta[j] for m in metrics])
            nonzero = estimates != 0
            ses = np.array([m.se[j] for m in metrics])[nonzero]
            ses = ses[~np.isnan(ses)]
            rows.append({
                'procedure': proc.value,
                'coefficient': f'beta{j + 1}',
                'true': sc.beta0[j],
                'mean_estimate': float(estimates[nonzero].mean())
                if nonzero.any() else float('nan'),
                'sd': float(median_abs_deviation(estimates[nonzero],
                                                 scale='normal'))
                if nonzero.any() else float('nan'),
                'sd_m': float(np.median(ses)) if ses.size else float('nan'),
                'sd_mad': float(median_abs_deviation(ses, scale='normal'))
                if ses.size else float('nan')})
    return pd.DataFrame(rows, columns=['procedure', 'coefficient', 'true',
                                       'mean_estimate', 'sd', 'sd_m',
                                       'sd_mad'])


def _selection_table(sc: Scenario, by_proc) -> pd.DataFrame:
    '''Proportion of replicates whose selected structure contains each term,
    and proportions of under, correct and over fits'''
    rows = []
    if not sc.candidates:
        return pd.DataFrame(rows)
    for proc in SELECTING:
        metrics = [m for m in by_proc.get(proc, []) if m.structure is not None]
        if not metrics:
            continue
        row = {'procedure': proc.value, 'replicates': len(metrics)}
        for term in (Term.W1, Term.W2, Term.W12):
            row[term.value] = float(np.mean([term in m.structure
                                             for m in metrics]))
        for fit_class in FitClass:
            row[fit_class.value] = _proportion(
                [m.structure_class for m in metrics], fit_class)
        rows.append(row)
    return pd.DataFrame(rows)


DEFAULT_PROCEDURES = (Procedure.MA, Procedure.MB, Procedure.MC, Procedure.MD)


class Simulator():
    '''Main class to run the Monte-Carlo benchmarks'''
    def __init__(self):
        self.monitor = Monitor()
        self.censoring_rate: float = float('nan')

    def run_table(self, sc: Scenario,
                  procedures: Sequence[Procedure] = DEFAULT_PROCEDURES,
                  replicates: int = 100, jobs: int = 1, seed: int = 0,
                  mc_size: int = 10_000, level: float = 0.95,
                  progress: bool = True) -> TableResult:
        """Runs the replicates of a scenario and summarizes them

        Args:
            sc (Scenario): the scenario
            procedures (Sequence[Procedure]): procedures to compare with M0
            replicates (int): number of replicates
            jobs (int): number of parallel workers (-1 for all cores)
            seed (int): master seed. Each replicate gets an independent
                child seed, so results do not depend on jobs
            mc_size (int): covariate sample size for the model errors
            level (float): level of the pointwise eta bands
            progress (bool): print progress lines

        Returns:
            TableResult: summary, per-replicate, eta, SE and structure
                selection tables
        """
        if replicates < 1:
            raise ValueError('replicates must be at least 1')
        procedures = [Procedure(p) for p in procedures]

        self.monitor.start_run()
        rate = calibrate_censoring(sc, seed=seed)
        children = np.random.SeedSequence(seed).spawn(replicates)

        outcomes: List[ReplicateOutcome] = []
        runner = Parallel(n_jobs=jobs, return_as='generator')
        tasks = (delayed(run_replicate)(sc, procedures, rate, child, rep,
                                        mc_size, level)
                 for rep, child in enumerate(children))
        for done, outcome in enumerate(runner(tasks), start=1):
            outcomes.append(outcome)
            if outcome.error is None:
                self.monitor.add_replicate_done(outcome.replicate,
                                                outcome.elapsed)
                for m in outcome.metrics:
                    if m.procedure in ETA_ESTIMATING:
                        label = f'{m.procedure.value}-{outcome.replicate}'
                        self.monitor.add_fit_start(label)
                        self.monitor.add_fit_end(label, m.iterations,
                                                 m.converged)
            else:
                self.monitor.add_replicate_failed(outcome.replicate,
                                                  outcome.error)
            if progress:
                self.monitor.print_progress(done, replicates)
        self.monitor.end_run()

        self.censoring_rate = rate
        return summarize(sc, procedures, outcomes)

    def get_events(self) -> List[str]:
        '''Returns the list of events of the runs'''
        return self.monitor.get_events()

    def get_stats(self) -> BenchmarkStats:
        return self.monitor.get_stats()
