# coding: utf-8
"""Backfitting of the partly linear Cox model.

Starting from the unpenalized Cox estimate with eta = 0, the fit alternates
the penalized spline fit of eta for fixed beta and the one-step penalized
update of beta for fixed eta, until neither changes."""

import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from .beta_solver import (BetaFit, ExpansionMode, PenaltySpec,
                          aic_select_theta, one_step_update,
                          profile_maximizer)
from .core import SurvivalDataset
from .eta_solver import EtaFit, fit_eta, select_lambda
from .exceptions import ConvergenceError, ConvergenceWarning, SemicoxError
from .monitor import EvType, Monitor
from .partial_lik import LikelihoodContext
from .spline import (SplineBasis, Structure, Term, build_basis,
                     default_structure, format_structure, select_knots,
                     validate_structure)

MAX_ITER = 20
TOL = 1e-4
RIDGE_FALLBACK = (1e-3, 1e-1)


@dataclass(frozen=True)
class FitConfig():
    '''Configuration of a fit.

    Args:
        penalty: penalty on beta (its thetas are selected by AIC)
        structure: ANOVA terms of eta. None means all the main effects and ()
            a model without nonparametric part
        lam: fixed smoothing parameter. If None, it is selected by the RKL
            score at the first iteration
        lambda_grid: candidate smoothing parameters
        theta_grid: candidate penalty parameters
        max_iter: maximum number of backfitting iterations
        tol: tolerance on the sup-norm changes of beta and eta
        expansion: expansion point of the one-step update
        seed: seed for the knot selection
    '''
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    structure: Optional[Tuple[Term, ...]] = None
    lam: Optional[float] = None
    lambda_grid: Optional[Tuple[float, ...]] = None
    theta_grid: Optional[Tuple[float, ...]] = None
    max_iter: int = MAX_ITER
    tol: float = TOL
    expansion: ExpansionMode = ExpansionMode.PROFILE
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError('max_iter must be at least 1')
        if self.tol <= 0:
            raise ValueError('tol must be positive')
        if self.lam is not None and self.lam <= 0:
            raise ValueError('lambda must be positive')


class TraceEntry(NamedTuple):
    iteration: int
    beta_change: float
    eta_change: float
    objective: float
    theta: float
    lam: float


@dataclass(frozen=True, eq=False)
class FitResult():
    '''Final estimates of a backfitting run.

    Args:
        dataset: the fitted data
        beta_fit: last penalized beta update
        eta_fit: last eta fit
        iterations: backfitting iterations performed
        converged: whether the changes fell below the tolerance
        trace: one entry per iteration
        initial_beta: starting value of beta
        config: the configuration used
    '''
    dataset: SurvivalDataset
    beta_fit: BetaFit
    eta_fit: EtaFit
    iterations: int
    converged: bool
    trace: List[TraceEntry]
    initial_beta: np.ndarray
    config: FitConfig

    @property
    def beta(self) -> np.ndarray:
        return self.beta_fit.beta

    @property
    def basis(self) -> SplineBasis:
        return self.eta_fit.basis

    @property
    def structure(self) -> Structure:
        return self.eta_fit.basis.structure

    @property
    def lam(self) -> float:
        return self.eta_fit.lam

    @property
    def theta(self) -> float:
        return self.trace[-1].theta if self.trace else float('nan')

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace, columns=TraceEntry._fields)


def initial_beta(data) -> np.ndarray:
    '''Unpenalized Cox estimate of beta with eta = 0. If Newton does not
    converge (for instance, under separation), a ridge-stabilized estimate is
    returned with a ConvergenceWarning.'''
    ctx = data if isinstance(data, LikelihoodContext) else \
        LikelihoodContext.from_dataset(data)
    ds = ctx.dataset
    zeros = np.zeros(ds.n)
    prof = profile_maximizer(ctx, zeros)
    if prof.converged:
        return prof.beta

    for factor in RIDGE_FALLBACK:
        ridge = factor * ds.n_failures
        prof = profile_maximizer(ctx, zeros, ridge=ridge)
        if prof.converged:
            warnings.warn(f'the initial Cox fit diverged; using a ridge '
                          f'estimate (ridge={ridge:.3g})', ConvergenceWarning)
            return prof.beta
    raise ConvergenceError('the initial Cox fit did not converge')


def _objective(beta_fit: BetaFit, eta_fit: EtaFit, n: int) -> float:
    roughness = eta_fit.basis.roughness(eta_fit.coef) \
        if eta_fit.basis.dim else 0.0
    return -beta_fit.loglik + n * eta_fit.lam * roughness


def fit(ds: SurvivalDataset, config: Optional[FitConfig] = None,
        monitor: Optional[Monitor] = None, label: str = 'fit') -> FitResult:
    '''Fits the partly linear Cox model by backfitting.

    lambda is selected at the first iteration and then held fixed, with warm
    starts; theta is selected by AIC at every iteration. The loop stops when
    the sup-norm changes of beta and of the fitted eta are both below
    config.tol (from the second iteration on), or after config.max_iter
    iterations with a ConvergenceWarning.'''
    if config is None:
        config = FitConfig()
    ctx = LikelihoodContext.from_dataset(ds)
    structure = default_structure(ds.q) if config.structure is None else \
        validate_structure(config.structure, ds.q)
    knots = select_knots(ds, config.seed)
    basis, design = build_basis(ds, knots, structure)

    if monitor:
        monitor.add_fit_start(f'{label} {format_structure(structure)} '
                              f'{config.penalty.kind.value}')

    def eta_step(beta, lam, warm):
        if basis.dim == 0:
            return fit_eta(ctx, basis, beta, 1.0, design=design)
        if lam is None:
            lam, eta_fit = select_lambda(ctx, basis, beta, config.lambda_grid,
                                         design)
            if monitor:
                monitor.record(EvType.LAMBDA_SELECTED, label, lam)
            return eta_fit
        return fit_eta(ctx, basis, beta, lam, warm_start=warm, design=design)

    if ds.d == 0:
        try:
            eta_fit = eta_step(np.zeros(0), config.lam, None)
        except SemicoxError as err:
            raise ConvergenceError(f'backfitting iteration 1: {err}') \
                from err
        beta_fit = one_step_update(ctx, eta_fit, np.zeros(0),
                                   config.penalty.with_thetas(()))
        trace = [TraceEntry(1, 0.0, 0.0, _objective(beta_fit, eta_fit, ds.n),
                            float('nan'), eta_fit.lam)]
        if monitor:
            monitor.add_fit_end(label, 1, True)
        return FitResult(dataset=ds, beta_fit=beta_fit, eta_fit=eta_fit,
                         iterations=1, converged=True, trace=trace,
                         initial_beta=np.zeros(0), config=config)

    beta0 = initial_beta(ctx)
    beta = beta0
    lam = config.lam
    eta_prev = None
    warm = None
    trace: List[TraceEntry] = []
    converged = False
    for iteration in range(1, config.max_iter + 1):
        try:
            eta_fit = eta_step(beta, lam, warm)
            theta, beta_fit = aic_select_theta(
                ctx, eta_fit, beta, config.penalty, config.theta_grid,
                config.expansion)
        except SemicoxError as err:
            raise ConvergenceError(f'backfitting iteration {iteration}: '
                                   f'{err}') from err
        lam = eta_fit.lam
        warm = eta_fit.coef

        beta_change = float(np.max(np.abs(beta_fit.beta - beta)))
        eta_change = float('inf') if eta_prev is None else \
            float(np.max(np.abs(eta_fit.fitted - eta_prev)))
        entry = TraceEntry(iteration, beta_change, eta_change,
                           _objective(beta_fit, eta_fit, ds.n), theta, lam)
        trace.append(entry)
        if monitor:
            monitor.record(EvType.THETA_SELECTED, label, theta,
                           beta_fit.n_nonzero)
            monitor.record(EvType.BACKFIT_ITER, label, iteration,
                           f'{beta_change:.3g}', f'{eta_change:.3g}',
                           f'{entry.objective:.6f}')

        beta = beta_fit.beta
        eta_prev = eta_fit.fitted
        if iteration > 1 and max(beta_change, eta_change) < config.tol:
            converged = True
            break

    if not converged:
        warnings.warn(f'backfitting did not converge in {config.max_iter} '
                      'iterations', ConvergenceWarning)
    if monitor:
        monitor.add_fit_end(label, iteration, converged)

    return FitResult(dataset=ds, beta_fit=beta_fit, eta_fit=eta_fit,
                     iterations=iteration, converged=converged, trace=trace,
                     initial_beta=beta0, config=config)
