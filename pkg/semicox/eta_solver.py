# coding: utf-8
"""Estimation of the nonparametric part eta for a fixed beta.

eta minimizes the penalized partial likelihood -(1/n) l + lam J(eta) over
the spline space. The minimization uses Newton steps with step-halving, lam
is selected with the RKL cross-validation score, and pointwise bands are
derived from the approximate posterior covariance of the coefficients."""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import logsumexp
from scipy.stats import norm

from .core import SurvivalDataset
from .exceptions import ConvergenceError, ConvergenceWarning
from .partial_lik import (LikelihoodContext, penalized_eta_objective,
                          risk_probabilities)
from .spline import EtaCoefficients, SplineBasis, grid_points

MAX_ITER = 50
MAX_HALVINGS = 30
GRAD_TOL = 1e-8
DEFAULT_LAMBDA_GRID = np.logspace(-7, 0, 20)


@dataclass(frozen=True, eq=False)
class EtaFit():
    '''Solution of the penalized eta problem.

    Args:
        coef: spline coefficients
        lam: smoothing parameter
        fitted: eta at the data rows, centered to mean zero
        center: constant removed from the raw spline values to center them
        hessian: Hessian of n times the penalized objective at the solution
        converged: whether the gradient norm reached the tolerance
        iterations: Newton iterations performed
        objective: penalized objective at the solution
        basis: the spline basis
        design: basis evaluated at the data rows
    '''
    coef: EtaCoefficients
    lam: float
    fitted: np.ndarray
    center: float
    hessian: np.ndarray
    converged: bool
    iterations: int
    objective: float
    basis: SplineBasis
    design: np.ndarray

    def predict(self, w) -> np.ndarray:
        '''eta at the rows of w (rescaled scale). Unlike the fitted values, it
        is not shifted by center, so it integrates to zero over [0,1]^q.'''
        return self.basis.design(w) @ self.coef.vector


def _context(data: Union[SurvivalDataset, LikelihoodContext]
             ) -> LikelihoodContext:
    if isinstance(data, LikelihoodContext):
        return data
    return LikelihoodContext.from_dataset(data)


def newton_direction(hessian: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    '''Returns -H^{-1} g. If H is not numerically positive definite, a growing
    ridge is added before giving up and using least squares.'''
    dim = gradient.shape[0]
    scale = max(np.trace(hessian) / max(dim, 1), 1.0)
    ridge = 0.0
    for _ in range(8):
        try:
            factor = linalg.cho_factor(hessian + ridge * np.eye(dim))
            return -linalg.cho_solve(factor, gradient)
        except linalg.LinAlgError:
            ridge = scale * 1e-10 if ridge == 0 else ridge * 100
    return -linalg.lstsq(hessian, gradient)[0]


def solve_psd(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    '''Solves matrix x = rhs for a symmetric positive semidefinite matrix.
    When the Cholesky factorization fails, the eigenvalues below the rounding
    level are dropped (pseudo-inverse).'''
    try:
        return linalg.cho_solve(linalg.cho_factor(matrix), rhs)
    except (linalg.LinAlgError, ValueError):
        pass
    try:
        values, vectors = linalg.eigh(matrix)
    except (linalg.LinAlgError, ValueError) as err:
        raise ConvergenceError(f'singular Hessian in {what}: {err}') from err
    keep = values > values.max() * matrix.shape[0] * np.finfo(float).eps
    if not keep.any():
        raise ConvergenceError(f'singular Hessian in {what}')
    inv = (vectors[:, keep] / values[keep]) @ vectors[:, keep].T
    return inv @ rhs


def fit_eta(data: Union[SurvivalDataset, LikelihoodContext],
            basis: SplineBasis, beta, lam: float,
            warm_start: Optional[EtaCoefficients] = None,
            design: Optional[np.ndarray] = None,
            max_iter: int = MAX_ITER, tol: float = GRAD_TOL) -> EtaFit:
    '''Minimizes the penalized partial likelihood in eta for fixed beta.

    Accepted steps never increase the objective. If the gradient norm does
    not reach tol in max_iter iterations, the best iterate is returned with
    converged=False and a ConvergenceWarning.
    '''
    if lam <= 0:
        raise ValueError(f'lambda must be positive, got {lam}')
    ctx = _context(data)
    ds = ctx.dataset
    beta = np.zeros(ds.d) if beta is None else np.asarray(beta, dtype=float)
    ctx = ctx.with_beta(beta) if ds.d else ctx
    if design is None:
        design = basis.design(ds.w)

    if basis.dim == 0:
        zeros = np.zeros(ds.n)
        return EtaFit(coef=EtaCoefficients.zeros(basis), lam=lam,
                      fitted=zeros, center=0.0, hessian=np.zeros((0, 0)),
                      converged=True, iterations=0,
                      objective=_value_at_zero(ctx),
                      basis=basis, design=design)

    penalty = basis.penalty_matrix()
    vector = np.zeros(basis.dim) if warm_start is None else \
        warm_start.vector.copy()

    def objective(v):
        return penalized_eta_objective(ctx, basis, v, lam, design, penalty)

    current = objective(vector)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.linalg.norm(current.gradient) < tol:
            converged = True
            break

        step = newton_direction(current.hessian, current.gradient)
        decrement = -float(current.gradient @ step)
        accepted = None
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            try:
                candidate = objective(vector + t * step)
            except ConvergenceError:
                candidate = None
            if candidate is not None and candidate.value <= current.value:
                accepted = vector + t * step
                break
            t /= 2

        if accepted is None:
            # No decrease possible: at the optimum up to rounding
            converged = decrement < 1e-12 * max(1.0, abs(current.value))
            break
        vector, current = accepted, candidate
    else:
        converged = np.linalg.norm(current.gradient) < tol

    if not converged:
        warnings.warn(f'eta fit did not converge in {iterations} iterations '
                      f'(lambda={lam:.3g}, gradient norm '
                      f'{np.linalg.norm(current.gradient):.3g})',
                      ConvergenceWarning)

    raw = design @ vector
    center = float(raw.mean())
    return EtaFit(coef=EtaCoefficients.from_vector(basis, vector), lam=lam,
                  fitted=raw - center, center=center,
                  hessian=ds.n * current.hessian, converged=converged,
                  iterations=iterations, objective=current.value,
                  basis=basis, design=design)


def _value_at_zero(ctx: LikelihoodContext) -> float:
    _, loglik = risk_probabilities(ctx, ctx.offset)
    return -loglik / ctx.dataset.n


def rkl_score(data: Union[SurvivalDataset, LikelihoodContext],
              fit: EtaFit, beta=None) -> float:
    '''Cross-validation proxy of the relative Kullback-Leibler distance
    between the fitted and the true eta, at the lambda of fit.

    The first term is the negative mean over failures of the log of the
    biased-sampling density; the second is the trace correction
    tr(P1 Q^T H^{-1} Q P1) / (N (N-1)), with Q the basis at the failed rows,
    P1 the centering projection and H the Hessian divided by N.'''
    ctx = _context(data)
    ds = ctx.dataset
    if beta is not None and ds.d:
        ctx = ctx.with_beta(beta)
    failures = ctx.risk.failures
    n_fail = failures.shape[0]

    eta = fit.fitted
    lp = ctx.offset + eta
    masked = np.where(ctx.risk.indicator, lp[np.newaxis, :], -np.inf)
    log_integral = logsumexp(masked, axis=1) - np.log(ds.n)
    fit_term = -float(np.mean(eta[failures] - log_integral))

    if n_fail < 2 or fit.basis.dim == 0:
        return fit_term

    q = fit.design[failures].T
    solved = solve_psd(fit.hessian / n_fail, q, 'the RKL score')
    a = q.T @ solved
    trace = float(np.trace(a) - a.sum() / n_fail)
    return fit_term + trace / (n_fail * (n_fail - 1))


def select_lambda(data: Union[SurvivalDataset, LikelihoodContext],
                  basis: SplineBasis, beta,
                  grid: Optional[Sequence[float]] = None,
                  design: Optional[np.ndarray] = None
                  ) -> Tuple[float, EtaFit]:
    '''Fits eta along the lambda grid, from the largest value down with warm
    starts, and returns the lambda with the smallest RKL score together with
    its fit. Ties go to the larger lambda. Fits that do not converge are
    skipped.'''
    ctx = _context(data)
    ds = ctx.dataset
    if grid is None:
        grid = DEFAULT_LAMBDA_GRID
    grid = sorted((float(g) for g in grid), reverse=True)
    if not grid:
        raise ValueError('the lambda grid is empty')
    if design is None:
        design = basis.design(ds.w)

    best: Optional[Tuple[float, float, EtaFit]] = None
    warm = None
    errors = []
    for lam in grid:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', ConvergenceWarning)
                fit = fit_eta(ctx, basis, beta, lam, warm_start=warm,
                              design=design)
            if not fit.converged:
                errors.append(f'lambda={lam:.3g} did not converge')
                continue
            score = rkl_score(ctx, fit, beta)
        except ConvergenceError as err:
            errors.append(f'lambda={lam:.3g}: {err}')
            continue
        warm = fit.coef
        if best is None or score < best[0] - 1e-12:
            best = (score, lam, fit)

    if best is None:
        raise ConvergenceError('every fit in the lambda grid failed: '
                               + '; '.join(errors))
    return best[1], best[2]


def eta_band(fit: EtaFit, grid=None, level: float = 0.95) -> pd.DataFrame:
    '''Pointwise Bayesian confidence band for eta on a grid of [0,1]^q (by
    default, 0 to 1 by 0.01 on each axis).

    Returns a DataFrame with the grid coordinates (w1[, w2]) and the columns
    estimate, se, lower and upper.'''
    if not 0 < level < 1:
        raise ValueError(f'level must be in (0,1), got {level}')
    q = fit.basis.q
    grid = grid_points(q) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    psi = fit.basis.design(grid)
    estimate = psi @ fit.coef.vector

    if fit.basis.dim:
        cov_psi = solve_psd(fit.hessian, psi.T, 'the band')
        se = np.sqrt(np.maximum(np.sum(psi * cov_psi.T, axis=1), 0))
    else:
        se = np.zeros(grid.shape[0])

    z = norm.ppf((1 + level) / 2)
    band = pd.DataFrame(grid, columns=[f'w{j + 1}' for j in range(q)])
    band['estimate'] = estimate
    band['se'] = se
    band['lower'] = estimate - z * se
    band['upper'] = estimate + z * se
    return band
