# coding: utf-8
"""Sandwich covariance of the nonzero parametric coefficients."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .backfit import FitResult
from .beta_solver import PenaltySpec
from .exceptions import ConvergenceError
from .partial_lik import (LikelihoodContext, linear_predictor,
                          loglik_grad_hess, risk_probabilities)


@dataclass(frozen=True, eq=False)
class SandwichCov():
    '''Covariance estimate of the nonzero coefficients.

    Args:
        covariance: matrix over the active coefficients
        active: indices of the nonzero coefficients
        standard_errors: one per coefficient, NaN for the zero ones
        sigma_theta: diagonal of Sigma_theta, one per coefficient
    '''
    covariance: np.ndarray
    active: Tuple[int, ...]
    standard_errors: np.ndarray
    sigma_theta: np.ndarray


def sigma_theta(beta, spec: PenaltySpec) -> np.ndarray:
    '''p'_{theta_j}(|beta_j|) / |beta_j| for the nonzero coefficients, 0 for
    the zero ones'''
    beta = np.abs(np.asarray(beta, dtype=float))
    deriv = spec.derivative(beta)
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(beta > 0, deriv / beta, 0.0)


def score_residuals(ctx: LikelihoodContext, beta, eta_vals) -> np.ndarray:
    '''Per-subject contributions to the score of the log partial likelihood
    (n x d). A subject contributes its covariate minus the risk-set average
    at its own failure, minus its weighted share of every risk set it
    belongs to.'''
    ds = ctx.dataset
    probs, _ = risk_probabilities(ctx, linear_predictor(ctx, beta, eta_vals))
    u = ds.u
    u_bar = probs @ u
    residuals = np.zeros_like(u)
    np.add.at(residuals, ctx.risk.failures, u[ctx.risk.failures] - u_bar)
    residuals -= probs.sum(axis=0)[:, np.newaxis] * u - probs.T @ u_bar
    return residuals


def sandwich_cov(result: FitResult,
                 ctx: Optional[LikelihoodContext] = None) -> SandwichCov:
    '''Sandwich covariance

        {H - n Sigma_theta}^{-1} cov(score) {H - n Sigma_theta}^{-1}

    restricted to the nonzero coefficients, with H the Hessian of the log
    profile partial likelihood at the final estimates (eta fixed) and the
    score covariance estimated from the per-subject score residuals.'''
    ds = result.dataset
    if ctx is None:
        ctx = LikelihoodContext.from_dataset(ds)
    beta = result.beta
    eta_vals = result.eta_fit.fitted
    sigma = sigma_theta(beta, result.beta_fit.spec) if ds.d else np.zeros(0)

    active = np.flatnonzero(beta != 0)
    errors = np.full(ds.d, np.nan)
    if active.size == 0:
        return SandwichCov(covariance=np.zeros((0, 0)), active=(),
                           standard_errors=errors, sigma_theta=sigma)

    _, _, hessian = loglik_grad_hess(ctx, beta, eta_vals)
    bread = hessian[np.ix_(active, active)] - ds.n * np.diag(sigma[active])
    residuals = score_residuals(ctx, beta, eta_vals)[:, active]
    meat = residuals.T @ residuals
    try:
        bread_inv = linalg.inv(bread)
    except linalg.LinAlgError as err:
        raise ConvergenceError(f'singular matrix in the sandwich: {err}') \
            from err
    cov = bread_inv @ meat @ bread_inv
    cov = (cov + cov.T) / 2
    errors[active] = np.sqrt(np.maximum(np.diag(cov), 0))
    return SandwichCov(covariance=cov, active=tuple(int(j) for j in active),
                       standard_errors=errors, sigma_theta=sigma)
