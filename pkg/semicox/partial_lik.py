# coding: utf-8
"""Cox partial likelihood with Breslow ties.

Log-sum-exp over the risk sets is used everywhere, so that large linear
predictors do not overflow. The eta problem uses the likelihood divided by n
plus lambda J(eta); the beta problem and every score built on it (AIC,
sandwich) use the unnormalized log partial likelihood."""

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .core import RiskSet, SurvivalDataset, build_risk_sets
from .exceptions import ConvergenceError
from .spline import EtaCoefficients, SplineBasis


@dataclass(frozen=True, eq=False)
class LikelihoodContext():
    '''A dataset with its risk sets and a fixed offset.

    Args:
        dataset: the data
        risk: risk sets of the data
        offset: part of the linear predictor that is held fixed in the eta
            problem (U beta). Zero by default.
    '''
    dataset: SurvivalDataset
    risk: RiskSet
    offset: np.ndarray

    @classmethod
    def from_dataset(cls, ds: SurvivalDataset,
                     offset: Optional[np.ndarray] = None
                     ) -> 'LikelihoodContext':
        if offset is None:
            offset = np.zeros(ds.n)
        return cls(dataset=ds, risk=build_risk_sets(ds),
                   offset=_check_offset(offset, ds.n))

    def with_offset(self, offset: np.ndarray) -> 'LikelihoodContext':
        return replace(self, offset=_check_offset(offset, self.dataset.n))

    def with_beta(self, beta: np.ndarray) -> 'LikelihoodContext':
        '''Context of the eta problem for fixed beta'''
        beta = np.asarray(beta, dtype=float)
        return self.with_offset(self.dataset.u @ beta)


def _check_offset(offset, n: int) -> np.ndarray:
    offset = np.asarray(offset, dtype=float).ravel()
    if offset.shape != (n,):
        raise ValueError(f'offset must have {n} values, got {offset.shape}')
    if not np.all(np.isfinite(offset)):
        raise ConvergenceError('offset contains non-finite values')
    return offset


class Objective(NamedTuple):
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def risk_probabilities(ctx: LikelihoodContext,
                       lp: np.ndarray) -> Tuple[np.ndarray, float]:
    '''Returns the N x n matrix of the probabilities of each subject in each
    risk set, exp(lp_k) Y_k / sum_j Y_j exp(lp_j), and the log partial
    likelihood for the linear predictor lp'''
    if not np.all(np.isfinite(lp)):
        raise ConvergenceError('non-finite linear predictor')
    masked = np.where(ctx.risk.indicator, lp[np.newaxis, :], -np.inf)
    lse = logsumexp(masked, axis=1)
    probs = np.exp(masked - lse[:, np.newaxis])
    loglik = float(np.sum(lp[ctx.risk.failures] - lse))
    return probs, loglik


def linear_predictor(ctx: LikelihoodContext, beta,
                     eta_vals) -> np.ndarray:
    ds = ctx.dataset
    lp = np.asarray(eta_vals, dtype=float).ravel()
    if lp.shape != (ds.n,):
        raise ValueError(f'eta values must have {ds.n} entries')
    if ds.d:
        lp = ds.u @ np.asarray(beta, dtype=float) + lp
    return lp


def log_profile_pl(ctx: LikelihoodContext, beta, eta_vals) -> float:
    '''Log partial likelihood l(beta) with eta fixed at eta_vals'''
    _, loglik = risk_probabilities(ctx, linear_predictor(ctx, beta, eta_vals))
    return loglik


def neg_log_pl(ctx: LikelihoodContext, beta, eta_vals) -> float:
    '''Negative log partial likelihood divided by n'''
    return -log_profile_pl(ctx, beta, eta_vals) / ctx.dataset.n


def loglik_grad_hess(ctx: LikelihoodContext, beta,
                     eta_vals) -> Tuple[float, np.ndarray, np.ndarray]:
    '''Log partial likelihood with its gradient and Hessian with respect to
    beta, with eta fixed. The Hessian is negative semidefinite.'''
    ds = ctx.dataset
    lp = linear_predictor(ctx, beta, eta_vals)
    probs, loglik = risk_probabilities(ctx, lp)
    u = ds.u
    weighted = probs @ u
    gradient = u[ctx.risk.failures].sum(axis=0) - weighted.sum(axis=0)
    s = probs.sum(axis=0)
    hessian = -((u * s[:, np.newaxis]).T @ u - weighted.T @ weighted)
    return loglik, gradient, hessian


def grad_hess_beta(ctx: LikelihoodContext, beta,
                   eta_vals) -> Tuple[np.ndarray, np.ndarray]:
    '''Gradient and Hessian of the log partial likelihood with respect to
    beta'''
    _, gradient, hessian = loglik_grad_hess(ctx, beta, eta_vals)
    return gradient, hessian


def penalized_eta_objective(ctx: LikelihoodContext, basis: SplineBasis,
                            coef: Union[EtaCoefficients, np.ndarray],
                            lam: float,
                            design: Optional[np.ndarray] = None,
                            penalty: Optional[np.ndarray] = None
                            ) -> Objective:
    '''Value, gradient and Hessian of

        -(1/n) l(offset + eta) + lam J(eta)

    with respect to all the spline coefficients. The null-space coefficients
    are not penalized.'''
    if lam <= 0:
        raise ValueError(f'lambda must be positive, got {lam}')
    ds = ctx.dataset
    vector = coef.vector if isinstance(coef, EtaCoefficients) else \
        np.asarray(coef, dtype=float)
    if design is None:
        design = basis.design(ds.w)
    if penalty is None:
        penalty = basis.penalty_matrix()

    probs, loglik = risk_probabilities(ctx, ctx.offset + design @ vector)
    s = probs.sum(axis=0)
    weighted = probs @ design
    p_coef = penalty @ vector

    value = -loglik / ds.n + lam * float(vector @ p_coef)
    residual = ds.events.astype(float) - s
    gradient = -design.T @ residual / ds.n + 2 * lam * p_coef
    hessian = ((design * s[:, np.newaxis]).T @ design
               - weighted.T @ weighted) / ds.n + 2 * lam * penalty
    return Objective(value, gradient, hessian)
