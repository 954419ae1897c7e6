# coding: utf-8
"""Penalized estimation of the parametric coefficients beta for fixed eta.

The log profile partial likelihood is replaced by its quadratic expansion
-1/2 ||y - V beta||^2, with V^T V the observed information, and the penalty
by its local linear approximation. The result is a weighted LASSO that is
solved exactly with LARS after projecting out the unpenalized coefficients.
"""

import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from sklearn.linear_model import lars_path

from .exceptions import ConvergenceError, ConvergenceWarning
from .eta_solver import EtaFit, newton_direction
from .partial_lik import LikelihoodContext, log_profile_pl, loglik_grad_hess

SCAD_A = 3.7
ZERO_SNAP = 1e-10
AIC_TIE = 1e-10
PROFILE_MAX_ITER = 50
PROFILE_TOL = 1e-6


class PenaltyKind(Enum):
    SCAD = 'scad'
    ALASSO = 'alasso'


class ExpansionMode(Enum):
    '''Point where the profile likelihood is expanded'''
    PROFILE = 'profile'    # unpenalized profile maximizer at the current eta
    PREVIOUS = 'previous'  # previous penalized estimate, with gradient term


@dataclass(frozen=True)
class PenaltySpec():
    '''Penalty on beta.

    Args:
        kind: SCAD or adaptive LASSO
        a: SCAD shape parameter, must be greater than 2
        thetas: tuning parameters theta_j, one per coefficient. None until a
            value is selected. An infinite theta_j forces beta_j to zero.
    '''
    kind: PenaltyKind = PenaltyKind.SCAD
    a: float = SCAD_A
    thetas: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not self.a > 2:
            raise ValueError(f'SCAD parameter a must be greater than 2, '
                             f'got {self.a}')
        if self.thetas is not None:
            thetas = np.asarray(self.thetas, dtype=float)
            if np.any(np.isnan(thetas)) or np.any(thetas < 0):
                raise ValueError('thetas must be nonnegative')

    def with_thetas(self, thetas) -> 'PenaltySpec':
        return replace(self, thetas=tuple(float(t) for t in np.ravel(thetas)))

    def derivative(self, t) -> np.ndarray:
        '''p'_{theta_j}(|t_j|) for each coefficient'''
        if self.thetas is None:
            raise ValueError('the penalty has no thetas yet')
        thetas = np.asarray(self.thetas, dtype=float)
        t = np.abs(np.asarray(t, dtype=float))
        if self.kind is PenaltyKind.ALASSO:
            return np.broadcast_to(thetas, t.shape).copy()
        return scad_deriv(thetas, self.a, t)

    def value(self, t) -> np.ndarray:
        '''p_{theta_j}(|t_j|) for each coefficient'''
        if self.thetas is None:
            raise ValueError('the penalty has no thetas yet')
        thetas = np.asarray(self.thetas, dtype=float)
        t = np.abs(np.asarray(t, dtype=float))
        if self.kind is PenaltyKind.ALASSO:
            with np.errstate(invalid='ignore'):
                return np.where(t == 0, 0.0, thetas * t)
        return scad_penalty(thetas, self.a, t)


def scad_deriv(theta, a: float, t) -> np.ndarray:
    '''Derivative of the SCAD penalty:

        p'(t) = theta                     if t <= theta
                (a theta - t)_+ / (a - 1) otherwise
    '''
    theta = np.asarray(theta, dtype=float)
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(invalid='ignore'):
        tail = np.maximum(a * theta - t, 0) / (a - 1)
    return np.where(t <= theta, theta, tail)


def scad_penalty(theta, a: float, t) -> np.ndarray:
    '''SCAD penalty: linear up to theta, quadratic spline up to a theta and
    constant beyond'''
    theta = np.asarray(theta, dtype=float)
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(invalid='ignore'):
        middle = -(t ** 2 - 2 * a * theta * t + theta ** 2) / (2 * (a - 1))
        flat = (a + 1) * theta ** 2 / 2
    return np.where(t <= theta, theta * t,
                    np.where(t <= a * theta, middle, flat))


def adaptive_lasso_thetas(beta_init, theta0: float) -> np.ndarray:
    '''theta_j = theta0 / |beta_init_j|. Coefficients with a zero initial
    estimate get an infinite theta (fixed at zero).'''
    beta_init = np.abs(np.asarray(beta_init, dtype=float))
    with np.errstate(divide='ignore'):
        return np.where(beta_init == 0, np.inf, theta0 / beta_init)


def default_theta_grid(n: int, d: int, size: int = 30) -> np.ndarray:
    '''Log-spaced theta values in [0.001, 1] scaled by sqrt(log d / n)'''
    scale = np.sqrt(max(np.log(max(d, 1)), 1.0) / n)
    return np.logspace(-3, 0, size) * scale


def lars_weighted_lasso(y, x, weights, n: float) -> np.ndarray:
    '''Exact solution of

        min_b 1/2 ||y - X b||^2 + n sum_j w_j |b_j|

    The columns are rescaled by 1/w_j so that the penalty is uniform, the
    LARS-LASSO path is stopped at the penalty level and the solution is scaled
    back. Columns with an infinite weight are left out (b_j = 0).'''
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or \
            x.shape[1] != weights.shape[0]:
        raise ValueError('incompatible shapes in the weighted LASSO')
    if np.any(weights <= 0):
        raise ValueError('LASSO weights must be positive')

    coef = np.zeros(x.shape[1])
    keep = np.isfinite(weights)
    if not keep.any():
        return coef

    scaled = x[:, keep] / weights[keep]
    rows = x.shape[0]
    _, _, scaled_coef = lars_path(scaled, y, alpha_min=n / rows,
                                  method='lasso', return_path=False)
    coef[keep] = scaled_coef / weights[keep]
    coef[np.abs(coef) < ZERO_SNAP] = 0.0
    return coef


@dataclass(frozen=True, eq=False)
class ProfileFit():
    '''Unpenalized (or ridge-penalized) maximizer of the log profile partial
    likelihood for fixed eta'''
    beta: np.ndarray
    loglik: float
    hessian: np.ndarray
    converged: bool
    iterations: int
    ridge: float = 0.0


def profile_maximizer(ctx: LikelihoodContext, eta_vals, init=None,
                      ridge: float = 0.0, max_iter: int = PROFILE_MAX_ITER,
                      tol: float = PROFILE_TOL) -> ProfileFit:
    '''Newton maximization with step-halving of l(beta) - ridge/2 ||beta||^2
    for fixed eta. The returned loglik and hessian are those of l alone.'''
    d = ctx.dataset.d
    beta = np.zeros(d) if init is None else np.array(init, dtype=float)
    eye = np.eye(d)

    def evaluate(b):
        loglik, grad, hess = loglik_grad_hess(ctx, b, eta_vals)
        return (loglik - ridge / 2 * float(b @ b), grad - ridge * b,
                hess - ridge * eye, loglik, hess)

    current = evaluate(beta)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.max(np.abs(current[1]), initial=0) < tol:
            converged = True
            break
        step = newton_direction(-current[2], -current[1])
        decrement = float(current[1] @ step)
        accepted = None
        t = 1.0
        for _ in range(30):
            try:
                candidate = evaluate(beta + t * step)
            except ConvergenceError:
                candidate = None
            if candidate is not None and candidate[0] >= current[0]:
                accepted = beta + t * step
                break
            t /= 2
        if accepted is None:
            converged = decrement < 1e-10 * max(1.0, abs(current[0]))
            break
        beta, current = accepted, candidate
    else:
        converged = np.max(np.abs(current[1]), initial=0) < tol

    return ProfileFit(beta=beta, loglik=current[3], hessian=current[4],
                      converged=converged, iterations=iterations, ridge=ridge)


def _upper_cholesky(info: np.ndarray) -> np.ndarray:
    d = info.shape[0]
    scale = max(np.trace(info) / max(d, 1), 1.0)
    ridge = 0.0
    for _ in range(6):
        try:
            return linalg.cholesky(info + ridge * np.eye(d), lower=False)
        except linalg.LinAlgError:
            ridge = scale * 1e-8 if ridge == 0 else ridge * 100
    raise ConvergenceError('the information matrix is not positive definite')


@dataclass(frozen=True, eq=False)
class Expansion():
    '''Quadratic expansion l(beta) ~ const - 1/2 ||y - V beta||^2.

    Args:
        point: beta where the information and the penalty weights are
            evaluated
        chol: upper Cholesky factor V of the information matrix at point
        y: response of the least-squares problem
        mode: how point was chosen
    '''
    point: np.ndarray
    chol: np.ndarray
    y: np.ndarray
    mode: ExpansionMode


def expand(ctx: LikelihoodContext, eta_vals, beta_prev,
           mode: ExpansionMode = ExpansionMode.PROFILE) -> Expansion:
    '''Builds the quadratic expansion of the log profile partial likelihood.

    In PROFILE mode the expansion point is the unpenalized maximizer at the
    current eta, so y = V beta_tilde. In PREVIOUS mode it is beta_prev and
    y = V beta_prev + V^{-T} grad, which is one Newton step when the penalty
    is disabled.'''
    mode = ExpansionMode(mode)
    beta_prev = np.asarray(beta_prev, dtype=float)
    if mode is ExpansionMode.PROFILE:
        prof = profile_maximizer(ctx, eta_vals, init=beta_prev)
        if not prof.converged:
            warnings.warn('the profile maximizer did not converge; the '
                          'expansion uses the last iterate',
                          ConvergenceWarning)
        chol = _upper_cholesky(-prof.hessian)
        return Expansion(point=prof.beta, chol=chol, y=chol @ prof.beta,
                         mode=mode)

    _, grad, hess = loglik_grad_hess(ctx, beta_prev, eta_vals)
    chol = _upper_cholesky(-hess)
    y = chol @ beta_prev + linalg.solve_triangular(chol, grad, trans='T',
                                                   lower=False)
    return Expansion(point=beta_prev.copy(), chol=chol, y=y, mode=mode)


@dataclass(frozen=True, eq=False)
class BetaFit():
    '''Result of a one-step penalized update.

    Args:
        beta: estimate, with exact zeros for dropped coefficients
        active_set: coefficients with zero penalty derivative (A)
        penalized_set: coefficients with positive penalty derivative (B)
        forced_zero: coefficients with infinite theta
        thetas: theta_j used
        loglik: log profile partial likelihood at beta
        aic: -2 loglik + 2 (number of nonzero coefficients)
        spec: the penalty
        expansion_point: beta where the expansion was made
    '''
    beta: np.ndarray
    active_set: Tuple[int, ...]
    penalized_set: Tuple[int, ...]
    forced_zero: Tuple[int, ...]
    thetas: np.ndarray
    loglik: float
    aic: float
    spec: PenaltySpec
    expansion_point: np.ndarray

    @property
    def nonzero(self) -> np.ndarray:
        return self.beta != 0

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.beta))


def _eta_values(eta: Union[EtaFit, np.ndarray]) -> np.ndarray:
    if isinstance(eta, EtaFit):
        return eta.fitted
    return np.asarray(eta, dtype=float)


def _project_out(basis: np.ndarray, target: np.ndarray) -> np.ndarray:
    '''Residual of the least-squares projection of target onto the columns
    of basis'''
    if basis.shape[1] == 0:
        return target
    coef = linalg.lstsq(basis, target)[0]
    return target - basis @ coef


def one_step_update(ctx: LikelihoodContext, eta: Union[EtaFit, np.ndarray],
                    beta_prev, spec: PenaltySpec,
                    expansion: Union[ExpansionMode, str, Expansion]
                    = ExpansionMode.PROFILE) -> BetaFit:
    '''One-step maximization of the penalized log profile partial likelihood

        l(beta) - n sum_j p_{theta_j}(|beta_j|)

    through the LARS transformation. The coefficients whose penalty derivative
    is zero at the expansion point (A) are left unpenalized and projected out,
    the rest (B) are rescaled by theta_j / p'_j so that the problem becomes a
    LASSO with weights theta_j.'''
    ds = ctx.dataset
    n, d = ds.n, ds.d
    eta_vals = _eta_values(eta)
    if spec.thetas is None or len(spec.thetas) != d:
        raise ValueError(f'the penalty needs {d} thetas')
    thetas = np.asarray(spec.thetas, dtype=float)

    if d == 0:
        loglik = log_profile_pl(ctx, np.zeros(0), eta_vals)
        return BetaFit(beta=np.zeros(0), active_set=(), penalized_set=(),
                       forced_zero=(), thetas=thetas, loglik=loglik,
                       aic=-2 * loglik, spec=spec,
                       expansion_point=np.zeros(0))

    if not isinstance(expansion, Expansion):
        expansion = expand(ctx, eta_vals, beta_prev, ExpansionMode(expansion))

    v, y = expansion.chol, expansion.y
    deriv = spec.derivative(expansion.point)
    forced = np.isinf(thetas) | np.isinf(deriv)
    a_set = np.flatnonzero(~forced & (deriv == 0))
    b_set = np.flatnonzero(~forced & (deriv > 0))

    v_a = v[:, a_set]
    scale = thetas[b_set] / deriv[b_set]
    v_b = v[:, b_set] * scale

    beta = np.zeros(d)
    if b_set.size:
        y_star = _project_out(v_a, y)
        v_b_star = _project_out(v_a, v_b)
        beta_b_star = lars_weighted_lasso(y_star, v_b_star, thetas[b_set], n)
        beta[b_set] = beta_b_star * scale
        residual = y - v_b @ beta_b_star
    else:
        residual = y
    if a_set.size:
        beta[a_set] = linalg.lstsq(v_a, residual)[0]

    beta[np.abs(beta) < ZERO_SNAP] = 0.0
    beta[forced] = 0.0

    loglik = log_profile_pl(ctx, beta, eta_vals)
    return BetaFit(beta=beta, active_set=tuple(int(j) for j in a_set),
                   penalized_set=tuple(int(j) for j in b_set),
                   forced_zero=tuple(int(j) for j in np.flatnonzero(forced)),
                   thetas=thetas, loglik=loglik,
                   aic=-2 * loglik + 2 * np.count_nonzero(beta), spec=spec,
                   expansion_point=expansion.point.copy())


def aic_select_theta(ctx: LikelihoodContext, eta: Union[EtaFit, np.ndarray],
                     beta_prev, spec: PenaltySpec,
                     theta_grid: Optional[Sequence[float]] = None,
                     expansion: Union[ExpansionMode, str]
                     = ExpansionMode.PROFILE,
                     beta_init=None) -> Tuple[float, BetaFit]:
    '''Runs one_step_update for each theta of the grid and returns the one
    with the smallest AIC = -2 l(beta) + 2 |nonzero|. Ties go to the sparser
    model.

    SCAD uses the same theta for every coefficient. Adaptive LASSO uses
    theta / |beta_init_j|, where beta_init defaults to the unpenalized
    profile maximizer at the current eta.'''
    ds = ctx.dataset
    eta_vals = _eta_values(eta)
    if theta_grid is None:
        theta_grid = default_theta_grid(ds.n, ds.d)
    theta_grid = [float(t) for t in theta_grid]
    if not theta_grid:
        raise ValueError('the theta grid is empty')

    exp_point = None
    if ds.d:
        exp_point = expand(ctx, eta_vals, beta_prev, ExpansionMode(expansion))
    if spec.kind is PenaltyKind.ALASSO and beta_init is None and ds.d:
        beta_init = exp_point.point if \
            exp_point.mode is ExpansionMode.PROFILE else \
            profile_maximizer(ctx, eta_vals, init=beta_prev).beta

    best: Optional[Tuple[float, BetaFit]] = None
    for theta in theta_grid:
        if spec.kind is PenaltyKind.ALASSO:
            thetas = adaptive_lasso_thetas(beta_init, theta) if ds.d else \
                np.zeros(0)
        else:
            thetas = np.full(ds.d, theta)
        fit = one_step_update(ctx, eta_vals, beta_prev,
                              spec.with_thetas(thetas), exp_point)
        if best is None or fit.aic < best[1].aic - AIC_TIE or \
                (abs(fit.aic - best[1].aic) <= AIC_TIE and
                 fit.n_nonzero < best[1].n_nonzero):
            best = (theta, fit)
    return best
