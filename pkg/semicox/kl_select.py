# coding: utf-8
"""Kullback-Leibler diagnostics for the structure of eta.

With beta fixed, each failure p defines a density on the observed W rows
proportional to a_p(W_k) exp(eta(W_k)), with a_p(W_k) = Y_k(X_{i_p})
exp(U_k^T beta). The KL distance between two etas averages the KL distances
of these densities over the failures. A reduced structure is feasible when
its KL projection loses a small part of KL(eta_hat, constant)."""

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .backfit import FitResult
from .core import RiskSet, SurvivalDataset, build_risk_sets
from .eta_solver import EtaFit, newton_direction
from .exceptions import ConvergenceWarning, StructureError
from .spline import Structure, format_structure, validate_structure

FEASIBLE_RATIO = 0.05
PYTHAGOREAN_TOL = 1e-6
PROJECTION_MAX_ITER = 100
PROJECTION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BiasedWeights():
    '''Log-weights log a_p(W_k) as an N x n matrix, -inf outside the risk
    sets. They are shifted by max(U beta), which does not change any KL
    quantity.'''
    log_a: np.ndarray

    @property
    def n_failures(self) -> int:
        return self.log_a.shape[0]


def biased_weights(ds: SurvivalDataset, beta,
                   risk: Optional[RiskSet] = None) -> BiasedWeights:
    if risk is None:
        risk = build_risk_sets(ds)
    lin = ds.u @ np.asarray(beta, dtype=float) if ds.d else np.zeros(ds.n)
    lin = lin - lin.max()
    log_a = np.where(risk.indicator, lin[np.newaxis, :], -np.inf)
    return BiasedWeights(log_a=log_a)


def _densities(eta: np.ndarray, weights: BiasedWeights):
    '''Per-failure log normalizers and probabilities of the densities
    proportional to a_p exp(eta)'''
    logits = weights.log_a + eta[np.newaxis, :]
    lse = logsumexp(logits, axis=1)
    return lse, np.exp(logits - lse[:, np.newaxis])


def kl_distance(eta1, eta2, weights: BiasedWeights) -> float:
    '''KL(eta1, eta2) averaged over the failures'''
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    lse1, probs1 = _densities(eta1, weights)
    lse2, _ = _densities(eta2, weights)
    return float(np.mean(probs1 @ (eta1 - eta2) - lse1 + lse2))


@dataclass(frozen=True, eq=False)
class KLProjection():
    '''KL projection of a fitted eta onto a reduced structure'''
    structure: Structure
    coef: np.ndarray
    values: np.ndarray
    converged: bool
    iterations: int


def kl_project(eta_hat: EtaFit, reduced: Sequence, weights: BiasedWeights
               ) -> KLProjection:
    '''Minimizes KL(eta_hat, eta) over the functions spanned by the columns of
    the reduced terms (same knots as the fit). At the solution the weighted
    means of the basis functions under eta_hat and under the projection
    agree.'''
    basis = eta_hat.basis
    reduced = validate_structure(reduced, basis.q)
    columns = basis.columns_for(reduced)
    eta = eta_hat.fitted

    if set(reduced) == set(basis.structure):
        return KLProjection(structure=reduced, coef=eta_hat.coef.vector,
                            values=eta.copy(), converged=True, iterations=0)
    if columns.size == 0:
        return KLProjection(structure=reduced, coef=np.zeros(0),
                            values=np.zeros_like(eta), converged=True,
                            iterations=0)

    psi = eta_hat.design[:, columns]
    _, probs_hat = _densities(eta, weights)
    target = (probs_hat @ psi).mean(axis=0)
    n_fail = weights.n_failures

    def evaluate(gamma):
        values = psi @ gamma
        lse, probs = _densities(values, weights)
        value = float(np.mean(lse) - target @ gamma)
        means = probs @ psi
        gradient = means.mean(axis=0) - target
        hessian = ((psi * probs.sum(axis=0)[:, np.newaxis]).T @ psi
                   - means.T @ means) / n_fail
        return value, gradient, hessian

    gamma = np.zeros(columns.size)
    current = evaluate(gamma)
    converged = False
    iterations = 0
    for iterations in range(1, PROJECTION_MAX_ITER + 1):
        if np.linalg.norm(current[1]) < PROJECTION_TOL:
            converged = True
            break
        step = newton_direction(current[2], current[1])
        decrement = -float(current[1] @ step)
        t = 1.0
        accepted = None
        for _ in range(30):
            candidate = evaluate(gamma + t * step)
            if candidate[0] <= current[0]:
                accepted = gamma + t * step
                break
            t /= 2
        if accepted is None:
            converged = decrement < 1e-14
            break
        gamma, current = accepted, candidate

    if not converged:
        warnings.warn(f'KL projection onto {format_structure(reduced)} did '
                      'not converge', ConvergenceWarning)
    values = psi @ gamma
    return KLProjection(structure=reduced, coef=gamma,
                        values=values - values.mean(), converged=converged,
                        iterations=iterations)


@dataclass(frozen=True)
class KLReport():
    '''Feasibility diagnostic of a reduced structure.

    Args:
        structure: the reduced structure
        kl_full_reduced: KL(eta_hat, eta_tilde)
        kl_reduced_const: KL(eta_tilde, eta_c)
        kl_full_const: KL(eta_hat, eta_c)
        ratio: kl_full_reduced / kl_full_const
        feasible: ratio below the threshold
        pythagorean_defect: |kl_full_const - kl_full_reduced -
            kl_reduced_const|
    '''
    structure: Structure
    kl_full_reduced: float
    kl_reduced_const: float
    kl_full_const: float
    ratio: float
    feasible: bool
    pythagorean_defect: float


def kl_ratio_report(eta_hat: EtaFit, candidates: Sequence[Sequence],
                    weights: BiasedWeights,
                    threshold: float = FEASIBLE_RATIO) -> List[KLReport]:
    '''One KLReport per candidate structure, all nested in the fitted one'''
    fitted = eta_hat.basis.structure
    eta = eta_hat.fitted
    const = np.zeros_like(eta)
    kl_full_const = kl_distance(eta, const, weights)

    reports = []
    for candidate in candidates:
        candidate = validate_structure(candidate, eta_hat.basis.q)
        if not set(candidate) <= set(fitted):
            raise StructureError(f'{format_structure(candidate)} is not '
                                 f'nested in {format_structure(fitted)}')
        projection = kl_project(eta_hat, candidate, weights)
        kl_full_reduced = kl_distance(eta, projection.values, weights)
        kl_reduced_const = kl_distance(projection.values, const, weights)
        defect = abs(kl_full_const - kl_full_reduced - kl_reduced_const)
        if defect > PYTHAGOREAN_TOL:
            warnings.warn(f'KL decomposition of '
                          f'{format_structure(candidate)} is off by '
                          f'{defect:.3g}', ConvergenceWarning)
        ratio = kl_full_reduced / kl_full_const if kl_full_const > 1e-12 \
            else 0.0
        reports.append(KLReport(structure=candidate,
                                kl_full_reduced=kl_full_reduced,
                                kl_reduced_const=kl_reduced_const,
                                kl_full_const=kl_full_const, ratio=ratio,
                                feasible=ratio < threshold,
                                pythagorean_defect=defect))
    return reports


def select_structure(reports: Sequence[KLReport],
                     fitted: Structure) -> Structure:
    '''Among the feasible candidates, the one with the fewest terms (ties:
    smaller ratio). The fitted structure if none is feasible.'''
    feasible = [r for r in reports if r.feasible]
    if not feasible:
        return tuple(fitted)
    best = min(feasible, key=lambda r: (len(r.structure), r.ratio))
    return best.structure


def diagnose(result: FitResult, candidates: Sequence[Sequence],
             threshold: float = FEASIBLE_RATIO) -> List[KLReport]:
    '''KL reports of a backfitting result, with the weights built from its
    final beta'''
    weights = biased_weights(result.dataset, result.beta)
    return kl_ratio_report(result.eta_fit, candidates, weights, threshold)


def reports_to_frame(reports: Sequence[KLReport]) -> pd.DataFrame:
    rows = [{'structure': format_structure(r.structure),
             'kl_full_reduced': r.kl_full_reduced,
             'kl_reduced_const': r.kl_reduced_const,
             'kl_full_const': r.kl_full_const,
             'ratio': r.ratio,
             'feasible': r.feasible,
             'pythagorean_defect': r.pythagorean_defect}
            for r in reports]
    return pd.DataFrame(rows, columns=['structure', 'kl_full_reduced',
                                       'kl_reduced_const', 'kl_full_const',
                                       'ratio', 'feasible',
                                       'pythagorean_defect'])
