# coding: utf-8
"""Smoothing-spline ANOVA basis on [0,1]^q (q <= 2).

Each ANOVA term (main effect of W1, main effect of W2, interaction W1:W2)
contributes one null-space column and one block of kernel columns, one column
per knot. All columns integrate to zero over [0,1]^q, so every function in
the span satisfies the side condition that eta integrates to zero."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import SurvivalDataset
from .exceptions import DataError, StructureError

KERNEL_RIDGE = 1e-10
DOMAIN_TOL = 1e-10


class Term(Enum):
    W1 = 'w1'
    W2 = 'w2'
    W12 = 'w1:w2'


TERM_ORDER = (Term.W1, Term.W2, Term.W12)

Structure = Tuple[Term, ...]


def default_structure(q: int) -> Structure:
    '''All the main effects, no interaction'''
    return TERM_ORDER[:q]


def full_structure(q: int) -> Structure:
    '''Main effects plus, for q=2, the interaction'''
    return TERM_ORDER if q == 2 else TERM_ORDER[:1]


def validate_structure(structure: Sequence[Term], q: int) -> Structure:
    '''Checks the terms against the number of nonparametric covariates and
    returns them without duplicates in canonical order'''
    terms = set(structure)
    if q < 2 and (Term.W2 in terms or Term.W12 in terms):
        raise StructureError('terms in w2 requested but the data has only one '
                             'nonparametric covariate')
    if Term.W12 in terms and not {Term.W1, Term.W2} <= terms:
        raise StructureError('the interaction w1:w2 requires both main '
                             'effects')
    return tuple(t for t in TERM_ORDER if t in terms)


def parse_structure(text: str,
                    names: Optional[Sequence[str]] = None) -> Structure:
    '''Parses a model formula such as "w1+w2+w1:w2", "w1*w2" or "const".

    If names (the W column names) are given, they can be used instead of w1
    and w2.'''
    aliases: Dict[str, str] = {}
    if names:
        for j, name in enumerate(names):
            aliases[name.strip().lower()] = f'w{j + 1}'

    text = text.strip().lower()
    if text in ('', 'const', '1', 'none'):
        return ()

    terms = []
    for token in text.replace(' ', '').split('+'):
        if '*' in token:
            parts = [aliases.get(p, p) for p in token.split('*')]
            if sorted(parts) != ['w1', 'w2']:
                raise StructureError(f'unknown term "{token}"')
            terms += [Term.W1, Term.W2, Term.W12]
            continue
        if ':' in token:
            parts = [aliases.get(p, p) for p in token.split(':')]
            token = ':'.join(sorted(parts))
        else:
            token = aliases.get(token, token)
        try:
            terms.append(Term(token))
        except ValueError:
            raise StructureError(f'unknown term "{token}"') from None

    # Interaction is only checked when both mains are requested
    terms_set = set(terms)
    if Term.W12 in terms_set and not {Term.W1, Term.W2} <= terms_set:
        raise StructureError('the interaction w1:w2 requires both main '
                             'effects')
    return tuple(t for t in TERM_ORDER if t in terms_set)


def format_structure(structure: Sequence[Term]) -> str:
    if not structure:
        return 'const'
    return '+'.join(t.value for t in structure)


def knot_count(n: int) -> int:
    '''Number of knots ceil(10 n^(2/5)), capped at n'''
    return min(math.ceil(10 * n ** 0.4), n)


def select_knots(ds: SurvivalDataset, seed: Optional[int] = None,
                 size: Optional[int] = None) -> np.ndarray:
    '''Selects the knots as a seeded uniform random subset of the distinct W
    rows. Returns the sorted row indices in the dataset.'''
    _, first_index = np.unique(ds.w, axis=0, return_index=True)
    if size is None:
        size = knot_count(ds.n)
    size = min(size, first_index.shape[0])
    rng = np.random.default_rng(seed)
    chosen = rng.choice(first_index.shape[0], size=size, replace=False)
    return np.sort(first_index[chosen])


def _check_domain(values: np.ndarray) -> np.ndarray:
    if np.any(values < -DOMAIN_TOL) or np.any(values > 1 + DOMAIN_TOL):
        raise DataError('spline arguments must lie in [0,1]')
    return np.clip(values, 0, 1)


def _k1(t):
    return t - 0.5


def _k2(t):
    return (_k1(t) ** 2 - 1 / 12) / 2


def _k4(t):
    k = _k1(t)
    return (k ** 4 - k ** 2 / 2 + 7 / 240) / 24


def cubic_kernel(x, y) -> np.ndarray:
    '''Reproducing kernel of the cubic-spline penalty on [0,1]:

        R(x,y) = k2(x) k2(y) - k4(|x - y|)

    with the scaled Bernoulli polynomials k1, k2, k4. Broadcasts over x and
    y.'''
    x = _check_domain(np.asarray(x, dtype=float))
    y = _check_domain(np.asarray(y, dtype=float))
    return _k2(x) * _k2(y) - _k4(np.abs(x - y))


@dataclass(frozen=True, eq=False)
class SplineBasis():
    '''Finite-dimensional SS-ANOVA space spanned by the null-space functions
    and the kernel functions centered at the knots.

    Coefficient vectors are laid out as the null-space coefficients (one per
    term, in structure order) followed by one block of n_knots kernel
    coefficients per term.

    Args:
        knots: n_knots x q matrix of knot values in [0,1]
        knot_index: rows of the dataset used as knots
        structure: active ANOVA terms
        q: number of nonparametric covariates
    '''
    knots: np.ndarray
    knot_index: np.ndarray
    structure: Structure
    q: int

    @property
    def n_knots(self) -> int:
        return self.knots.shape[0]

    @property
    def null_dim(self) -> int:
        return len(self.structure)

    @property
    def dim(self) -> int:
        return self.null_dim + len(self.structure) * self.n_knots

    def _check_points(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.ndim == 1 and self.q == 1:
            w = w.reshape(-1, 1)
        if w.ndim != 2 or w.shape[1] != self.q:
            raise DataError(f'points must have {self.q} columns, got shape '
                            f'{w.shape}')
        return _check_domain(w)

    @staticmethod
    def _null_column(term: Term, w: np.ndarray) -> np.ndarray:
        if term is Term.W12:
            return _k1(w[:, 0]) * _k1(w[:, 1])
        j = 0 if term is Term.W1 else 1
        return _k1(w[:, j])

    @staticmethod
    def _kernel_block(term: Term, w: np.ndarray,
                      knots: np.ndarray) -> np.ndarray:
        def main(j):
            return cubic_kernel(w[:, j, np.newaxis], knots[np.newaxis, :, j])

        def linear(j):
            return np.outer(_k1(w[:, j]), _k1(knots[:, j]))

        if term is Term.W1:
            return main(0)
        if term is Term.W2:
            return main(1)
        r1, r2 = main(0), main(1)
        return r1 * linear(1) + linear(0) * r2 + r1 * r2

    def design(self, w) -> np.ndarray:
        '''Returns the matrix of basis functions evaluated at the rows of w
        (one row per point, dim columns)'''
        w = self._check_points(w)
        if not self.structure:
            return np.zeros((w.shape[0], 0))
        null = [self._null_column(t, w)[:, np.newaxis]
                for t in self.structure]
        kernel = [self._kernel_block(t, w, self.knots)
                  for t in self.structure]
        return np.hstack(null + kernel)

    def kernel_matrix(self, term: Term) -> np.ndarray:
        '''Kernel of a term evaluated between the knots'''
        return self._kernel_block(term, self.knots, self.knots)

    def penalty_matrix(self, ridge: float = KERNEL_RIDGE) -> np.ndarray:
        '''Matrix P with J(eta) = coef^T P coef. The null-space block is zero
        and each kernel block gets a small ridge to keep it nonsingular.'''
        penalty = np.zeros((self.dim, self.dim))
        for term in self.structure:
            block = self.term_columns(term)[1:]
            penalty[np.ix_(block, block)] = self.kernel_matrix(term) + \
                ridge * np.eye(self.n_knots)
        return penalty

    def term_columns(self, term: Term) -> np.ndarray:
        '''Columns of the term: its null-space column first, then its kernel
        block'''
        if term not in self.structure:
            raise StructureError(f'term {term.value} is not in the basis')
        pos = self.structure.index(term)
        start = self.null_dim + pos * self.n_knots
        return np.concatenate([[pos],
                               np.arange(start, start + self.n_knots)])

    def columns_for(self, structure: Sequence[Term]) -> np.ndarray:
        '''Sorted columns that span the submodel with the given terms'''
        missing = [t.value for t in structure if t not in self.structure]
        if missing:
            raise StructureError(f'terms {missing} are not nested in '
                                 f'{format_structure(self.structure)}')
        if not structure:
            return np.zeros(0, dtype=int)
        return np.sort(np.concatenate([self.term_columns(t)
                                       for t in structure]))

    def roughness(self, coef: 'EtaCoefficients') -> float:
        '''J(eta) = c^T R c, without the ridge'''
        v = coef.vector
        return float(v @ self.penalty_matrix(ridge=0) @ v)


@dataclass(frozen=True, eq=False)
class EtaCoefficients():
    '''Coefficients of eta in a SplineBasis.

    Args:
        d_coef: null-space coefficients
        c_coef: kernel coefficients
    '''
    d_coef: np.ndarray
    c_coef: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.d_coef, self.c_coef])

    @classmethod
    def from_vector(cls, basis: SplineBasis, vector) -> 'EtaCoefficients':
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (basis.dim,):
            raise StructureError(f'expected {basis.dim} coefficients, got '
                                 f'{vector.shape}')
        return cls(d_coef=vector[:basis.null_dim].copy(),
                   c_coef=vector[basis.null_dim:].copy())

    @classmethod
    def zeros(cls, basis: SplineBasis) -> 'EtaCoefficients':
        return cls.from_vector(basis, np.zeros(basis.dim))


def build_basis(ds: SurvivalDataset, knots: np.ndarray,
                structure: Optional[Sequence[Term]] = None
                ) -> Tuple[SplineBasis, np.ndarray]:
    '''Builds the basis for the given knot rows and terms (by default, all
    the main effects). Returns the basis and its design matrix on the
    data.'''
    if structure is None:
        structure = default_structure(ds.q)
    structure = validate_structure(structure, ds.q)
    knots = np.asarray(knots, dtype=int)
    basis = SplineBasis(knots=ds.w[knots].copy(), knot_index=knots.copy(),
                        structure=structure, q=ds.q)
    return basis, basis.design(ds.w)


def evaluate(basis: SplineBasis, coef: EtaCoefficients, w) -> np.ndarray:
    '''Values of eta at the rows of w'''
    return basis.design(w) @ coef.vector


def grid_points(q: int, step: float = 0.01) -> np.ndarray:
    '''Regular grid on [0,1]^q (0, step, ..., 1 on each axis)'''
    axis = np.linspace(0, 1, int(round(1 / step)) + 1)
    if q == 1:
        return axis.reshape(-1, 1)
    g1, g2 = np.meshgrid(axis, axis, indexing='ij')
    return np.column_stack([g1.ravel(), g2.ravel()])
