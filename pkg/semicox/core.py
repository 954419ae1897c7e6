# coding: utf-8
"""This module implements the data model for right-censored survival data.

A SurvivalDataset holds the follow-up times, the failure indicators, the
parametric covariates U and the nonparametric covariates W (rescaled to [0,1],
which is the domain of the spline kernels). A RiskSet holds, for each failure,
the subjects still under observation at that time."""

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .exceptions import DataError

MAX_NONPARAMETRIC = 2


def _frozen(values, dtype=float) -> np.ndarray:
    '''Returns a read-only copy of values'''
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _as_matrix(values, n: int, name: str) -> np.ndarray:
    if values is None:
        return np.zeros((n, 0))

    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(n, -1) if arr.size else np.zeros((n, 0))
    if arr.ndim != 2 or arr.shape[0] != n:
        raise DataError(f'{name} must have one row per observation ({n}), '
                        f'got shape {arr.shape}')
    return arr


@dataclass(frozen=True, eq=False)
class SurvivalDataset():
    '''Right-censored observations (X_i, Delta_i, U_i, W_i), i = 1..n.

    Build it with from_arrays() (or load_dataset()), which validates the data,
    rescales W and precomputes the failure ordering. Arrays are read-only, so
    a dataset can be shared between threads and worker processes.

    Args:
        times: follow-up times X_i, nonnegative
        events: failure indicators Delta_i
        u: n x d matrix of parametric covariates (d may be 0)
        w: n x q matrix of nonparametric covariates rescaled to [0,1]
        failure_order: indices of the failed subjects sorted by time
        w_min, w_max: original range of each W column, used to go back to
            the original scale
        u_names, w_names: column names
    '''
    times: np.ndarray
    events: np.ndarray
    u: np.ndarray
    w: np.ndarray
    failure_order: np.ndarray
    w_min: np.ndarray
    w_max: np.ndarray
    u_names: Tuple[str, ...]
    w_names: Tuple[str, ...]

    @classmethod
    def from_arrays(cls, times, events, u=None, w=None,
                    u_names: Optional[Sequence[str]] = None,
                    w_names: Optional[Sequence[str]] = None,
                    rescale: bool = True) -> 'SurvivalDataset':
        '''Validates the arrays and builds a dataset.

        If rescale is True, each W column is mapped affinely to [0,1] using its
        observed minimum and maximum. If it is False, W must already be in
        [0,1] (as in simulated data) and is stored unchanged.
        '''
        times = np.asarray(times, dtype=float).ravel()
        n = times.shape[0]
        if n < 2:
            raise DataError(f'At least 2 observations are required, got {n}')
        if not np.all(np.isfinite(times)):
            raise DataError('times contain NaN or infinite values')
        if np.any(times < 0):
            raise DataError('times must be nonnegative')

        raw_events = np.asarray(events).ravel()
        if raw_events.shape[0] != n:
            raise DataError(f'events must have {n} values, got '
                            f'{raw_events.shape[0]}')
        numeric_events = raw_events.astype(float)
        if np.any(np.isnan(numeric_events)) or \
                not np.all(np.isin(numeric_events, (0, 1))):
            raise DataError('invalid status: event indicators must be 0 or 1')
        events = numeric_events == 1
        if not events.any():
            raise DataError('all observations are censored (no failures)')

        u = _as_matrix(u, n, 'u')
        if w is None:
            raise DataError('at least one nonparametric covariate is required')
        w = _as_matrix(w, n, 'w')
        q = w.shape[1]
        if not 1 <= q <= MAX_NONPARAMETRIC:
            raise DataError(f'1 or {MAX_NONPARAMETRIC} nonparametric '
                            f'covariates are supported, got {q}')
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
            raise DataError('covariates contain NaN or infinite values')

        u_names = tuple(u_names) if u_names is not None else \
            tuple(f'u{j + 1}' for j in range(u.shape[1]))
        w_names = tuple(w_names) if w_names is not None else \
            tuple(f'w{j + 1}' for j in range(q))
        if len(u_names) != u.shape[1] or len(w_names) != q:
            raise DataError('the number of column names does not match the '
                            'number of covariates')

        if rescale:
            w_min = w.min(axis=0)
            w_max = w.max(axis=0)
            span = w_max - w_min
            for name, s in zip(w_names, span):
                if s <= 0:
                    raise DataError(f'nonparametric covariate {name} is '
                                    'constant')
            w = (w - w_min) / span
        else:
            if np.any(w < 0) or np.any(w > 1):
                raise DataError('nonparametric covariates must lie in [0,1] '
                                'when rescale is disabled')
            w_min = np.zeros(q)
            w_max = np.ones(q)

        failure_order = _failure_order(times, events)

        return cls(times=_frozen(times), events=_frozen(events, bool),
                   u=_frozen(u), w=_frozen(w),
                   failure_order=_frozen(failure_order, int),
                   w_min=_frozen(w_min), w_max=_frozen(w_max),
                   u_names=u_names, w_names=w_names)

    @property
    def n(self) -> int:
        '''Number of observations'''
        return self.times.shape[0]

    @property
    def d(self) -> int:
        '''Number of parametric covariates'''
        return self.u.shape[1]

    @property
    def q(self) -> int:
        '''Number of nonparametric covariates'''
        return self.w.shape[1]

    @property
    def n_failures(self) -> int:
        '''Number of observed failures (N)'''
        return self.failure_order.shape[0]

    @property
    def censoring_rate(self) -> float:
        return 1 - self.n_failures / self.n

    def w_original(self, w_scaled: Optional[np.ndarray] = None) -> np.ndarray:
        '''Maps rescaled W values (by default, the stored ones) back to the
        original scale'''
        if w_scaled is None:
            w_scaled = self.w
        w_scaled = np.asarray(w_scaled, dtype=float)
        return self.w_min + w_scaled * (self.w_max - self.w_min)

    def w_rescaled(self, w_orig) -> np.ndarray:
        '''Maps values in the original scale of W to [0,1]'''
        w_orig = np.asarray(w_orig, dtype=float)
        return (w_orig - self.w_min) / (self.w_max - self.w_min)

    def select_u(self, columns: Sequence[int]) -> 'SurvivalDataset':
        '''Returns a dataset with only the given parametric columns'''
        columns = list(columns)
        return replace(self, u=_frozen(self.u[:, columns].reshape(self.n, -1)),
                       u_names=tuple(self.u_names[j] for j in columns))

    def permuted(self, order: Sequence[int]) -> 'SurvivalDataset':
        '''Returns the same observations in another row order'''
        order = np.asarray(order)
        times = self.times[order]
        events = self.events[order]
        return replace(self, times=_frozen(times),
                       events=_frozen(events, bool),
                       u=_frozen(self.u[order]), w=_frozen(self.w[order]),
                       failure_order=_frozen(_failure_order(times, events),
                                             int))


def _failure_order(times: np.ndarray, events: np.ndarray) -> np.ndarray:
    failed = np.flatnonzero(events)
    return failed[np.argsort(times[failed], kind='mergesort')]


def as_parametric(ds: SurvivalDataset) -> SurvivalDataset:
    '''Returns the dataset of the parametric relative risk model: the W
    columns, in their original scale, are appended to U. W is kept so that
    the dataset stays valid, but it is not used when the model is fitted
    without nonparametric terms.'''
    u = np.hstack([ds.u, ds.w_original()])
    return replace(ds, u=_frozen(u), u_names=ds.u_names + ds.w_names)


@dataclass(frozen=True, eq=False)
class RiskSet():
    '''Risk sets of a dataset: indicator[p, k] is Y_k(X_{i_p}), i.e., True if
    subject k is still at risk at the time of the p-th failure.

    Args:
        failures: indices (i_1, ..., i_N) of the failed subjects sorted by
            time
        indicator: N x n boolean matrix
    '''
    failures: np.ndarray
    indicator: np.ndarray

    def members(self, p: int) -> np.ndarray:
        '''Returns the indices of the subjects at risk at the p-th failure'''
        return np.flatnonzero(self.indicator[p])

    def sizes(self) -> np.ndarray:
        '''Returns the size of each risk set'''
        return self.indicator.sum(axis=1)


def build_risk_sets(ds: SurvivalDataset) -> RiskSet:
    '''Builds the risk sets {k : X_k >= X_{i_p}} for each failure. Subjects
    censored at a failure time are at risk, and tied failures share the same
    risk set (Breslow convention).'''
    if ds.n_failures == 0:
        raise DataError('risk sets need at least one failure')
    failure_times = ds.times[ds.failure_order]
    indicator = ds.times[np.newaxis, :] >= failure_times[:, np.newaxis]
    return RiskSet(failures=ds.failure_order,
                   indicator=_frozen(indicator, bool))


@dataclass(frozen=True)
class ColumnSchema():
    '''Roles of the columns of a CSV file.

    Args:
        time: name of the follow-up time column
        status: name of the 0/1 failure indicator column
        nonparametric: names of the columns that form W (1 or 2)
        parametric: names of the columns that form U. If None, every column
            not used in the other roles is parametric
    '''
    time: str
    status: str
    nonparametric: Tuple[str, ...]
    parametric: Optional[Tuple[str, ...]] = None

    def resolve(self, header: Sequence[str]) -> Tuple[str, ...]:
        '''Returns the parametric columns, checking the schema against the
        header of the file'''
        named = [self.time, self.status, *self.nonparametric]
        if self.parametric is not None:
            named += list(self.parametric)

        missing = [c for c in named if c not in header]
        if missing:
            raise DataError(f'missing columns in the data file: {missing}')

        repeated = sorted({c for c in named if named.count(c) > 1})
        if repeated:
            raise DataError(f'columns assigned to more than one role: '
                            f'{repeated}')

        if not 1 <= len(self.nonparametric) <= MAX_NONPARAMETRIC:
            raise DataError(f'1 or {MAX_NONPARAMETRIC} nonparametric columns '
                            f'are supported, got {len(self.nonparametric)}')

        if self.parametric is not None:
            return tuple(self.parametric)

        used = {self.time, self.status, *self.nonparametric}
        return tuple(c for c in header if c not in used)


def load_dataset(path: str, schema: ColumnSchema) -> SurvivalDataset:
    '''Reads a comma-separated file with a header row and returns a validated
    dataset. Rows with missing values are rejected (with a warning), never
    imputed.'''
    header = pd.read_csv(path, header=None, nrows=1, dtype=str,
                         encoding='utf-8').iloc[0].fillna('').str.strip()
    header = header.tolist()

    duplicated = sorted({c for c in header if header.count(c) > 1})
    if duplicated:
        raise DataError(f'duplicate column names: {duplicated}')

    parametric = schema.resolve(header)

    df = pd.read_csv(path, dtype=str, skipinitialspace=True, encoding='utf-8')
    df.columns = header
    columns = [schema.time, schema.status, *parametric,
               *schema.nonparametric]
    df = df[columns]

    missing = df.isna().any(axis=1)
    if missing.any():
        warnings.warn(f'{int(missing.sum())} rows with missing values were '
                      f'rejected from {path}')
        df = df[~missing]

    numeric = df.apply(lambda col: pd.to_numeric(col.str.strip(),
                                                 errors='coerce'))
    bad = numeric.isna() & df.notna()
    if bad.any().any():
        col = bad.any()[bad.any()].index[0]
        row = bad[col][bad[col]].index[0]
        raise DataError(f'non-numeric value "{df.at[row, col]}" in column '
                        f'{col}, line {row + 2}')

    status = numeric[schema.status]
    if not status.isin([0, 1]).all():
        wrong = status[~status.isin([0, 1])].iloc[0]
        raise DataError(f'invalid status value {wrong} in column '
                        f'{schema.status}: it must be 0 or 1')

    return SurvivalDataset.from_arrays(
        times=numeric[schema.time].to_numpy(),
        events=status.to_numpy().astype(int),
        u=numeric[list(parametric)].to_numpy(),
        w=numeric[list(schema.nonparametric)].to_numpy(),
        u_names=parametric, w_names=schema.nonparametric, rescale=True)
