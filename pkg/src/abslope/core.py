"""Data containers, penalty sequences and the standardization bookkeeping."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .special import normal_cdf, normal_quantile

__all__ = [
    "UnusableColumnError",
    "DegenerateConditionalError",
    "Dataset",
    "LambdaSequence",
    "ModelState",
    "Hyperparams",
    "ScalingInfo",
    "normal_cdf",
    "normal_quantile",
    "bh_lambda",
    "initial_standardize",
    "rescale_iteration",
    "read_csv",
]


class UnusableColumnError(ValueError):
    """A covariate column cannot be standardized (too few observations or constant)."""

    def __init__(self, column, reason):
        self.column = column
        super().__init__(f"column {column!r}: {reason}")


class DegenerateConditionalError(np.linalg.LinAlgError):
    """Conditional precision of the missing covariates is not positive definite."""


@dataclass(frozen=True)
class Dataset:
    """Response, covariates and the explicit missingness mask (``True`` = missing).

    Masked entries of ``X`` carry no information and are stored as NaN,
    unless ``imputed`` is set, in which case they hold current imputations.
    """
    y: np.ndarray
    X: np.ndarray
    mask: np.ndarray
    centered: bool = False
    columns: tuple | None = None
    imputed: bool = False

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != X.shape:
            raise ValueError(f"mask shape {mask.shape} != X shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise ValueError("y and X have different numbers of rows")
        if not np.all(np.isfinite(y)):
            raise ValueError("the response may not contain missing or non-finite values")
        if self.imputed:
            if not np.all(np.isfinite(X)):
                raise ValueError("imputed covariates must be finite")
        else:
            if not np.all(np.isfinite(X[~mask])):
                raise ValueError("observed covariates must be finite")
            X[mask] = np.nan
        if self.columns is not None and len(self.columns) != X.shape[1]:
            raise ValueError("column names do not match the number of covariates")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_arrays(cls, X, y, mask=None, **kw):
        X = np.asarray(X, dtype=float)
        if mask is None:
            mask = ~np.isfinite(X)
        return cls(y=y, X=X, mask=mask, **kw)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def has_missing(self):
        return bool(self.mask.any())


@dataclass(frozen=True)
class LambdaSequence:
    """Non-increasing, nonnegative penalty weights."""
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("empty lambda sequence")
        if not np.all(np.isfinite(v)):
            raise ValueError("lambda values must be finite")
        if np.any(np.diff(v) > 0):
            raise ValueError("lambda sequence must be non-increasing")
        if v[-1] < 0:
            raise ValueError("lambda sequence must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __getitem__(self, item):
        return self.values[item]


def _lambda_values(lam):
    return np.asarray(lam.values if isinstance(lam, LambdaSequence) else lam, dtype=float)


@dataclass
class ModelState:
    beta: np.ndarray
    sigma: float
    gamma: np.ndarray
    c: float
    theta: float
    mu: np.ndarray
    Sigma: np.ndarray

    @property
    def w(self):
        """Diagonal of the weight matrix, ``c`` on included coordinates and 1 elsewhere."""
        return 1.0 - (1.0 - self.c) * np.asarray(self.gamma, dtype=float)

    def copy(self):
        return ModelState(
            beta=self.beta.copy(), sigma=float(self.sigma), gamma=self.gamma.copy(),
            c=float(self.c), theta=float(self.theta), mu=self.mu.copy(), Sigma=self.Sigma.copy(),
        )


@dataclass(frozen=True)
class Hyperparams:
    """User-facing settings. ``a``/``b`` default to ``2/p`` and ``1 - 2/p``."""
    q: float = 0.1
    a: float | None = None
    b: float | None = None
    t0: int = 20
    max_iter: int = 500
    tol: float = 1e-6
    shrink: bool | None = None  # None: Ledoit-Wolf when p > n/2
    c_init: str = "posterior"

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise ValueError("q must lie in (0, 1)")
        if self.a is not None and self.a <= 0:
            raise ValueError("a must be positive")
        if self.b is not None and self.b <= 0:
            raise ValueError("b must be positive")
        if self.t0 < 1:
            raise ValueError("t0 must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.c_init not in ("posterior", "heuristic"):
            raise ValueError("c_init must be 'posterior' or 'heuristic'")

    def resolved(self, p):
        """Return ``(a, b)`` with the sparse default filled in for ``p`` covariates."""
        a = self.a if self.a is not None else 2.0 / p
        b = self.b if self.b is not None else 1.0 - 2.0 / p
        if b <= 0:
            # p <= 2 makes the default b non-positive
            b = 1.0
        return a, b


@dataclass(frozen=True)
class ScalingInfo:
    """Column means ``m``, population sds ``s``, response mean and the row count."""
    m: np.ndarray
    s: np.ndarray
    y_mean: float
    n: int = field(default=0)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if np.any(~(s > 0)):
            raise ValueError("scaling sds must be positive")

    def to_dict(self):
        return {"m": self.m.tolist(), "s": self.s.tolist(), "y_mean": self.y_mean, "n": self.n}

    @classmethod
    def from_dict(cls, d):
        return cls(m=np.asarray(d["m"], float), s=np.asarray(d["s"], float),
                   y_mean=float(d["y_mean"]), n=int(d["n"]))

    def transform(self, X):
        """Map raw covariates onto the standardized scale of the fit."""
        return (np.asarray(X, float) - self.m) / (math.sqrt(self.n) * self.s)


def bh_lambda(p, q):
    """Benjamini-Hochberg style sequence ``Phi^{-1}(1 - j q / (2p))``, j = 1..p."""
    p = int(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    if not (0.0 < q < 1.0):
        raise ValueError("q must lie in (0, 1)")
    vals = np.array([normal_quantile(1.0 - j * q / (2.0 * p)) for j in range(1, p + 1)])
    return LambdaSequence(vals)


def _column_stats(X, columns=None):
    m = X.mean(axis=0)
    s = X.std(axis=0)
    for j in np.flatnonzero(~(s > 1e-12 * np.maximum(1.0, np.abs(m)))):
        name = columns[j] if columns is not None else j
        raise UnusableColumnError(name, "zero variance after imputation")
    return m, s


def initial_standardize(data):
    """Mean-impute, center and scale every column to unit l2 norm; center ``y``.

    Returns the transformed :class:`Dataset` (mask preserved, masked cells
    holding their imputed values) and the :class:`ScalingInfo` used.
    """
    X = data.X.copy()
    n = X.shape[0]
    n_obs = (~data.mask).sum(axis=0)
    for j in range(data.p):
        name = data.columns[j] if data.columns is not None else j
        if n_obs[j] < 2:
            raise UnusableColumnError(name, f"only {n_obs[j]} observed values")
        obs = X[~data.mask[:, j], j]
        if np.ptp(obs) == 0:
            raise UnusableColumnError(name, "observed values are constant")
        X[data.mask[:, j], j] = obs.mean()
    m, s = _column_stats(X, data.columns)
    Xs = (X - m) / (math.sqrt(n) * s)
    y_mean = float(data.y.mean()) if not data.centered else 0.0
    out = Dataset(y=data.y - y_mean, X=Xs, mask=data.mask, centered=True,
                  columns=data.columns, imputed=True)
    return out, ScalingInfo(m=m, s=s, y_mean=y_mean, n=n)


def rescale_iteration(X_imputed, scaling, columns=None):
    """Undo the previous scaling, recompute column moments and re-standardize."""
    X_imputed = np.asarray(X_imputed, dtype=float)
    if X_imputed.shape[1] != scaling.m.shape[0]:
        raise ValueError("matrix width does not match the scaling vectors")
    n = X_imputed.shape[0]
    raw = X_imputed * (math.sqrt(n) * scaling.s) + scaling.m
    m, s = _column_stats(raw, columns)
    Xs = (raw - m) / (math.sqrt(n) * s)
    return Xs, ScalingInfo(m=m, s=s, y_mean=scaling.y_mean, n=n)


_NA_TOKENS = {"", "NA", "na", "NaN", "nan"}


def _parse_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    values = np.full((len(body), len(header)), np.nan)
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(r)} fields, expected {len(header)}")
        for j, cell in enumerate(r):
            cell = cell.strip()
            if cell in _NA_TOKENS:
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {cell!r} in column {header[j]!r}") from None
    return header, values


def read_csv(path, response=None):
    """Load a numeric CSV with a header row; empty cells or ``NA`` are missing.

    With ``response`` given, that column becomes ``y`` and must be complete.
    Without it, a :class:`Dataset` cannot be formed and ``(header, X, mask)``
    is returned for covariate-only files.
    """
    header, values = _parse_table(path)
    if response is None:
        return header, values, np.isnan(values)
    if response not in header:
        raise ValueError(f"{path}: response column {response!r} not found")
    k = header.index(response)
    y = values[:, k]
    if np.isnan(y).any():
        raise ValueError(f"{path}: response column {response!r} has missing values")
    cols = tuple(h for j, h in enumerate(header) if j != k)
    X = np.delete(values, k, axis=1)
    return Dataset(y=y, X=X, mask=np.isnan(X), columns=cols)
