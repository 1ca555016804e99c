"""Simulation step of the SAEM scheme: conditional draws of gamma, theta, c and x_mis."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._kernels import impute_rows_kernel
from .core import DegenerateConditionalError, _lambda_values
from .slope import penalty_by_rank
from .special import gammainc_lower, trunc_gamma_ppf

__all__ = [
    "MissingConditional",
    "gamma_inclusion_prob",
    "sample_gamma",
    "sample_theta",
    "sample_c",
    "draw_truncated_gamma",
    "precision_matrix",
    "missing_conditional",
    "sample_missing",
    "impute_missing",
    "imputation_covariance",
    "gibbs_sweep",
]

_P_MAX = float(np.nextafter(1.0, 0.0))
_P_MIN = 1e-300
_C_MIN = 1e-12
_JITTERS = (0.0, 1e-10, 1e-8)


def gamma_inclusion_prob(beta_j, rank_penalty, sigma, c, theta):
    """Posterior probability that a coefficient comes from the slab.

    Works on scalars or arrays. With ``L = rank_penalty * |beta_j| / sigma``
    the value is ``theta c e^{-cL} / ((1 - theta) e^{-L} + theta c e^{-cL})``,
    evaluated as a logistic function of the log-odds so large ``L`` cannot
    overflow.
    """
    if not (0.0 < c <= 1.0):
        raise ValueError("c must lie in (0, 1]")
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    L = np.asarray(rank_penalty, float) * np.abs(np.asarray(beta_j, float)) / sigma
    log_odds = math.log(theta) + math.log(c) - math.log1p(-theta) + (1.0 - c) * L
    prob = np.clip(expit(log_odds), _P_MIN, _P_MAX)
    return float(prob) if prob.ndim == 0 else prob


def sample_gamma(state, lam, rng):
    # ranks come from the previous iteration's weights
    pen = penalty_by_rank(state.w * state.beta, lam)
    prob = gamma_inclusion_prob(state.beta, pen, state.sigma, state.c, state.theta)
    return (rng.random(prob.shape[0]) < prob).astype(np.int8)


def sample_theta(gamma, a, b, rng):
    if not (a > 0 and b > 0):
        raise ValueError("Beta prior parameters must be positive")
    gamma = np.asarray(gamma)
    k = int(np.count_nonzero(gamma))
    theta = rng.beta(a + k, b + gamma.shape[0] - k)
    return float(min(max(theta, 1e-12), 1.0 - 1e-12))


def draw_truncated_gamma(shape, rate, rng):
    """One draw from Gamma(shape, rate) restricted to [0, 1].

    Inverse-cdf sampling in general; plain rejection from the untruncated law
    when at least 99% of its mass already lies in the interval. A zero rate
    gives the Beta(shape, 1) limit (uniform for ``shape = 1``).
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rate == 0.0:
        return rng.random() ** (1.0 / shape)
    if gammainc_lower(shape, rate) > 0.99:
        while True:
            x = rng.gamma(shape, 1.0 / rate)
            if x <= 1.0:
                return x
    return trunc_gamma_ppf(rng.random(), shape, rate)


def sample_c(gamma, beta, sigma, lam, w_prev, rng):
    gamma = np.asarray(gamma)
    on = gamma == 1
    pen = penalty_by_rank(np.asarray(w_prev) * np.asarray(beta), lam)
    shape = 1.0 + np.count_nonzero(on)
    rate = float(np.sum(np.abs(beta[on]) * pen[on])) / sigma
    c = draw_truncated_gamma(shape, rate, rng)
    return float(min(max(c, _C_MIN), 1.0))


def precision_matrix(Sigma):
    """Inverse of ``Sigma`` through a (jittered) Cholesky factorization."""
    Sigma = np.asarray(Sigma, float)
    p = Sigma.shape[0]
    scale = max(float(np.mean(np.diag(Sigma))), 1e-300)
    for jit in _JITTERS:
        try:
            L = np.linalg.cholesky(Sigma + jit * scale * np.eye(p))
        except np.linalg.LinAlgError:
            continue
        Linv = np.linalg.solve(L, np.eye(p))
        return Linv.T @ Linv
    raise DegenerateConditionalError("covariance matrix is not positive definite")


@dataclass
class MissingConditional:
    """Gaussian law of one row's missing covariates given the rest and the response.

    ``z = tau * x_mis`` is ``N(mu_tilde, B^{-1})``, ``B`` having unit diagonal.
    """
    index: np.ndarray
    mu_tilde: np.ndarray
    B: np.ndarray
    tau: np.ndarray

    @property
    def mean(self):
        return self.mu_tilde / self.tau

    @property
    def cov(self):
        return np.linalg.inv(self.B) / np.outer(self.tau, self.tau)

    def cholesky(self):
        m = self.B.shape[0]
        for jit in _JITTERS:
            try:
                return np.linalg.cholesky(self.B + jit * np.eye(m))
            except np.linalg.LinAlgError:
                continue
        raise DegenerateConditionalError("conditional precision B is not positive definite")


def missing_conditional(x_row, missing, y_i, beta, sigma, mu, Sigma=None, precision=None):
    """Build the conditional of the missing entries of ``x_row``.

    ``missing`` is a boolean mask or an index array. Pass ``precision``
    (``Sigma^{-1}``) to skip the inversion when many rows share one ``Sigma``.
    """
    x_row = np.asarray(x_row, float)
    beta = np.asarray(beta, float)
    p = x_row.shape[0]
    miss = np.asarray(missing)
    M = np.flatnonzero(miss) if miss.dtype == bool else np.asarray(miss, dtype=np.int64)
    if M.size == 0:
        raise ValueError("row has no missing entries")
    O = np.setdiff1d(np.arange(p), M)
    S = precision_matrix(Sigma) if precision is None else np.asarray(precision, float)
    inv_s2 = 1.0 / sigma ** 2

    m = S[M] @ mu
    u = S[np.ix_(M, O)] @ x_row[O]
    r = y_i - x_row[O] @ beta[O]
    bM = beta[M]
    tau = np.sqrt(np.diag(S)[M] + bM ** 2 * inv_s2)
    B = (np.outer(bM, bM) * inv_s2 + S[np.ix_(M, M)]) / np.outer(tau, tau)
    np.fill_diagonal(B, 1.0)
    rhs = (r * bM * inv_s2 + m - u) / tau
    cond = MissingConditional(index=M, mu_tilde=np.empty(M.size), B=B, tau=tau)
    L = cond.cholesky()
    cond.mu_tilde = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return cond


def sample_missing(cond, rng):
    """Draw ``x_mis`` from a :class:`MissingConditional`."""
    L = cond.cholesky()
    e = rng.standard_normal(cond.index.size)
    z = cond.mu_tilde + np.linalg.solve(L.T, e)
    return z / cond.tau


def _run_imputation(X, mask, y, beta, sigma, mu, precision, rng, want_cov):
    X = np.ascontiguousarray(X, dtype=float)
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    S = np.ascontiguousarray(precision, dtype=float)
    beta = np.ascontiguousarray(beta, dtype=float)
    Smu = S @ np.asarray(mu, float)
    if rng is None:
        noise = np.zeros((0, 0))
        draw = False
    else:
        noise = np.zeros(X.shape)
        noise[mask] = rng.standard_normal(int(mask.sum()))
        draw = True
    p = X.shape[1]
    V = np.zeros((p, p) if want_cov else (0, 0))
    out, bad = impute_rows_kernel(X, mask, np.ascontiguousarray(y, dtype=float), beta,
                                  float(sigma), Smu, S, noise, draw, V, want_cov)
    if bad >= 0:
        raise DegenerateConditionalError(f"row {bad}: conditional precision not positive definite")
    return out, V


def impute_missing(X, mask, y, beta, sigma, mu, precision, rng=None, return_cov=False):
    """Conditional mean (``rng=None``) or a conditional draw for every masked cell.

    Noise is drawn row-major over the masked cells, i.e. in the same order
    as calling :func:`sample_missing` row after row. With ``return_cov`` the
    summed conditional covariance ``V`` (see :func:`imputation_covariance`)
    is returned as well.
    """
    out, V = _run_imputation(X, mask, y, beta, sigma, mu, precision, rng, return_cov)
    return (out, V) if return_cov else out


def imputation_covariance(X, mask, y, beta, sigma, mu, precision):
    """Sum over rows of the conditional covariance of the missing cells, embedded in p x p.

    ``beta^T V beta`` is the part of the expected residual sum of squares
    that a conditional-mean imputation leaves out.
    """
    return _run_imputation(X, mask, y, beta, sigma, mu, precision, None, True)[1]


def gibbs_sweep(state, X, mask, y, lam, a, b, rng, precision=None):
    """One Gibbs pass in the order gamma, theta, c, x_mis.

    Returns ``(gamma, theta, c, X_imputed)``; rows without missing cells are
    left untouched.
    """
    lam = _lambda_values(lam)
    gamma = sample_gamma(state, lam, rng)
    theta = sample_theta(gamma, a, b, rng)
    c = sample_c(gamma, state.beta, state.sigma, lam, state.w, rng)
    if mask.any():
        S = precision_matrix(state.Sigma) if precision is None else precision
        X_new = impute_missing(X, mask, y, state.beta, state.sigma, state.mu, S, rng)
    else:
        X_new = np.array(X, dtype=float, copy=True)
    return gamma, theta, c, X_new
