"""ABSLOPE fitted by stochastic approximation EM."""
from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import (
    Hyperparams,
    ModelState,
    ScalingInfo,
    _lambda_values,
    bh_lambda,
    initial_standardize,
    rescale_iteration,
)
from .sampler import gibbs_sweep, precision_matrix
from .slope import penalty_by_rank, solve_weighted_slope, sorted_l1_norm
from .special import trunc_gamma_mean

__all__ = [
    "Params",
    "FitResult",
    "complete_log_likelihood",
    "update_sigma",
    "ledoit_wolf",
    "update_mu_sigma",
    "sa_update",
    "step_size",
    "lasso_init",
    "initialize",
    "m_step",
    "fit_abslope",
]

_SHRINK_FLOOR = 1e-12
_C_MIN = 1e-12


class Params(NamedTuple):
    """Parameters averaged by the stochastic approximation step."""
    beta: np.ndarray
    sigma: float
    mu: np.ndarray
    Sigma: np.ndarray


@dataclass
class FitResult:
    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    sigma_hat: float
    theta_hat: float
    c_hat: float
    scaling: ScalingInfo
    mu: np.ndarray
    Sigma: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    method: str = "abslope"
    lam: np.ndarray | None = None
    inclusion_freq: np.ndarray | None = None
    X_imputed: np.ndarray | None = None
    columns: tuple | None = None
    runtime: float = 0.0

    @property
    def selected(self):
        return np.flatnonzero(self.gamma_hat)

    def to_dict(self):
        """JSON-ready model description; enough to predict on new rows."""
        return {
            "method": self.method,
            "beta": (self.beta_hat + 0.0).tolist(),  # no negative zeros
            "gamma": [int(g) for g in self.gamma_hat],
            "sigma": self.sigma_hat,
            "theta": self.theta_hat,
            "c": self.c_hat,
            "scaling": self.scaling.to_dict(),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "mu": self.mu.tolist(),
            "Sigma": self.Sigma.tolist(),
            "lambda": None if self.lam is None else self.lam.tolist(),
            "columns": None if self.columns is None else list(self.columns),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            beta_hat=np.asarray(d["beta"], float),
            gamma_hat=np.asarray(d["gamma"], np.int8),
            sigma_hat=float(d["sigma"]),
            theta_hat=float(d["theta"]),
            c_hat=float(d["c"]),
            scaling=ScalingInfo.from_dict(d["scaling"]),
            mu=np.asarray(d["mu"], float),
            Sigma=np.asarray(d["Sigma"], float),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            method=d.get("method", "abslope"),
            lam=None if d.get("lambda") is None else np.asarray(d["lambda"], float),
            columns=None if d.get("columns") is None else tuple(d["columns"]),
        )

    def write_trace(self, path):
        cols = ["iteration", "eta", "sigma", "theta", "c", "nnz", "objective"]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for row in self.trace:
                wr.writerow([row[k] if k in ("iteration", "nnz") else repr(float(row[k]))
                             for k in cols])


# ---------------------------------------------------------------------------
# likelihood pieces and M-step


def complete_log_likelihood(state, X, y, lam):
    """Penalized complete-data log-likelihood at a fully imputed ``X``.

    Covariate term summed over rows, regression term, Bernoulli terms for
    ``gamma`` and the weighted sorted-l1 penalty.
    """
    X = np.asarray(X, float)
    n, p = X.shape
    gamma = np.asarray(state.gamma, float)
    try:
        L = np.linalg.cholesky(state.Sigma)
    except np.linalg.LinAlgError:
        raise ValueError("Sigma is not positive definite") from None
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    Z = np.linalg.solve(L, (X - state.mu).T)
    cov_term = -0.5 * n * (p * math.log(2.0 * math.pi) + logdet) - 0.5 * float(np.sum(Z * Z))
    r = y - X @ state.beta
    reg_term = -n * math.log(state.sigma) - float(r @ r) / (2.0 * state.sigma ** 2)
    k = float(np.sum(gamma))
    bern = k * math.log(state.theta) + (p - k) * math.log1p(-state.theta)
    pen = sorted_l1_norm(state.w * state.beta, lam) / state.sigma
    return cov_term + reg_term + bern - pen


def update_sigma(beta, w, lam, rss, n):
    """Positive root of ``n s^2 - P s - RSS = 0`` with ``P`` the weighted sorted-l1 penalty."""
    if rss < 0 or n < 1:
        raise ValueError("rss must be >= 0 and n >= 1")
    P = sorted_l1_norm(np.asarray(w) * np.asarray(beta), lam)
    return (P + math.sqrt(P * P + 4.0 * n * rss)) / (2.0 * n)


def ledoit_wolf(X):
    """Ledoit-Wolf linear shrinkage of the (1/n) sample covariance towards ``m I``.

    Returns ``(Sigma, rho1, rho2)`` with ``Sigma = rho1 I + rho2 S``.
    """
    X = np.asarray(X, float)
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / n
    m = np.trace(S) / p
    d2 = np.sum((S - m * np.eye(p)) ** 2) / p
    # (1/n^2) sum_k ||x_k x_k^T - S||^2 / p without forming the n outer products
    sq = np.sum(Xc * Xc, axis=1)
    b2_bar = (np.sum(sq * sq) - n * np.sum(S * S)) / (n * n * p)
    if d2 <= 0.0:
        shrink = 1.0 if m == 0.0 else 0.0
    else:
        shrink = min(max(b2_bar, 0.0), d2) / d2
    rho1 = max(shrink * m, _SHRINK_FLOOR)
    rho2 = 1.0 - shrink
    return rho1 * np.eye(p) + rho2 * S, rho1, rho2


def update_mu_sigma(X, shrink):
    """Empirical mean and covariance (1/n); Ledoit-Wolf covariance when ``shrink``."""
    X = np.asarray(X, float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    mu = X.mean(axis=0)
    if shrink:
        Sigma = ledoit_wolf(X)[0]
    else:
        Xc = X - mu
        Sigma = Xc.T @ Xc / n
    return mu, Sigma


def sa_update(prev, mle, eta):
    """``psi <- psi + eta (psi_mle - psi)`` for every field of :class:`Params`."""
    if not (0.0 <= eta <= 1.0):
        raise ValueError("eta must lie in [0, 1]")
    if eta == 1.0:
        return Params(*(np.copy(v) if isinstance(v, np.ndarray) else v for v in mle))
    if eta == 0.0:
        return Params(*(np.copy(v) if isinstance(v, np.ndarray) else v for v in prev))
    return Params(*(p_ + eta * (m_ - p_) for p_, m_ in zip(prev, mle)))


def step_size(t, t0):
    if t < 1:
        raise ValueError("iteration index starts at 1")
    return 1.0 if t <= t0 else 1.0 / (t - t0)


def _use_shrinkage(hyper, n, p):
    return hyper.shrink if hyper.shrink is not None else p > n / 2


def m_step(X, y, lam, w, sigma_prev, beta_prev, shrink, V=None):
    """Complete-data maximization given weights and an imputed design.

    ``V`` (summed conditional covariance of imputed cells) adds
    ``beta^T V beta`` to the residual sum of squares in the sigma update.
    Returns ``(Params, slope_converged)``.
    """
    sol = solve_weighted_slope(X, y, lam, w, sigma_prev, beta0=beta_prev)
    r = y - X @ sol.beta
    rss = float(r @ r)
    if V is not None:
        rss += float(sol.beta @ V @ sol.beta)
    sigma = update_sigma(sol.beta, w, lam, rss, X.shape[0])
    mu, Sigma = update_mu_sigma(X, shrink)
    return Params(sol.beta, sigma, mu, Sigma), sol.converged


# ---------------------------------------------------------------------------
# initialization


def lasso_init(X, y, seed=0, n_alphas=40, rule="min"):
    """Cross-validated lasso on a mean-imputed, standardized design.

    Five shuffled folds (``seed``) over a log grid from ``max |X^T y| / n``
    down to 1e-3 of it. ``rule="1se"`` picks the largest penalty whose CV
    error is within one standard error of the minimum; ``"min"`` the minimizer.
    """
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.linear_model import Lasso, LassoCV
    from sklearn.model_selection import KFold

    if rule not in ("1se", "min"):
        raise ValueError("rule must be '1se' or 'min'")
    n = X.shape[0]
    alpha_max = float(np.max(np.abs(X.T @ y))) / n
    if alpha_max == 0.0:
        return np.zeros(X.shape[1])
    alphas = alpha_max * np.geomspace(1.0, 1e-3, n_alphas)
    n_folds = min(5, n)
    folds = KFold(n_splits=n_folds, shuffle=True, random_state=int(seed) % 2**32)
    cv = LassoCV(alphas=alphas, cv=folds, fit_intercept=False, max_iter=20000, tol=1e-4)
    with warnings.catch_warnings():
        # a rough starting point is enough; unconverged small-penalty paths are harmless
        warnings.simplefilter("ignore", ConvergenceWarning)
        cv.fit(X, y)
    if rule == "min":
        return np.asarray(cv.coef_, float)
    err = cv.mse_path_.mean(axis=1)
    se = cv.mse_path_.std(axis=1, ddof=1) / math.sqrt(n_folds)
    best = int(np.argmin(err))
    ok = np.flatnonzero(err <= err[best] + se[best])
    alpha = float(cv.alphas_[ok].max())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = Lasso(alpha=alpha, fit_intercept=False, max_iter=20000, tol=1e-4).fit(X, y)
    return np.asarray(model.coef_, float)


def initialize(data, hyper, lam=None, seed=0, beta0=None):
    """Starting state on a standardized, mean-imputed dataset.

    ``data`` must come from :func:`initial_standardize`. ``beta0`` bypasses
    the lasso fit. ``c`` starts at its conditional mean given the lasso
    support (``hyper.c_init="posterior"``) or at the inverse average
    magnitude rule ``min(sigma lam_1 (k + 1) / sum |beta|, 1)`` (``"heuristic"``).
    """
    X, y = data.X, data.y
    n, p = X.shape
    a, b = hyper.resolved(p)
    lam = bh_lambda(p, hyper.q).values if lam is None else _lambda_values(lam)
    if beta0 is None:
        beta0 = lasso_init(X, y, seed)
    beta0 = np.asarray(beta0, float)
    support = np.abs(beta0) > 0
    k = int(support.sum())
    r = y - X @ beta0
    sigma0 = float(np.sqrt(r @ r / (n - 1)))
    if sigma0 <= 0:
        sigma0 = float(np.std(y)) or 1.0
    if k == 0:
        c0 = 1.0
    elif hyper.c_init == "heuristic":
        avg = np.sum(np.abs(beta0)) / (k + 1)
        c0 = min(sigma0 * lam[0] / avg, 1.0)
    else:
        # conditional mean of c given the lasso support as gamma
        rate = float(np.sum(np.abs(beta0) * penalty_by_rank(beta0, lam) * support)) / sigma0
        c0 = min(max(trunc_gamma_mean(1.0 + k, rate), _C_MIN), 1.0)
    theta0 = (k + a) / (p + b)
    theta0 = min(max(theta0, 1e-12), 1.0 - 1e-12)
    mu0, Sigma0 = update_mu_sigma(X, _use_shrinkage(hyper, n, p))
    return ModelState(beta=beta0, sigma=sigma0, gamma=support.astype(np.int8), c=c0,
                      theta=theta0, mu=mu0, Sigma=Sigma0)


def _trace_row(t, eta, state, X, y, lam):
    return {
        "iteration": t,
        "eta": eta,
        "sigma": state.sigma,
        "theta": state.theta,
        "c": state.c,
        "nnz": int(np.count_nonzero(state.beta)),
        "objective": complete_log_likelihood(state, X, y, lam),
        "beta": state.beta.copy(),
    }


def fit_abslope(data, hyper=None, seed=0, lam=None, beta0=None, record_trace=True):
    """Fit ABSLOPE by SAEM.

    Each iteration draws (gamma, theta, c, x_mis) by one Gibbs sweep,
    re-standardizes the completed design, maximizes the complete-data
    likelihood and averages the parameters with step ``step_size(t, t0)``.
    Stops once ``||beta_{t+1} - beta_t||^2 < tol`` or after ``max_iter``.
    """
    hyper = hyper or Hyperparams()
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    std, scaling = initial_standardize(data)
    X, y, mask = std.X, std.y, std.mask
    n, p = X.shape
    a, b = hyper.resolved(p)
    lam = bh_lambda(p, hyper.q).values if lam is None else _lambda_values(lam)
    shrink = _use_shrinkage(hyper, n, p)
    state = initialize(std, hyper, lam, seed, beta0)

    trace = []
    gamma_sum = np.zeros(p)
    n_late = 0
    converged = False
    t = 0
    for t in range(1, hyper.max_iter + 1):
        S = precision_matrix(state.Sigma)
        gamma, theta, c, X_new = gibbs_sweep(state, X, mask, y, lam, a, b, rng, S)
        if mask.any():
            X_new, scaling = rescale_iteration(X_new, scaling, data.columns)
        w = 1.0 - (1.0 - c) * gamma
        mle, _ = m_step(X_new, y, lam, w, state.sigma, state.beta, shrink)
        eta = step_size(t, hyper.t0)
        new = sa_update(Params(state.beta, state.sigma, state.mu, state.Sigma), mle, eta)
        step = float(np.sum((new.beta - state.beta) ** 2))
        state = ModelState(beta=new.beta, sigma=float(new.sigma), gamma=gamma, c=c,
                           theta=theta, mu=new.mu, Sigma=new.Sigma)
        X = X_new
        if t > hyper.t0:
            gamma_sum += gamma
            n_late += 1
        if record_trace:
            trace.append(_trace_row(t, eta, state, X, y, lam))
        # burn-in draws are too erratic for the stopping rule
        if t > hyper.t0 and step < hyper.tol:
            converged = True
            break

    freq = gamma_sum / n_late if n_late else state.gamma.astype(float)
    return FitResult(
        beta_hat=state.beta, gamma_hat=state.gamma.astype(np.int8), sigma_hat=state.sigma,
        theta_hat=state.theta, c_hat=state.c, scaling=scaling, mu=state.mu, Sigma=state.Sigma,
        trace=trace, converged=converged, iterations=t, method="abslope", lam=lam,
        inclusion_freq=freq, X_imputed=X, columns=data.columns,
        runtime=time.perf_counter() - t_start,
    )
