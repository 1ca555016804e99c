"""Sorted-l1 penalty, its proximal operator and the (weighted) SLOPE solver."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import admm_kernel, prox_sorted_l1_kernel
from .core import _lambda_values

__all__ = [
    "SlopeSolution",
    "rank_order",
    "penalty_by_rank",
    "sorted_l1_norm",
    "prox_sorted_l1",
    "slope_objective",
    "solve_slope",
    "solve_weighted_slope",
]

ADMM_MAX_ITER = 5000


@dataclass
class SlopeSolution:
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool


def _check_lengths(a, lam):
    if a.shape[0] != lam.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} coefficients, {lam.shape[0]} penalties")


def rank_order(v):
    """Indices sorting ``|v|`` descending; ties keep the lower index first."""
    return np.argsort(-np.abs(np.asarray(v, float)), kind="stable")


def penalty_by_rank(v, lam):
    """``lam[r(v, j)]`` for every coordinate ``j`` (0-based ranks)."""
    v = np.asarray(v, dtype=float)
    lam = _lambda_values(lam)
    _check_lengths(v, lam)
    out = np.empty_like(lam)
    out[rank_order(v)] = lam
    return out


def sorted_l1_norm(beta, lam):
    """``sum_j lam_j |beta|_(j)`` with magnitudes sorted in decreasing order."""
    beta = np.asarray(beta, dtype=float)
    lam = _lambda_values(lam)
    _check_lengths(beta, lam)
    return float(np.sort(np.abs(beta))[::-1] @ lam)


def prox_sorted_l1(v, lam):
    """Proximal map of the sorted-l1 norm: ``argmin_b 1/2||b - v||^2 + sum lam_j |b|_(j)``."""
    v = np.ascontiguousarray(v, dtype=float)
    lam = np.ascontiguousarray(_lambda_values(lam))
    _check_lengths(v, lam)
    return prox_sorted_l1_kernel(v, lam)


def slope_objective(X, y, beta, lam, sigma, w=None):
    """``1/2 ||y - X beta||^2 + sigma * J_lam(W beta)``."""
    beta = np.asarray(beta, float)
    wb = beta if w is None else np.asarray(w, float) * beta
    r = y - X @ beta
    return 0.5 * float(r @ r) + sigma * sorted_l1_norm(wb, lam)


def _validate(X, y, lam, sigma):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    lam = _lambda_values(lam)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be n x p with n = len(y)")
    _check_lengths(X.T, lam)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValueError("sigma must be positive and finite")
    return X, y, lam


def _admm(A, y, pen, z0, max_iter, tol):
    G = A.T @ A
    evals, Q = np.linalg.eigh(G)
    evals = np.clip(evals, 0.0, None)
    Aty = A.T @ y
    p = A.shape[1]
    if tol is None:
        tol = 1e-6 * math.sqrt(p)
    z0 = np.zeros(p) if z0 is None else np.asarray(z0, float).copy()
    return admm_kernel(np.ascontiguousarray(Q), evals, Aty, np.ascontiguousarray(pen), z0,
                       1.0, int(max_iter), float(tol))


def solve_slope(X, y, lam, sigma, beta0=None, max_iter=ADMM_MAX_ITER, tol=None):
    """Minimize ``1/2 ||y - X b||^2 + sigma * sum_j lam_j |b|_(j)`` by ADMM.

    ``beta0`` warm-starts the iterations. When the iteration cap is hit the
    last iterate is returned with ``converged=False``.
    """
    X, y, lam = _validate(X, y, lam, sigma)
    z, it, conv = _admm(X, y, sigma * lam, beta0, max_iter, tol)
    return SlopeSolution(beta=z, objective=slope_objective(X, y, z, lam, sigma),
                         iterations=int(it), converged=bool(conv))


def solve_weighted_slope(X, y, lam, w, sigma, beta0=None, max_iter=ADMM_MAX_ITER, tol=None):
    """SLOPE with per-coordinate weights ``w`` in (0, 1].

    Minimizes ``1/2 ||y - X b||^2 + sigma * sum_j w_j |b_j| lam_{r(Wb, j)}``
    through the change of variables ``z = W b``: plain SLOPE on the design
    ``X W^{-1}`` and then ``b = z / w``.
    """
    X, y, lam = _validate(X, y, lam, sigma)
    w = np.asarray(w, dtype=float).ravel()
    _check_lengths(w, lam)
    if np.any(~((w > 0) & (w <= 1))):
        raise ValueError("weights must lie in (0, 1]")
    A = X / w
    z0 = None if beta0 is None else w * np.asarray(beta0, float)
    z, it, conv = _admm(A, y, sigma * lam, z0, max_iter, tol)
    beta = z / w
    return SlopeSolution(beta=beta, objective=slope_objective(X, y, beta, lam, sigma, w),
                         iterations=int(it), converged=bool(conv))
