"""Hot inner loops, each in a numba-compiled and a pure-numpy flavour.

The public modules call the names exported at the bottom of this file, which
are bound to one backend at import time (see :mod:`abslope._accel`). Both
flavours take identical arguments and consume no randomness of their own:
Gaussian noise is drawn by the caller so results do not depend on backend.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# sorted-l1 prox: stack-based pool-adjacent-violators on |v| sorted descending


def _prox_sorted_l1_py(v, lam):
    p = v.shape[0]
    order = np.argsort(-np.abs(v), kind="mergesort")
    w = np.abs(v)[order] - lam
    start = np.empty(p, np.int64)
    end = np.empty(p, np.int64)
    total = np.empty(p)
    avg = np.empty(p)
    k = 0
    for i in range(p):
        start[k] = i
        end[k] = i
        total[k] = w[i]
        avg[k] = w[i]
        while k > 0 and avg[k - 1] <= avg[k]:
            k -= 1
            end[k] = i
            total[k] += total[k + 1]
            avg[k] = total[k] / (i - start[k] + 1)
        k += 1
    x = np.empty(p)
    for j in range(k):
        val = avg[j] if avg[j] > 0.0 else 0.0
        for i in range(start[j], end[j] + 1):
            x[i] = val
    out = np.empty(p)
    out[order] = x
    return np.sign(v) * out


_prox_sorted_l1_nb = njit(_prox_sorted_l1_py)


# ---------------------------------------------------------------------------
# ADMM for   min_z 1/2 ||y - A z||^2 + sum_j pen_j |z|_(j)
#
# A^T A = Q diag(evals) Q^T is factored once by the caller, so changing the
# penalty parameter rho never needs a refactorization.

_RHO_MU = 10.0
_RHO_TAU = 2.0


def _admm_numpy(Q, evals, Aty, pen, z0, rho, max_iter, tol):
    p = Aty.shape[0]
    z = z0.copy()
    u = np.zeros(p)
    x = z.copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rhs = Aty + rho * (z - u)
        x = Q @ ((Q.T @ rhs) / (evals + rho))
        z_old = z
        z = _prox_sorted_l1_py(x + u, pen / rho)
        u = u + x - z
        r_norm = np.sqrt(np.sum((x - z) ** 2))
        s_norm = rho * np.sqrt(np.sum((z - z_old) ** 2))
        if r_norm < tol and s_norm < tol:
            converged = True
            break
        if r_norm > _RHO_MU * s_norm:
            rho *= _RHO_TAU
            u /= _RHO_TAU
        elif s_norm > _RHO_MU * r_norm:
            rho /= _RHO_TAU
            u *= _RHO_TAU
    return z, it, converged


@njit
def _admm_nb(Q, evals, Aty, pen, z0, rho, max_iter, tol):
    p = Aty.shape[0]
    z = z0.copy()
    u = np.zeros(p)
    x = z.copy()
    QT = np.ascontiguousarray(Q.T)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rhs = Aty + rho * (z - u)
        x = Q @ ((QT @ rhs) / (evals + rho))
        z_old = z
        z = _prox_sorted_l1_nb(x + u, pen / rho)
        u = u + x - z
        r_norm = np.sqrt(np.sum((x - z) ** 2))
        s_norm = rho * np.sqrt(np.sum((z - z_old) ** 2))
        if r_norm < tol and s_norm < tol:
            converged = True
            break
        if r_norm > _RHO_MU * s_norm:
            rho *= _RHO_TAU
            u /= _RHO_TAU
        elif s_norm > _RHO_MU * r_norm:
            rho /= _RHO_TAU
            u *= _RHO_TAU
    return z, it, converged


# ---------------------------------------------------------------------------
# Gaussian imputation of missing covariates, row by row
#
# For row i with missing set M the conditional of x_M given (x_O, y) has
# precision Q = S_MM + b_M b_M^T / sigma^2 (S = Sigma^{-1}). Writing
# tau = sqrt(diag Q), the unit-diagonal matrix B = Q / (tau tau^T) is factored
# and z = tau * x_M ~ N(mu_tilde, B^{-1}).

_JITTERS = (0.0, 1e-10, 1e-8)


def _chol_inplace(A):
    # lower Cholesky; returns False when a pivot is not positive
    m = A.shape[0]
    for j in range(m):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if not s > 0.0:
            return False
        d = np.sqrt(s)
        A[j, j] = d
        for i in range(j + 1, m):
            t = A[i, j]
            for k in range(j):
                t -= A[i, k] * A[j, k]
            A[i, j] = t / d
        for i in range(j):
            A[i, j] = 0.0
    return True


def _impute_rows_py(X, mask, y, beta, sigma, Smu, S, noise, draw, V, want_cov):
    n, p = X.shape
    out = X.copy()
    inv_s2 = 1.0 / (sigma * sigma)
    miss = np.empty(p, np.int64)
    for i in range(n):
        nm = 0
        r = y[i]
        for j in range(p):
            if mask[i, j]:
                miss[nm] = j
                nm += 1
            else:
                r -= X[i, j] * beta[j]
        if nm == 0:
            continue
        idx = miss[:nm]
        tau = np.empty(nm)
        rhs = np.empty(nm)
        for a in range(nm):
            ja = idx[a]
            tau[a] = np.sqrt(S[ja, ja] + beta[ja] * beta[ja] * inv_s2)
            u_a = 0.0
            for k in range(p):
                if not mask[i, k]:
                    u_a += X[i, k] * S[ja, k]
            rhs[a] = (r * beta[ja] * inv_s2 + Smu[ja] - u_a) / tau[a]
        B = np.empty((nm, nm))
        for a in range(nm):
            ja = idx[a]
            for b in range(nm):
                jb = idx[b]
                if a == b:
                    B[a, b] = 1.0
                else:
                    B[a, b] = (beta[ja] * beta[jb] * inv_s2 + S[ja, jb]) / (tau[a] * tau[b])
        ok = False
        L = B.copy()
        for jit in _JITTERS:
            L = B.copy()
            for a in range(nm):
                L[a, a] += jit
            if _chol_inplace(L):
                ok = True
                break
        if not ok:
            return out, i
        # forward then backward substitution: B mu = rhs
        v = np.empty(nm)
        for a in range(nm):
            t = rhs[a]
            for b in range(a):
                t -= L[a, b] * v[b]
            v[a] = t / L[a, a]
        if draw:
            # z = mu + L^{-T} e has covariance B^{-1}
            for a in range(nm):
                v[a] += noise[i, idx[a]]
        z = np.empty(nm)
        for a in range(nm - 1, -1, -1):
            t = v[a]
            for b in range(a + 1, nm):
                t -= L[b, a] * z[b]
            z[a] = t / L[a, a]
        for a in range(nm):
            out[i, idx[a]] = z[a] / tau[a]
        if want_cov:
            # B^{-1} = L^{-T} L^{-1}; column by column of L^{-1}
            Linv = np.zeros((nm, nm))
            for c in range(nm):
                for a in range(c, nm):
                    t = 1.0 if a == c else 0.0
                    for b in range(c, a):
                        t -= L[a, b] * Linv[b, c]
                    Linv[a, c] = t / L[a, a]
            for a in range(nm):
                for b in range(nm):
                    t = 0.0
                    for e in range(max(a, b), nm):
                        t += Linv[e, a] * Linv[e, b]
                    V[idx[a], idx[b]] += t / (tau[a] * tau[b])
    return out, -1


def _impute_rows_numpy(X, mask, y, beta, sigma, Smu, S, noise, draw, V, want_cov):
    out = X.copy()
    inv_s2 = 1.0 / (sigma * sigma)
    resid = y - np.where(mask, 0.0, X) @ beta
    for i in np.flatnonzero(mask.any(axis=1)):
        M = np.flatnonzero(mask[i])
        O = np.flatnonzero(~mask[i])
        bM = beta[M]
        tau = np.sqrt(np.diag(S)[M] + bM * bM * inv_s2)
        u = S[np.ix_(M, O)] @ X[i, O]
        rhs = (resid[i] * bM * inv_s2 + Smu[M] - u) / tau
        B = (np.outer(bM, bM) * inv_s2 + S[np.ix_(M, M)]) / np.outer(tau, tau)
        np.fill_diagonal(B, 1.0)
        L = None
        for jit in _JITTERS:
            try:
                L = np.linalg.cholesky(B + jit * np.eye(M.size))
                break
            except np.linalg.LinAlgError:
                continue
        if L is None:
            return out, int(i)
        v = np.linalg.solve(L, rhs) if M.size > 1 else rhs / L[0, 0]
        if draw:
            v = v + noise[i, M]
        z = np.linalg.solve(L.T, v) if M.size > 1 else v / L[0, 0]
        out[i, M] = z / tau
        if want_cov:
            Linv = np.linalg.solve(L, np.eye(M.size))
            V[np.ix_(M, M)] += (Linv.T @ Linv) / np.outer(tau, tau)
    return out, -1


# bound before the first compile of the kernel that calls it
_chol_inplace = njit(_chol_inplace)
_impute_rows_nb = njit(_impute_rows_py)


if USE_NUMBA:
    prox_sorted_l1_kernel = _prox_sorted_l1_nb
    admm_kernel = _admm_nb
    impute_rows_kernel = _impute_rows_nb
else:
    prox_sorted_l1_kernel = _prox_sorted_l1_py
    admm_kernel = _admm_numpy
    impute_rows_kernel = _impute_rows_numpy
