"""Synthetic data, amputation, selection metrics and the replication runner."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import expit

from .core import Dataset, Hyperparams, bh_lambda, initial_standardize
from .saem import fit_abslope
from .slobe import fit_slobe
from .slope import solve_slope

__all__ = [
    "SimScenario",
    "Metrics",
    "ScenarioResult",
    "generate_design",
    "generate_response",
    "ampute",
    "evaluate",
    "fit_slope_baseline",
    "run_replication",
    "run_scenario",
    "read_scenario",
    "write_scenario",
    "write_results",
]

METHODS = ("abslope", "slobe", "slope")
FITTERS = {"abslope": fit_abslope, "slobe": fit_slobe}
_MAR_SLOPE = 1.5
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class SimScenario:
    n: int = 100
    p: int = 100
    k: int = 10
    c0: float = 3.0
    rho: float = 0.0
    miss_frac: float = 0.1
    mechanism: str = "mcar"
    sigma_true: float = 1.0
    q: float = 0.1
    reps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not (0 <= self.k <= self.p):
            raise ValueError("k must lie in [0, p]")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must lie in [0, 1)")
        if not (0.0 <= self.miss_frac < 1.0):
            raise ValueError("miss_frac must lie in [0, 1)")
        if self.mechanism not in ("mcar", "mar"):
            raise ValueError("mechanism must be 'mcar' or 'mar'")
        if not self.sigma_true > 0:
            raise ValueError("sigma_true must be positive")
        if not (0.0 < self.q < 1.0):
            raise ValueError("q must lie in (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")

    @property
    def magnitude(self):
        return self.c0 * math.sqrt(2.0 * math.log(self.p)) if self.p > 1 else self.c0


@dataclass
class Metrics:
    power: float
    fdr: float
    mse_beta: float | None
    pred_err: float | None
    tp: int
    fp: int
    fn: int


def generate_design(n, p, rho, rng):
    """Gaussian rows with Toeplitz covariance ``rho^|i-j|``, standardized to unit-norm columns."""
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must lie in [0, 1)")
    Z = rng.standard_normal((n, p))
    if rho > 0.0:
        # AR(1) recursion gives exactly the Toeplitz correlation
        X = np.empty_like(Z)
        X[:, 0] = Z[:, 0]
        scale = math.sqrt(1.0 - rho * rho)
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + scale * Z[:, j]
    else:
        X = Z
    m = X.mean(axis=0)
    s = X.std(axis=0)
    return (X - m) / (math.sqrt(n) * s)


def generate_response(X, k, c0, sigma_true, rng):
    n, p = X.shape
    if not (0 <= k <= p):
        raise ValueError("k must lie in [0, p]")
    beta = np.zeros(p)
    beta[:k] = c0 * math.sqrt(2.0 * math.log(p)) if p > 1 else c0
    y = X @ beta + sigma_true * rng.standard_normal(n)
    return y, beta


def _calibrate_offset(z, target):
    # solve mean(expit(a + slope z)) = target for a by bisection
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(expit(mid + _MAR_SLOPE * z)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ampute(X, frac, mechanism, rng, driver=None):
    """Boolean mask of cells to delete (``True`` = missing).

    MCAR masks every cell independently with probability ``frac``. MAR
    keeps one driver column (default: the last) complete and masks the
    other columns with probability ``expit(a + 1.5 z)``, ``z`` the z-scored
    driver and ``a`` set by bisection so the expected overall fraction is
    ``frac``. Rows that lose every entry are re-drawn.
    """
    X = np.asarray(X, float)
    n, p = X.shape
    if not (0.0 <= frac < 1.0):
        raise ValueError("frac must lie in [0, 1)")
    if frac == 0.0:
        return np.zeros((n, p), dtype=bool)
    if mechanism == "mcar":
        probs = np.full((n, p), frac)
    elif mechanism == "mar":
        if p < 2:
            raise ValueError("MAR needs at least two columns")
        d = p - 1 if driver is None else int(driver)
        z = X[:, d] - X[:, d].mean()
        sd = z.std()
        z = z / sd if sd > 0 else z
        target = min(frac * p / (p - 1), 1.0 - 1e-9)
        row_prob = expit(_calibrate_offset(z, target) + _MAR_SLOPE * z)
        probs = np.repeat(row_prob[:, None], p, axis=1)
        probs[:, d] = 0.0
    else:
        raise ValueError("mechanism must be 'mcar' or 'mar'")
    mask = rng.random((n, p)) < probs
    for i in np.flatnonzero(mask.all(axis=1)):
        for _ in range(_MAX_REDRAWS):
            mask[i] = rng.random(p) < probs[i]
            if not mask[i].all():
                break
        else:
            raise RuntimeError(f"row {i} kept losing every entry after {_MAX_REDRAWS} redraws")
    return mask


def evaluate(beta_hat, gamma_hat, beta_true, X_true):
    """Selection and estimation metrics; ``mse``/``pred`` are ``None`` when ``beta_true`` is 0."""
    beta_hat = np.asarray(beta_hat, float)
    beta_true = np.asarray(beta_true, float)
    sel = np.asarray(gamma_hat).astype(bool)
    if not (beta_hat.shape == beta_true.shape == sel.shape):
        raise ValueError("dimension mismatch")
    truth = beta_true != 0
    tp = int(np.sum(sel & truth))
    fp = int(np.sum(sel & ~truth))
    fn = int(np.sum(~sel & truth))
    power = tp / (tp + fn) if tp + fn > 0 else 0.0
    fdr = fp / max(tp + fp, 1)
    norm2 = float(beta_true @ beta_true)
    if norm2 == 0.0:
        return Metrics(power, fdr, None, None, tp, fp, fn)
    mse = float(np.sum((beta_hat - beta_true) ** 2)) / norm2
    fit_true = np.asarray(X_true, float) @ beta_true
    pred = float(np.sum((X_true @ beta_hat - fit_true) ** 2)) / float(fit_true @ fit_true)
    return Metrics(power, fdr, mse, pred, tp, fp, fn)


def fit_slope_baseline(data, q=0.1, max_rounds=20):
    """Mean imputation followed by SLOPE with ``sigma`` re-estimated from the selected model.

    Returns ``(beta, sigma)`` on the standardized scale.
    """
    std, _ = initial_standardize(data)
    X, y = std.X, std.y
    n, p = X.shape
    lam = bh_lambda(p, q).values
    sigma = float(np.std(y)) or 1.0
    support = None
    beta = np.zeros(p)
    for _ in range(max_rounds):
        beta = solve_slope(X, y, lam, sigma, beta0=beta).beta
        new = np.flatnonzero(beta)
        if support is not None and np.array_equal(new, support):
            break
        support = new
        if support.size + 1 >= n:
            break
        if support.size:
            coef = np.linalg.lstsq(X[:, support], y, rcond=None)[0]
            r = y - X[:, support] @ coef
        else:
            r = y
        sigma = max(float(np.sqrt(r @ r / (n - support.size - 1))), 1e-12)
    return beta, sigma


def _rep_seeds(seed, reps):
    return np.random.SeedSequence(seed).spawn(reps)


def run_replication(sc, method, seed_seq, hyper=None):
    """Generate, ampute, fit and score one replication; returns a flat record."""
    rng = np.random.default_rng(seed_seq)
    fit_seed = int(seed_seq.generate_state(1)[0])
    X = generate_design(sc.n, sc.p, sc.rho, rng)
    y, beta = generate_response(X, sc.k, sc.c0, sc.sigma_true, rng)
    mask = ampute(X, sc.miss_frac, sc.mechanism, rng)
    data = Dataset.from_arrays(np.where(mask, np.nan, X), y, mask=mask)
    hyper = hyper or Hyperparams(q=sc.q)
    t0 = time.perf_counter()
    if method in ("abslope", "slobe"):
        fit = FITTERS[method](data, hyper, seed=fit_seed, record_trace=False)
        beta_hat, gamma_hat, sigma_hat = fit.beta_hat, fit.gamma_hat, fit.sigma_hat
        X_fit = fit.X_imputed
    elif method == "slope":
        beta_hat, sigma_hat = fit_slope_baseline(data, hyper.q)
        gamma_hat = beta_hat != 0
        X_fit = initial_standardize(data)[0].X
    else:
        raise ValueError(f"unknown method {method!r}")
    runtime_ms = 1000.0 * (time.perf_counter() - t0)
    m = evaluate(beta_hat, gamma_hat, beta, X)
    # plain sqrt(RSS/n) at the estimate on the design the fit ended with
    r = y - y.mean() - X_fit @ beta_hat
    return {
        "power": m.power, "fdr": m.fdr, "mse": m.mse_beta, "pred": m.pred_err,
        "sigma_hat": float(sigma_hat), "runtime_ms": runtime_ms,
        "tp": m.tp, "fp": m.fp, "fn": m.fn, "sigma_rss": float(np.sqrt(r @ r / sc.n)),
    }


def _run_one(args):
    sc, method, i, seed_seq, hyper = args
    try:
        rec = run_replication(sc, method, seed_seq, hyper)
        rec["error"] = ""
    except Exception as exc:  # a failed replication is recorded, not fatal
        rec = {"error": f"{type(exc).__name__}: {exc}"}
    rec["rep"] = i
    return rec


_METRIC_COLS = ("power", "fdr", "mse", "pred", "sigma_hat", "runtime_ms")


@dataclass
class ScenarioResult:
    scenario: SimScenario
    method: str
    records: list
    mean: dict
    se: dict
    n_failed: int


def run_scenario(sc, method, threads=1, hyper=None):
    """Run ``sc.reps`` independent replications and aggregate them.

    Each replication gets its own child of ``SeedSequence(sc.seed)``, so the
    per-replication results do not depend on ``threads`` or on order.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    jobs = [(sc, method, i, s, hyper) for i, s in enumerate(_rep_seeds(sc.seed, sc.reps))]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    ok = [r for r in records if not r["error"]]
    mean, se = {}, {}
    for col in _METRIC_COLS:
        vals = np.array([r[col] for r in ok if r[col] is not None], float)
        mean[col] = float(vals.mean()) if vals.size else None
        se[col] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None
    return ScenarioResult(sc, method, records, mean, se, len(records) - len(ok))


def _fmt(v):
    if v is None:
        return "NA"
    return repr(float(v))


def write_results(result, path, timing=True):
    """CSV of per-replication rows followed by one ``mean`` row; failures show ``NA``.

    ``timing=False`` writes ``NA`` for ``runtime_ms`` so that reruns are byte-identical.
    """
    cols = _METRIC_COLS if timing else _METRIC_COLS[:-1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("rep",) + _METRIC_COLS)
        for r in result.records:
            wr.writerow([r["rep"]] + [_fmt(r.get(c)) for c in cols] + [_fmt(None)] * (not timing))
        wr.writerow(["mean"] + [_fmt(result.mean[c]) for c in cols] + [_fmt(None)] * (not timing))


# scenario files use short keys
_KEYS = {"n": "n", "p": "p", "k": "k", "c0": "c0", "rho": "rho", "miss": "miss_frac",
         "mech": "mechanism", "sigma": "sigma_true", "q": "q", "reps": "reps", "seed": "seed"}


def read_scenario(path):
    """Parse a flat ``key=value`` scenario file; ``#`` starts a comment."""
    types = {f.name: f.type for f in fields(SimScenario)}
    kw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            name = _KEYS[key]
            t = types[name]
            try:
                if t in ("int", int):
                    kw[name] = int(val)
                elif t in ("float", float):
                    kw[name] = float(val)
                else:
                    kw[name] = val.lower()
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value {val!r} for {key}") from None
    return SimScenario(**kw)


def write_scenario(sc, path):
    inv = {v: k for k, v in _KEYS.items()}
    with open(path, "w") as fh:
        for name, val in asdict(sc).items():
            fh.write(f"{inv[name]}={val}\n")
