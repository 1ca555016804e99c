import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from abslope.core import ModelState
from abslope.sampler import (
    MissingConditional,
    draw_truncated_gamma,
    gamma_inclusion_prob,
    gibbs_sweep,
    impute_missing,
    imputation_covariance,
    missing_conditional,
    precision_matrix,
    sample_c,
    sample_gamma,
    sample_missing,
    sample_theta,
)
from abslope.slope import penalty_by_rank
from abslope.special import trunc_gamma_cdf


def _state(p=5, c=0.5, theta=0.3, seed=0):
    r = np.random.default_rng(seed)
    return ModelState(beta=r.normal(0, 2, p), sigma=1.0, gamma=(r.random(p) < 0.5).astype(int),
                      c=c, theta=theta, mu=np.zeros(p), Sigma=np.eye(p))


# ---------------------------------------------------------------- gamma

def test_inclusion_prob_examples():
    for theta in (0.1, 0.3, 0.9):
        assert gamma_inclusion_prob(2.0, 1.5, 1.0, 1.0, theta) == pytest.approx(theta, abs=1e-15)
    assert gamma_inclusion_prob(0.0, 3.0, 1.0, 0.4, 0.2) == pytest.approx(0.08 / (0.8 + 0.08),
                                                                          abs=1e-15)
    val = gamma_inclusion_prob(4.0, 1.0, 1.0, 0.5, 0.1)
    assert val == pytest.approx(0.2910331156, abs=1e-10)
    assert val == pytest.approx(oracles.mp_inclusion_prob(0.1, 0.5, 4.0), abs=1e-15)


def test_inclusion_prob_stable_for_huge_signal():
    v = gamma_inclusion_prob(1e6, 3.0, 1e-3, 0.01, 0.01)
    assert 0 < v < 1 and v == pytest.approx(1.0)
    v = gamma_inclusion_prob(0.0, 3.0, 1.0, 1e-300, 0.01)
    assert 0 < v < 1e-290


@given(st.floats(0.01, 0.99), st.floats(0.001, 0.999), st.floats(0.0, 50.0), st.floats(0.1, 5.0))
@settings(max_examples=200, deadline=None)
def test_inclusion_prob_matches_closed_form(theta, c, z, sigma):
    got = gamma_inclusion_prob(z * sigma, 1.0, sigma, c, theta)
    assert got == pytest.approx(oracles.mp_inclusion_prob(theta, c, z), rel=1e-12, abs=1e-300)


def test_inclusion_prob_monotone_in_magnitude():
    grid = np.linspace(0, 10, 200)
    for c in (0.05, 0.5, 0.95):
        probs = gamma_inclusion_prob(grid, 1.7, 1.0, c, 0.2)
        assert np.all(np.diff(probs) > 0)


@pytest.mark.parametrize("kw", [dict(c=0.0), dict(c=1.5), dict(theta=0.0), dict(theta=1.0),
                                dict(sigma=0.0)])
def test_inclusion_prob_domain(kw):
    args = dict(beta_j=1.0, rank_penalty=1.0, sigma=1.0, c=0.5, theta=0.5)
    args.update(kw)
    with pytest.raises(ValueError):
        gamma_inclusion_prob(**args)


def test_sample_gamma_limits_and_rate(rng):
    s = _state(p=50, theta=1 - 1e-12)
    lam = np.linspace(3, 1, 50)
    assert np.all(sample_gamma(s, lam, rng) == 1)
    s = _state(p=10, c=1.0, theta=0.3)
    draws = np.array([sample_gamma(s, lam[:10], rng) for _ in range(10000)])
    assert abs(draws.mean() - 0.3) < 0.005


def test_sample_gamma_uses_previous_weight_ranks():
    s = ModelState(beta=np.array([1.0, 2.0]), sigma=1.0, gamma=np.array([1, 0]), c=0.1,
                   theta=0.4, mu=np.zeros(2), Sigma=np.eye(2))
    lam = np.array([3.0, 1.0])
    # W beta = (0.1, 2): coordinate 1 ranks first
    np.testing.assert_array_equal(penalty_by_rank(s.w * s.beta, lam), [1.0, 3.0])
    expect = gamma_inclusion_prob(s.beta, np.array([1.0, 3.0]), 1.0, 0.1, 0.4)
    r = np.random.default_rng(5)
    u = r.random(2)
    got = sample_gamma(s, lam, np.random.default_rng(5))
    np.testing.assert_array_equal(got, (u < expect).astype(int))


def test_sample_gamma_deterministic():
    s = _state(p=20)
    lam = np.linspace(2, 1, 20)
    a = sample_gamma(s, lam, np.random.default_rng(3))
    b = sample_gamma(s, lam, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- theta, c

def test_sample_theta_moments(rng):
    d1 = np.array([sample_theta(np.ones(10), 1, 1, rng) for _ in range(100000)])
    d0 = np.array([sample_theta(np.zeros(10), 1, 1, rng) for _ in range(100000)])
    assert abs(d1.mean() - 11 / 12) < 0.01
    assert abs(d0.mean() - 1 / 12) < 0.01
    assert sample_theta(np.ones(3), 1, 1, np.random.default_rng(1)) == \
        sample_theta(np.ones(3), 1, 1, np.random.default_rng(1))
    with pytest.raises(ValueError):
        sample_theta(np.ones(3), 0.0, 1.0, rng)


def test_sample_c_uniform_when_nothing_active(rng):
    draws = np.array([sample_c(np.zeros(5), np.ones(5), 1.0, np.ones(5), np.ones(5), rng)
                      for _ in range(100000)])
    assert abs(draws.mean() - 0.5) < 0.005
    assert draws.min() > 0 and draws.max() <= 1


def _ks(draws, cdf):
    x = np.sort(draws)
    F = np.array([cdf(v) for v in x])
    n = x.size
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))


def test_truncated_gamma_weak_truncation(rng):
    draws = np.array([draw_truncated_gamma(3.0, 0.1, rng) for _ in range(100000)])
    assert _ks(draws, lambda v: trunc_gamma_cdf(v, 3.0, 0.1)) < 0.01


def test_truncated_gamma_rejection_branch(rng):
    # shape 2, rate 30: most mass already inside [0, 1]
    draws = np.array([draw_truncated_gamma(2.0, 30.0, rng) for _ in range(50000)])
    assert _ks(draws, lambda v: trunc_gamma_cdf(v, 2.0, 30.0)) < 0.01


def test_truncated_gamma_mass_far_left(rng):
    draws = np.array([draw_truncated_gamma(2.0, 50.0, rng) for _ in range(100000)])
    # P(c >= 0.2) = 11 e^{-10} / P(2, 50), about 5e-4 per draw
    tail = 1 - trunc_gamma_cdf(0.2, 2.0, 50.0)
    assert tail == pytest.approx(11 * math.exp(-10), rel=1e-12)
    frac = np.mean(draws >= 0.2)
    assert abs(frac - tail) < 3 * math.sqrt(tail / draws.size)
    assert np.all(draws < 0.5)  # P(c >= 0.5) ~ 3.6e-10 per draw


def test_sample_c_shape_and_rate(rng):
    gamma = np.array([1, 1, 0])
    beta = np.array([2.0, 1.0, 5.0])
    lam = np.array([3.0, 2.0, 1.0])
    w = np.array([0.5, 0.5, 1.0])
    # W beta = (1, 0.5, 5): penalties (2, 1, 3); rate = (2*2 + 1*1) / sigma
    a = sample_c(gamma, beta, 2.0, lam, w, np.random.default_rng(9))
    b = draw_truncated_gamma(3.0, 2.5, np.random.default_rng(9))
    assert a == b


# ---------------------------------------------------------------- missing-covariate conditional

def test_conditional_independent_case():
    mu = np.array([0.5, -1.0, 2.0])
    cond = missing_conditional(np.array([0.0, 1.0, 3.0]), np.array([True, False, False]), 0.7,
                               np.zeros(3), 1.0, mu, np.eye(3))
    np.testing.assert_allclose(cond.mean, [0.5], atol=1e-15)
    np.testing.assert_allclose(cond.cov, [[1.0]], atol=1e-15)
    np.testing.assert_allclose(cond.B, [[1.0]])
    np.testing.assert_allclose(cond.tau, [1.0])


def _random_instance(rng, p, n_miss):
    Sigma = oracles.random_spd(p, rng)
    mu = rng.standard_normal(p)
    beta = rng.normal(0, 2, p) * (rng.random(p) < 0.7)
    sigma = float(rng.uniform(0.2, 3.0))
    x = rng.multivariate_normal(mu, Sigma)
    y = float(x @ beta + sigma * rng.standard_normal())
    miss = np.zeros(p, bool)
    miss[rng.choice(p, n_miss, replace=False)] = True
    return x, miss, y, beta, sigma, mu, Sigma


@pytest.mark.parametrize("p,n_miss", [(3, 1), (4, 2)])
def test_conditional_matches_joint_gaussian(rng, p, n_miss):
    for _ in range(50):
        x, miss, y, beta, sigma, mu, Sigma = _random_instance(rng, p, n_miss)
        cond = missing_conditional(x, miss, y, beta, sigma, mu, Sigma)
        m, C = oracles.joint_gaussian_conditional(x, miss, y, beta, sigma, mu, Sigma)
        np.testing.assert_allclose(cond.mean, m, atol=1e-8)
        np.testing.assert_allclose(cond.cov, C, atol=1e-8)
        np.testing.assert_allclose(np.diag(cond.B), 1.0)
        np.testing.assert_allclose(cond.B, cond.B.T)


def test_conditional_accepts_index_array(rng):
    x, miss, y, beta, sigma, mu, Sigma = _random_instance(rng, 5, 2)
    a = missing_conditional(x, miss, y, beta, sigma, mu, Sigma)
    b = missing_conditional(x, np.flatnonzero(miss), y, beta, sigma, mu,
                            precision=np.linalg.inv(Sigma))
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
    with pytest.raises(ValueError):
        missing_conditional(x, np.zeros(5, bool), y, beta, sigma, mu, Sigma)


def test_sample_missing_moments(rng):
    cond = MissingConditional(index=np.array([0, 1]), mu_tilde=np.array([0.7, -1.2]),
                              B=np.eye(2), tau=np.ones(2))
    d = np.array([sample_missing(cond, rng) for _ in range(100000)])
    np.testing.assert_allclose(d.mean(axis=0), [0.7, -1.2], atol=0.03)
    x, miss, y, beta, sigma, mu, Sigma = _random_instance(rng, 4, 2)
    cond = missing_conditional(x, miss, y, beta, sigma, mu, Sigma)
    d = np.array([sample_missing(cond, rng) for _ in range(100000)])
    np.testing.assert_allclose(np.cov(d.T), cond.cov, atol=0.02)
    a = sample_missing(cond, np.random.default_rng(4))
    np.testing.assert_array_equal(a, sample_missing(cond, np.random.default_rng(4)))


def test_precision_matrix_jitter_and_failure():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])  # singular: rescued by jitter
    P = precision_matrix(S)
    assert np.all(np.isfinite(P))
    with pytest.raises(np.linalg.LinAlgError):
        precision_matrix(-np.eye(2))
    np.testing.assert_allclose(precision_matrix(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]),
                               atol=1e-15)


# ---------------------------------------------------------------- batched imputation

def _masked_problem(rng, n=12, p=4):
    X = rng.standard_normal((n, p))
    mask = rng.random((n, p)) < 0.35
    mask[mask.all(axis=1), 0] = False
    Sigma = oracles.random_spd(p, rng, cond=5)
    return X, mask, rng.standard_normal(n), rng.standard_normal(p), 0.9, rng.standard_normal(p), Sigma


def test_impute_mean_and_draw_match_row_by_row(rng):
    X, mask, y, beta, sigma, mu, Sigma = _masked_problem(rng)
    S = np.linalg.inv(Sigma)
    mean = impute_missing(X, mask, y, beta, sigma, mu, S)
    draw = impute_missing(X, mask, y, beta, sigma, mu, S, rng=np.random.default_rng(2))
    r = np.random.default_rng(2)
    for i in range(X.shape[0]):
        if not mask[i].any():
            np.testing.assert_array_equal(draw[i], X[i])
            continue
        cond = missing_conditional(X[i], mask[i], y[i], beta, sigma, mu, Sigma)
        np.testing.assert_allclose(mean[i, mask[i]], cond.mean, atol=1e-10)
        np.testing.assert_allclose(draw[i, mask[i]], sample_missing(cond, r), atol=1e-10)


def test_imputation_covariance_sums_rows(rng):
    X, mask, y, beta, sigma, mu, Sigma = _masked_problem(rng)
    S = np.linalg.inv(Sigma)
    V = imputation_covariance(X, mask, y, beta, sigma, mu, S)
    ref = np.zeros_like(V)
    for i in np.flatnonzero(mask.any(axis=1)):
        M = np.flatnonzero(mask[i])
        _, C = oracles.joint_gaussian_conditional(X[i], mask[i], y[i], beta, sigma, mu, Sigma)
        ref[np.ix_(M, M)] += C
    np.testing.assert_allclose(V, ref, atol=1e-10)


def test_mcar_imputation_unbiased_column_means():
    """With beta = 0 the draws are N(mu, Sigma) conditionals: column means stay unbiased."""
    r = np.random.default_rng(11)
    p, n = 3, 200
    Sigma = np.array([[1, 0.5, 0.2], [0.5, 1, 0.3], [0.2, 0.3, 1]])
    mu = np.array([1.0, -2.0, 0.5])
    X = r.multivariate_normal(mu, Sigma, n)
    mask = r.random((n, p)) < 0.2
    mask[mask.all(axis=1), 0] = False
    S = np.linalg.inv(Sigma)
    reps = np.array([[impute_missing(X, mask, np.zeros(n), np.zeros(p), 1.0, mu, S, rng=r)[:, j].mean()
                      for j in range(p)] for _ in range(400)])
    target = X.copy()
    for i in range(n):
        if mask[i].any():
            m, _ = oracles.joint_gaussian_conditional(X[i], mask[i], 0.0, np.zeros(p), 1.0, mu, Sigma)
            target[i, mask[i]] = m
    se = reps.std(axis=0) / math.sqrt(reps.shape[0])
    assert np.all(np.abs(reps.mean(axis=0) - target.mean(axis=0)) < 3 * se + 1e-12)


# ---------------------------------------------------------------- sweep

def test_gibbs_sweep_complete_data_untouched():
    s = _state(p=4)
    X = np.random.default_rng(0).standard_normal((6, 4))
    out = gibbs_sweep(s, X, np.zeros((6, 4), bool), np.zeros(6), np.linspace(2, 1, 4), 1, 1,
                      np.random.default_rng(1))
    np.testing.assert_array_equal(out[3], X)


def test_gibbs_sweep_composes_single_steps(rng):
    p = 3
    s = _state(p=p, c=0.4, theta=0.3)
    s.Sigma = oracles.random_spd(p, rng, cond=4)
    X = rng.standard_normal((3, p))
    mask = np.array([[True, False, False], [False, False, False], [False, True, True]])
    y = rng.standard_normal(3)
    lam = np.array([2.0, 1.5, 1.0])
    g, th, c, Xn = gibbs_sweep(s, X, mask, y, lam, 1.0, 2.0, np.random.default_rng(7))
    r = np.random.default_rng(7)
    g2 = sample_gamma(s, lam, r)
    th2 = sample_theta(g2, 1.0, 2.0, r)
    c2 = sample_c(g2, s.beta, s.sigma, lam, s.w, r)
    X2 = impute_missing(X, mask, y, s.beta, s.sigma, s.mu, precision_matrix(s.Sigma), rng=r)
    np.testing.assert_array_equal(g, g2)
    assert th == th2 and c == c2
    np.testing.assert_allclose(Xn, X2, atol=0)
    np.testing.assert_array_equal(Xn[1], X[1])
