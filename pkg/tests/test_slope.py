import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from abslope.slope import (
    penalty_by_rank,
    prox_sorted_l1,
    rank_order,
    slope_objective,
    solve_slope,
    solve_weighted_slope,
    sorted_l1_norm,
)

finite = st.floats(-20, 20, allow_nan=False)


@st.composite
def vec_and_lambda(draw, max_p=8):
    p = draw(st.integers(1, max_p))
    v = draw(arrays(float, p, elements=finite))
    lam = np.sort(draw(arrays(float, p, elements=st.floats(0, 10))))[::-1]
    return v, lam


# ---------------------------------------------------------------- sorted-l1 norm

def test_sorted_l1_examples():
    assert sorted_l1_norm(np.zeros(4), [4, 3, 2, 1]) == 0.0
    assert sorted_l1_norm([3.0, -1.0], [2.0, 1.0]) == 7.0


def test_sorted_l1_bruteforce(rng):
    for _ in range(20):
        beta = rng.standard_normal(6)
        lam = np.sort(rng.random(6))[::-1]
        assert sorted_l1_norm(beta, lam) == pytest.approx(oracles.sorted_l1_bruteforce(beta, lam),
                                                          rel=1e-12)


@given(vec_and_lambda())
@settings(max_examples=100, deadline=None)
def test_sorted_l1_permutation_and_sign_invariant(vl):
    v, lam = vl
    perm = np.random.default_rng(0).permutation(v.size)
    flips = np.where(np.arange(v.size) % 2 == 0, -1.0, 1.0)
    assert sorted_l1_norm(v[perm] * flips, lam) == pytest.approx(sorted_l1_norm(v, lam))


def test_length_mismatch():
    with pytest.raises(ValueError):
        sorted_l1_norm([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        prox_sorted_l1([1.0, 2.0], [1.0])


def test_rank_ties_are_stable():
    np.testing.assert_array_equal(rank_order([1.0, -2.0, 2.0, 0.0]), [1, 2, 0, 3])
    np.testing.assert_array_equal(penalty_by_rank([1.0, -2.0, 2.0, 0.0], [4, 3, 2, 1]),
                                  [2, 4, 3, 1])


# ---------------------------------------------------------------- prox

def test_prox_examples():
    v = np.array([1.0, -3.0, 0.5])
    np.testing.assert_array_equal(prox_sorted_l1(v, np.zeros(3)), v)
    np.testing.assert_allclose(prox_sorted_l1([3.0], [1.0]), [2.0])
    np.testing.assert_allclose(prox_sorted_l1([3.0, 3.0], [2.0, 1.0]), [1.5, 1.5])


def test_prox_matches_frozen_convex_oracle(frozen):
    d = frozen("prox.json")
    assert len(d) == 1000
    err = max(np.max(np.abs(prox_sorted_l1(np.array(r["v"]), np.array(r["lam"])) - r["b"]))
              for r in d)
    assert err <= 1e-6


@given(vec_and_lambda())
@settings(max_examples=200, deadline=None)
def test_prox_structure(vl):
    v, lam = vl
    b = prox_sorted_l1(v, lam)
    assert np.all(np.abs(b) <= np.abs(v) + 1e-12)
    assert np.all(b * v >= 0)
    # magnitudes keep the order of |v|
    mags = np.abs(b)[rank_order(v)]
    assert np.all(np.diff(mags) <= 1e-12)


@given(vec_and_lambda(), st.integers(0, 2 ** 31))
@settings(max_examples=200, deadline=None)
def test_prox_nonexpansive(vl, seed):
    v, lam = vl
    u = v + np.random.default_rng(seed).normal(0, 3, v.size)
    du = prox_sorted_l1(u, lam) - prox_sorted_l1(v, lam)
    assert np.linalg.norm(du) <= np.linalg.norm(u - v) + 1e-10


@given(vec_and_lambda(max_p=5))
@settings(max_examples=100, deadline=None)
def test_prox_optimality(vl):
    v, lam = vl
    b = prox_sorted_l1(v, lam)
    f = lambda x: 0.5 * np.sum((x - v) ** 2) + sorted_l1_norm(x, lam)
    rng = np.random.default_rng(1)
    for _ in range(30):
        assert f(b) <= f(b + rng.normal(0, 1e-3, v.size)) + 1e-12


# ---------------------------------------------------------------- solvers

def test_solve_slope_huge_lambda_gives_zero(rng):
    X = rng.standard_normal((20, 5))
    y = rng.standard_normal(20)
    lam = np.full(5, np.max(np.abs(X.T @ y)) * 1.01)
    sol = solve_slope(X, y, lam, 1.0)
    np.testing.assert_array_equal(sol.beta, 0.0)
    assert sol.converged


def test_solve_slope_unpenalized_is_inverse(rng):
    X = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    y = rng.standard_normal(6)
    sol = solve_slope(X, y, np.zeros(6), 1.0)
    np.testing.assert_allclose(sol.beta, np.linalg.solve(X, y), atol=1e-6)


def test_solvers_match_frozen_oracle(frozen):
    d = frozen("slope_solver.json")
    assert len(d) == 100
    for r in d:
        X, y, lam, w = (np.array(r[k]) for k in ("X", "y", "lam", "w"))
        s = solve_slope(X, y, lam, r["sigma"])
        assert abs(s.objective - r["f_plain"]) <= 1e-5 * abs(r["f_plain"])
        s = solve_weighted_slope(X, y, lam, w, r["sigma"])
        assert abs(s.objective - r["f_weighted"]) <= 1e-5 * abs(r["f_weighted"])


def test_objective_field_consistent(rng):
    X = rng.standard_normal((25, 6))
    y = X[:, 0] * 3 + rng.standard_normal(25)
    lam = np.linspace(2, 1, 6)
    w = np.array([0.3, 1, 1, 0.3, 1, 1])
    s = solve_weighted_slope(X, y, lam, w, 0.7)
    assert s.objective == pytest.approx(oracles.objective(X, y, s.beta, lam, 0.7, w), rel=1e-8)
    assert s.objective <= 0.5 * y @ y


def test_weighted_reduces_to_plain(rng):
    X = rng.standard_normal((30, 5))
    y = X @ np.array([2, 0, -1, 0, 0.5]) + rng.standard_normal(30)
    lam = np.linspace(1.5, 0.5, 5)
    a = solve_slope(X, y, lam, 1.2).beta
    b = solve_weighted_slope(X, y, lam, np.ones(5), 1.2).beta
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_uniform_weight_rescaling(rng):
    X = rng.standard_normal((30, 5))
    y = X @ np.array([2, 0, -1, 0, 0.5]) + rng.standard_normal(30)
    lam = np.linspace(1.5, 0.5, 5)
    c = 0.4
    a = solve_weighted_slope(X, y, lam, np.full(5, c), 1.0, tol=1e-12).beta
    b = solve_slope(X / c, y, lam, 1.0, tol=1e-12).beta / c
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_reweighting_identity(rng):
    """MAP with weights w equals W^{-1} times plain SLOPE on X W^{-1}."""
    for _ in range(20):
        n, p = 30, 6
        X = rng.standard_normal((n, p))
        y = X @ rng.normal(0, 2, p) + rng.standard_normal(n)
        lam = np.sort(rng.random(p) * 2)[::-1]
        w = np.where(rng.random(p) < 0.5, 0.3, 1.0)
        a = solve_weighted_slope(X, y, lam, w, 1.0, tol=1e-12).beta
        z = solve_slope(X / w, y, lam, 1.0, tol=1e-12).beta
        np.testing.assert_allclose(a, z / w, atol=1e-8)


def test_best_so_far_objective_decreases(rng):
    """Objective of the ADMM iterates, as a best-so-far envelope, never increases."""
    X = rng.standard_normal((30, 8))
    y = X[:, :2] @ [3.0, -2.0] + rng.standard_normal(30)
    lam = np.linspace(2, 1, 8)
    vals = [solve_slope(X, y, lam, 1.0, max_iter=k).objective for k in range(1, 60)]
    env = np.minimum.accumulate(vals)
    assert np.all(np.diff(env) <= 1e-10)
    assert env[-1] <= vals[0]


def test_iteration_cap_reports_not_converged(rng):
    X = rng.standard_normal((30, 8))
    y = rng.standard_normal(30)
    sol = solve_slope(X, y, np.linspace(0.5, 0.1, 8), 1.0, max_iter=1, tol=1e-14)
    assert not sol.converged and sol.iterations == 1


@pytest.mark.parametrize("w", [[0.0, 1.0], [1.2, 1.0], [-0.5, 1.0]])
def test_weight_domain(w):
    with pytest.raises(ValueError):
        solve_weighted_slope(np.eye(2), np.ones(2), [1.0, 0.5], np.array(w), 1.0)


def test_nonfinite_inputs():
    with pytest.raises(ValueError):
        solve_slope(np.array([[np.nan, 1.0]]), np.ones(1), [1.0, 0.5], 1.0)
    with pytest.raises(ValueError):
        solve_slope(np.eye(2), np.ones(2), [1.0, 0.5], 0.0)


def test_slope_objective_helper():
    X = np.eye(2)
    assert slope_objective(X, np.array([1.0, 1.0]), np.array([1.0, 0.0]), [2.0, 1.0], 1.0) == 2.5
