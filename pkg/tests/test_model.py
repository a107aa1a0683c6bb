import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimic_sem.model import (
    ModelSpec,
    ParameterSet,
    implied_moments,
    rescale_latent,
    standardize_loadings,
)

from conftest import random_params


def scalar_loop_moments(lam, beta, theta, sigma):
    p, k = len(lam), len(beta)
    Pi = [[0.0] * p for _ in range(k)]
    for a in range(k):
        for i in range(p):
            Pi[a][i] = beta[a] * lam[i]
    Om = [[0.0] * p for _ in range(p)]
    for i in range(p):
        for j in range(p):
            Om[i][j] = sigma * sigma * lam[i] * lam[j]
            if i == j:
                Om[i][j] += theta[i] * theta[i]
    return np.array(Pi), np.array(Om)


def test_implied_moments_unit_example():
    m = implied_moments(ModelSpec(2, 1), ParameterSet([1, 1], [0], [1, 1], 1))
    np.testing.assert_array_equal(m.Omega, [[2, 1], [1, 2]])
    np.testing.assert_array_equal(m.Pi, [[0, 0]])


def test_implied_moments_zero_sigma_is_diagonal():
    m = implied_moments(ModelSpec(3, 2), ParameterSet([1, -2, 5], [0.1, 0.2], [0.5, 1.5, 2.0], 0))
    np.testing.assert_allclose(m.Omega, np.diag([0.25, 2.25, 4.0]), atol=0)


def test_implied_moments_matches_scalar_loop():
    lam, beta, theta, sigma = [1, 0.5, 2], [0.3, -0.2], [1, 1, 1], 0.7
    m = implied_moments(ModelSpec(3, 2), ParameterSet(lam, beta, theta, sigma))
    Pi, Om = scalar_loop_moments(lam, beta, theta, sigma)
    np.testing.assert_allclose(m.Pi, Pi, atol=1e-15)
    np.testing.assert_allclose(m.Omega, Om, atol=1e-15)
    assert m.Omega[1, 2] == pytest.approx(0.49 * 0.5 * 2)
    assert m.Pi[0, 2] == pytest.approx(0.6)


def test_implied_moments_rejects_nonpositive_theta():
    with pytest.raises(ValueError):
        implied_moments(ModelSpec(2, 1), ParameterSet([1, 1], [0], [1, 0], 1))
    with pytest.raises(ValueError):
        implied_moments(ModelSpec(2, 1), ParameterSet([1, 1], [0], [1, -1], 1))


def test_implied_moments_dimension_mismatch():
    with pytest.raises(ValueError):
        implied_moments(ModelSpec(3, 1), ParameterSet([1, 1], [0], [1, 1], 1))


def test_spec_names_and_free_count():
    spec = ModelSpec(3, 2, indicator_names=("a", "b", "c"), cause_names=("u", "v"))
    assert spec.n_free == 2 * 3 + 2
    assert spec.param_names() == [
        "lambda[b]", "lambda[c]", "beta[u]", "beta[v]",
        "theta[a]", "theta[b]", "theta[c]", "sigma",
    ]
    with pytest.raises(ValueError):
        ModelSpec(1, 1)
    with pytest.raises(ValueError):
        ModelSpec(2, 1, indicator_names=("a", "a"))


def test_free_vector_round_trip(rng):
    spec = ModelSpec(4, 3, fixed_loading=2)
    params = random_params(rng, 4, 3, fixed=2)
    back = ParameterSet.from_free(spec, params.to_free(spec))
    np.testing.assert_array_equal(back.lam, params.lam)
    np.testing.assert_array_equal(back.beta, params.beta)
    assert back.is_identified(spec)


def test_parameter_arrays_are_read_only():
    ps = ParameterSet([1, 2], [0.5], [1, 1], 1)
    with pytest.raises(ValueError):
        ps.lam[0] = 3.0


def test_standardize_equal_loadings():
    out = standardize_loadings(ParameterSet([1] * 5, [0.3, -0.1], [1] * 5, 0.4))
    np.testing.assert_allclose(out.lam, [0.2] * 5)
    np.testing.assert_allclose(out.beta, [1.5, -0.5])
    assert out.sigma == pytest.approx(2.0)


def test_published_standardized_loadings_sum_to_one():
    lam = np.array([0.196, 0.161, 0.194, 0.237, 0.212])
    assert lam.sum() == pytest.approx(1.000, abs=5e-4)
    # already in sum-to-one form, so the transform leaves them unchanged
    out = standardize_loadings(ParameterSet(lam / lam.sum(), [1.0], [1] * 5, 1.0))
    np.testing.assert_allclose(out.lam, lam / lam.sum(), atol=1e-15)


def test_standardize_rejects_zero_sum():
    with pytest.raises(ValueError):
        standardize_loadings(ParameterSet([1, -1], [0.1], [1, 1], 1))


def test_standardize_preserves_reduced_form(rng):
    for _ in range(20):
        p, k = rng.integers(2, 7), rng.integers(1, 5)
        spec = ModelSpec(p, k)
        ps = random_params(rng, p, k)
        if abs(ps.lam.sum()) < 0.1:
            continue
        a, b = implied_moments(spec, ps), implied_moments(spec, standardize_loadings(ps))
        np.testing.assert_allclose(b.Pi, a.Pi, atol=1e-12)
        np.testing.assert_allclose(b.Omega, a.Omega, atol=1e-12)


params_st = st.integers(2, 6).flatmap(
    lambda p: st.tuples(
        st.lists(st.floats(0.2, 3.0), min_size=p, max_size=p),
        st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2),
        st.lists(st.floats(0.05, 2.0), min_size=p, max_size=p),
        st.floats(0.0, 2.0),
    )
)


@settings(max_examples=60, deadline=None)
@given(params_st, st.sampled_from([-3.0, -0.5, 0.25, 2.0, 7.0]))
def test_reduced_form_invariance(vals, c):
    lam, beta, theta, sigma = vals
    ps = ParameterSet(lam, beta, theta, sigma)
    spec = ModelSpec(len(lam), 2)
    a, b = implied_moments(spec, ps), implied_moments(spec, rescale_latent(ps, c))
    np.testing.assert_allclose(b.Pi, a.Pi, atol=1e-10)
    np.testing.assert_allclose(b.Omega, a.Omega, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(params_st)
def test_standardize_idempotent(vals):
    lam, beta, theta, sigma = vals
    once = standardize_loadings(ParameterSet(lam, beta, theta, sigma))
    twice = standardize_loadings(once)
    np.testing.assert_allclose(twice.lam, once.lam, atol=1e-12)
    np.testing.assert_allclose(twice.beta, once.beta, atol=1e-12)
    assert twice.sigma == pytest.approx(once.sigma, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(params_st)
def test_omega_eigenvalues_bounded_by_theta(vals):
    lam, beta, theta, sigma = vals
    m = implied_moments(ModelSpec(len(lam), 2), ParameterSet(lam, beta, theta, sigma))
    np.testing.assert_allclose(m.Omega, m.Omega.T, atol=0)
    assert np.linalg.eigvalsh(m.Omega).min() >= min(t * t for t in theta) * (1 - 1e-10)
    assert np.linalg.matrix_rank(m.Pi) <= 1
