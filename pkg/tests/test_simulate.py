import numpy as np
import pytest

from mimic_sem.estimation import FitConfig
from mimic_sem.model import ModelSpec, ParameterSet
from mimic_sem.simulate import (
    DEFAULT_TRUE_PARAMS,
    SimConfig,
    params_from_mapping,
    recovery_study,
    simulate,
    simulate_query_table,
)

SPEC = ModelSpec(5, 6)


def test_noiseless_generation_is_rank_one():
    tp = ParameterSet([1, 0.8, 0.9, 1.1, 0.7], [0.4, -0.3, 0.2, 0.3, -0.2, 0.1], [0.0] * 5, 0.0)
    sim = simulate(SimConfig(SPEC, tp, 50, seed=3))
    ds = sim.dataset
    np.testing.assert_allclose(ds.Y, np.outer(ds.X @ tp.beta, tp.lam), atol=1e-15)
    np.testing.assert_allclose(sim.eta, ds.X @ tp.beta, atol=1e-15)
    assert np.linalg.matrix_rank(ds.Y, tol=1e-10) == 1


def test_same_seed_is_bit_identical():
    cfg = SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 200, seed=42)
    a, b = simulate(cfg, 3), simulate(cfg, 3)
    assert a.dataset.Y.tobytes() == b.dataset.Y.tobytes()
    assert a.dataset.X.tobytes() == b.dataset.X.tobytes()
    assert a.eta.tobytes() == b.eta.tobytes()
    assert simulate(cfg, 4).dataset.Y.tobytes() != a.dataset.Y.tobytes()


def test_residual_covariance_matches_omega():
    tp = DEFAULT_TRUE_PARAMS
    ds = simulate(SimConfig(SPEC, tp, 100_000, seed=1)).dataset
    R = ds.Y - np.outer(ds.X @ tp.beta, tp.lam)
    Omega = tp.sigma**2 * np.outer(tp.lam, tp.lam) + np.diag(tp.theta**2)
    assert np.max(np.abs(np.cov(R, rowvar=False) - Omega)) < 0.02


def test_scaled_t_has_unit_variance_errors():
    tp = ParameterSet([1, 1, 1, 1, 1], [0.0] * 6, [1.0] * 5, 1e-12)
    ds = simulate(SimConfig(SPEC, tp, 200_000, error_distribution="t", df=5, seed=2)).dataset
    v = ds.Y.var(axis=0)
    assert np.all(np.abs(v - 1.0) < 0.05)
    k = ((ds.Y - ds.Y.mean(0)) ** 4).mean(0) / v**2
    assert np.all(k > 4.0)  # t(5) has kurtosis 9


def test_fixed_causes_override_n(rng):
    X = rng.normal(size=(30, 6))
    cfg = SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 1000, causes=X)
    assert cfg.n == 30
    np.testing.assert_array_equal(simulate(cfg).dataset.X, X)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 11)
    with pytest.raises(ValueError):
        SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 100, error_distribution="t", df=2.0)
    with pytest.raises(ValueError):
        SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 100, error_distribution="cauchy")
    with pytest.raises(ValueError):
        SimConfig(ModelSpec(4, 6), DEFAULT_TRUE_PARAMS, 100)


def test_recovery_with_two_replications():
    rep = recovery_study(SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 300, seed=5), 2)
    assert rep.n_ok == 2 and not rep.failures
    assert rep.estimates.shape == (2, SPEC.n_free)
    np.testing.assert_allclose(rep.empirical_sd, np.abs(rep.estimates[0] - rep.estimates[1]) / np.sqrt(2))
    lines = rep.to_csv().strip().splitlines()
    assert len(lines) == SPEC.n_free + 1
    assert lines[0].startswith("parameter,truth,mean,bias,empirical_sd,mean_se_naive")
    assert "replications: 2 (2 usable, 0 failed)" in rep.summary()
    with pytest.raises(ValueError):
        recovery_study(SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 300), 1)


def test_recovery_reports_failures_without_aborting():
    rep = recovery_study(SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 300, seed=5), 3, FitConfig(max_iter=1))
    assert rep.n_ok + len(rep.failures) == 3
    assert len(rep.failures) >= 1
    assert "did not converge" in rep.summary()


def test_standardized_loadings_recovered():
    rep = recovery_study(SimConfig(SPEC, DEFAULT_TRUE_PARAMS, 500, seed=9), 30, FitConfig(se_methods=()))
    lam = np.c_[np.ones(rep.n_ok), rep.estimates[:, :4]]
    std = lam / lam.sum(axis=1, keepdims=True)
    truth = DEFAULT_TRUE_PARAMS.lam / DEFAULT_TRUE_PARAMS.lam.sum()
    assert np.all(np.abs(std.mean(axis=0) - truth) < 3 * std.std(axis=0, ddof=1))


def test_params_from_mapping():
    ps = params_from_mapping({"sigma": 0.2})
    assert ps.sigma == 0.2
    np.testing.assert_array_equal(ps.lam, DEFAULT_TRUE_PARAMS.lam)


def test_query_table_schema():
    rows = simulate_query_table(n_regions=10, periods=("a", "b"), months=2, seed=1)
    assert len(rows) == 10 * 2 * 2
    r = rows[0]
    assert r["total"] >= sum(r[f"q{i}"] for i in range(1, 6))
    assert rows == simulate_query_table(n_regions=10, periods=("a", "b"), months=2, seed=1)
