import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimic_sem.diagnostics import (
    fit_indices,
    fit_indices_from_moments,
    independence_fit,
    mardia_test,
    saturated_fit,
)
from mimic_sem.estimation import FitConfig, fit_ml
from mimic_sem.model import Dataset, ModelSpec, ParameterSet
from mimic_sem.simulate import SimConfig, simulate


def mardia_loop_oracle(Y):
    """b1 and b2 from explicit Mahalanobis cross products."""
    n, p = Y.shape
    Z = Y - Y.mean(axis=0)
    Sinv = np.linalg.inv(Z.T @ Z / n)
    b1 = 0.0
    b2 = 0.0
    for i in range(n):
        for j in range(n):
            b1 += float(Z[i] @ Sinv @ Z[j]) ** 3
        b2 += float(Z[i] @ Sinv @ Z[i]) ** 2
    return b1 / n**2, b2 / n


def sim_dataset(n, seed, p=4, k=3):
    spec = ModelSpec(p, k)
    tp = ParameterSet([1.0, 0.8, 1.2, 0.7][:p], [0.5, -0.4, 0.3][:k], [0.6, 0.5, 0.7, 0.55][:p], 0.6)
    return spec, simulate(SimConfig(spec, tp, n, seed=seed)).dataset


def test_saturated_model_is_degenerate():
    _, ds = sim_dataset(200, 1)
    fi = fit_indices(ds, saturated_fit(ds))
    assert fi.chisq_model == 0.0
    assert fi.df_model == 0
    assert fi.cfi == 1.0
    assert fi.rmsea == 0.0
    assert fi.srmr < 1e-10


def test_aic_bic_formula():
    ds = Dataset((), np.random.default_rng(0).normal(size=(81, 2)), np.random.default_rng(1).normal(size=(81, 1)))
    fi = fit_indices_from_moments(ds, 0.0, 3, np.zeros((1, 2)), np.eye(2))
    assert fi.aic == 6.0
    assert fi.bic == pytest.approx(3 * math.log(81))
    assert fi.bic == pytest.approx(13.18, abs=5e-3)


def test_aic_bic_identity_and_ranges():
    for seed in range(3):
        spec, ds = sim_dataset(150, 10 + seed)
        fit = fit_ml(ds, spec, FitConfig(se_methods=()))
        fi = fit_indices(ds, fit)
        q = spec.n_free
        assert fi.aic - fi.bic == pytest.approx(q * (2 - math.log(ds.n)), abs=1e-10)
        assert 0.0 <= fi.cfi <= 1.0
        assert fi.rmsea >= 0 and fi.srmr >= 0
        assert 0 <= fi.df_model <= fi.df_baseline
        assert fi.df_model == spec.k * spec.p + spec.p * (spec.p + 1) // 2 - q


def test_independence_baseline_is_worse_than_saturated():
    _, ds = sim_dataset(200, 2)
    assert independence_fit(ds).loglik < saturated_fit(ds).loglik
    assert independence_fit(ds).n_params == ds.p


def test_srmr_invariant_to_indicator_permutation():
    spec, ds = sim_dataset(200, 3)
    fit = fit_ml(ds, spec, FitConfig(se_methods=()))
    base = fit_indices(ds, fit)
    perm = [2, 0, 3, 1]
    ds2 = Dataset((), ds.Y[:, perm], ds.X)
    start = ParameterSet(fit.params.lam[perm] / fit.params.lam[perm][0], fit.params.beta * fit.params.lam[perm][0],
                         fit.params.theta[perm], fit.params.sigma * abs(fit.params.lam[perm][0]))
    fit2 = fit_ml(ds2, spec, FitConfig(se_methods=(), start=start))
    assert fit_indices(ds2, fit2).srmr == pytest.approx(base.srmr, abs=1e-7)
    sat, sat2 = saturated_fit(ds), saturated_fit(ds2)
    m = fit.params
    Pi = np.outer(m.beta, m.lam)
    Om = m.sigma**2 * np.outer(m.lam, m.lam) + np.diag(m.theta**2)
    a = fit_indices_from_moments(ds, fit.loglik, spec.n_free, Pi, Om).srmr
    b = fit_indices_from_moments(ds2, fit.loglik, spec.n_free, Pi[:, perm], Om[np.ix_(perm, perm)]).srmr
    assert a == pytest.approx(b, abs=1e-14)
    assert sat.loglik == pytest.approx(sat2.loglik, abs=1e-9)


@pytest.mark.slow
def test_chisq_calibration_under_correct_model():
    chis, rmseas, df = [], [], None
    for r in range(200):
        spec, ds = sim_dataset(500, 1000 + r)
        fit = fit_ml(ds, spec, FitConfig(se_methods=()))
        fi = fit_indices(ds, fit)
        chis.append(fi.chisq_model)
        rmseas.append(fi.rmsea)
        df = fi.df_model
    mc_se = math.sqrt(2 * df / len(chis))
    assert abs(np.mean(chis) - df) < 3 * mc_se
    assert np.median(rmseas) < 0.05


def test_mardia_matches_loop_oracle(rng):
    Y = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3)) + 0.3 * rng.exponential(size=(40, 3))
    res = mardia_test(Y)
    b1, b2 = mardia_loop_oracle(Y)
    assert res.skewness == pytest.approx(b1, rel=1e-10)
    assert res.kurtosis == pytest.approx(b2, rel=1e-10)
    assert res.skewness_stat == pytest.approx(40 * b1 / 6, rel=1e-10)


def test_mardia_affine_invariance(rng):
    Y = rng.normal(size=(200, 4))
    Y[:, 1] = Y[:, 1] ** 2
    A = rng.normal(size=(4, 4)) + 3 * np.eye(4)
    a = mardia_test(Y)
    b = mardia_test(Y @ A.T + rng.normal(size=4) * 10)
    assert b.skewness == pytest.approx(a.skewness, rel=1e-8)
    assert b.kurtosis == pytest.approx(a.kurtosis, rel=1e-8)


def test_mardia_detects_skew():
    Y = np.random.default_rng(7).normal(size=(1000, 5))
    Y[:, 2] = Y[:, 2] ** 3
    res = mardia_test(Y)
    assert res.skewness_pvalue < 0.001
    assert res.rejected


def test_mardia_symmetric_two_point_sample():
    Y = np.repeat([-1.0, 1.0], 50)[:, None]
    res = mardia_test(Y)
    assert res.skewness == pytest.approx(0.0, abs=1e-24)
    assert res.skewness_stat == pytest.approx(0.0, abs=1e-20)
    assert res.kurtosis == pytest.approx(1.0)


def test_mardia_univariate_matches_moment_ratios(rng):
    y = rng.gamma(3.0, size=300)
    z = y - y.mean()
    m2, m3, m4 = (z**2).mean(), (z**3).mean(), (z**4).mean()
    res = mardia_test(y)
    assert res.skewness == pytest.approx(m3**2 / m2**3, rel=1e-10)
    assert res.kurtosis == pytest.approx(m4 / m2**2, rel=1e-10)


def test_mardia_errors():
    with pytest.raises(ValueError):
        mardia_test(np.ones((3, 3)))
    with pytest.raises(np.linalg.LinAlgError):
        Y = np.random.default_rng(0).normal(size=(20, 2))
        mardia_test(np.column_stack([Y, Y[:, 0] + Y[:, 1]]))


def test_mardia_size_small_scale():
    rng = np.random.default_rng(2024)
    rej = [mardia_test(rng.standard_normal((300, 3))).rejected for _ in range(300)]
    # 300 draws: MC SE of a 5% rate is 1.3%
    assert 0.01 <= np.mean(rej) <= 0.09


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mardia_pvalues_in_unit_interval(seed):
    Y = np.random.default_rng(seed).standard_t(3, size=(30, 3))
    res = mardia_test(Y)
    assert 0.0 <= res.skewness_pvalue <= 1.0
    assert 0.0 <= res.kurtosis_pvalue <= 1.0
    assert res.rejected == (min(res.skewness_pvalue, res.kurtosis_pvalue) < 0.025)
