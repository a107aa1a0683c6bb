import os
import subprocess
import sys

import numpy as np
import pytest

from mimic_sem import _kernels_py, kernels

compiled = pytest.importorskip("mimic_sem._kernels", reason="compiled extension not built")


def test_default_backend_is_compiled():
    if os.environ.get("MIMIC_SEM_PURE_PYTHON"):
        assert kernels.BACKEND == "python"
    else:
        assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    code = "from mimic_sem import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, MIMIC_SEM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_mardia_sums_agree(rng):
    for n, p in [(5, 1), (50, 3), (300, 5)]:
        Z = rng.normal(size=(n, p))
        a = compiled.mardia_sums(np.ascontiguousarray(Z))
        b = _kernels_py.mardia_sums(Z)
        np.testing.assert_allclose(a, b, rtol=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
@pytest.mark.parametrize("span", [0.3, 0.75, 1.5])
def test_loess_rows_agree(rng, degree, span):
    x = rng.uniform(0, 10, 90)
    targets = np.linspace(-1, 11, 37)
    q = int(min(90, max(degree + 1, np.floor(span * 90))))
    La, ua = compiled.loess_rows(x, targets, q, degree, span)
    Lb, ub = _kernels_py.loess_rows(x, targets, q, degree, span)
    np.testing.assert_allclose(La, Lb, atol=1e-10)
    np.testing.assert_array_equal(ua, ub)


def test_loess_rows_widening_agrees():
    x = np.r_[np.zeros(20), np.ones(2), 5.0]
    t = np.array([0.0, 0.5, 1.0, 5.0])
    La, ua = compiled.loess_rows(x, t, 5, 2, 0.2)
    Lb, ub = _kernels_py.loess_rows(x, t, 5, 2, 0.2)
    np.testing.assert_allclose(La, Lb, atol=1e-10)
    np.testing.assert_array_equal(ua, ub)
    assert ua.max() > 5
