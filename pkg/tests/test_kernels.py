import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import solve_banded

from crosshedge import _kernels_py, kernels


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_gaussian_is_standard_normal():
    z = _kernels_py.gaussian(7, 0, np.arange(200_000, dtype=np.int64), 3)
    assert abs(z.mean()) < 4 / np.sqrt(len(z))
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / len(z))
    # different channels and steps are decorrelated
    w = _kernels_py.gaussian(7, 1, np.arange(200_000, dtype=np.int64), 3)
    v = _kernels_py.gaussian(7, 0, np.arange(200_000, dtype=np.int64), 4)
    assert abs(np.corrcoef(z, w)[0, 1]) < 4 / np.sqrt(len(z))
    assert abs(np.corrcoef(z, v)[0, 1]) < 4 / np.sqrt(len(z))


def test_gaussian_is_a_pure_function_of_the_counter():
    streams = np.array([5, 0, 123456789], dtype=np.int64)
    a = kernels.gaussian(11, 2, streams, 9)
    b = kernels.gaussian(11, 2, streams[::-1].copy(), 9)[::-1]
    assert np.array_equal(a, b)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_backends_agree_bitwise():
    from crosshedge import _kernels

    streams = np.arange(-5, 50_000, 7, dtype=np.int64)
    for seed, ch, step in ((0, 0, 0), (2 ** 63, 3, 17), (12345, 1, 999)):
        assert np.array_equal(_kernels.gaussian(seed, ch, streams, step), _kernels_py.gaussian(seed, ch, streams, step))
    rng = np.random.default_rng(1)
    n = 257
    lo, up = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    assert np.allclose(_kernels.tridiag_solve(lo, diag, up, rhs), _kernels_py.tridiag_solve(lo, diag, up, rhs), rtol=1e-14, atol=1e-14)


def test_tridiag_against_banded_solver():
    rng = np.random.default_rng(3)
    n = 100
    lo, up = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[1] = diag
    ab[2, :-1] = lo[1:]
    ref = solve_banded((1, 1), ab, rhs)
    for impl in (kernels.tridiag_solve, _kernels_py.tridiag_solve):
        assert np.allclose(impl(lo, diag, up, rhs), ref, rtol=1e-12, atol=1e-12)


def test_pure_python_switch():
    env = dict(os.environ, CROSSHEDGE_PURE_PYTHON="1")
    code = (
        "from crosshedge import kernels;"
        "from crosshedge.pricing import McConfig, static_price;"
        "from crosshedge.model import Geometric, LogShift;"
        "s = static_price(LogShift(1.0), Geometric(0.05, 0.3, 1.0), 0.0, 1.0, eta=1.0, horizon=1.0, cfg=McConfig(5000, 4, 3));"
        "print(kernels.BACKEND, repr(s.value))"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True, capture_output=True, text=True).stdout.split()
    assert out[0] == "python"
    from crosshedge.model import Geometric, LogShift
    from crosshedge.pricing import McConfig, static_price

    s = static_price(LogShift(1.0), Geometric(0.05, 0.3, 1.0), 0.0, 1.0, eta=1.0, horizon=1.0, cfg=McConfig(5000, 4, 3))
    assert float(out[1]) == s.value
