import os
import subprocess
import sys

import numpy as np
import pytest

from ess import kernels
from ess.matgen import power_system_spec, generate
from ess.numeric import parallel_factor, solve
from ess.sparse import residual_norm

try:
    CY = kernels.load("cython")
except ImportError:
    CY = None
PY = kernels.load("python")
BACKENDS = [PY] + ([CY] if CY is not None else [])
needs_cython = pytest.mark.skipif(CY is None, reason="compiled extension not built")


def front(seed, m=9):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, m)), np.arange(m, dtype=np.int64), np.arange(m, dtype=np.int64)


@pytest.mark.parametrize("k", BACKENDS, ids=lambda k: k.NAME)
def test_dense_lu_recomposes(k):
    F0, rows, cols = front(0)
    F = F0.copy()
    e = k.dense_lu(F, rows, cols, 9, 1e-3, 1e-14)
    assert e == 9
    L = np.tril(F, -1) + np.eye(9)
    U = np.triu(F)
    assert np.allclose(F0[np.ix_(rows, cols)], L @ U, atol=1e-12)


@pytest.mark.parametrize("k", BACKENDS, ids=lambda k: k.NAME)
def test_dense_lu_delays_zero_column(k):
    F = np.array([[0.0, 1.0, 2.0], [0.0, 3.0, 1.0], [1.0, 1.0, 5.0]])
    rows = np.arange(3, dtype=np.int64)
    cols = np.arange(3, dtype=np.int64)
    e = k.dense_lu(F, rows, cols, 2, 0.1, 1e-14)
    assert e == 1 and cols[0] == 1       # column 0 has no pivot among fully summed rows


@needs_cython
@pytest.mark.parametrize("seed", range(6))
def test_backends_agree(seed):
    F0, rows, cols = front(seed, 12)
    out = []
    for k in (PY, CY):
        F, r, c = F0.copy(), rows.copy(), cols.copy()
        e = k.dense_lu(F, r, c, 7, 0.1, 1e-14)
        out.append((e, F, r, c))
    (e1, F1, r1, c1), (e2, F2, r2, c2) = out
    assert e1 == e2 and np.array_equal(r1, r2) and np.array_equal(c1, c2)
    assert np.allclose(F1, F2, rtol=1e-12, atol=1e-12)


@needs_cython
def test_scatter_and_triangular_kernels_agree():
    rng = np.random.default_rng(3)
    C = rng.standard_normal((4, 4))
    rm = np.array([5, 1, 3, 0], dtype=np.int64)
    cm = np.array([2, 4, 0, 1], dtype=np.int64)
    ri = rng.integers(0, 6, 20).astype(np.int64)
    ci = rng.integers(0, 6, 20).astype(np.int64)
    vals = rng.standard_normal(20)
    Lp = rng.standard_normal((7, 3))
    Up = rng.standard_normal((3, 7)) + 5 * np.eye(3, 7)
    res = []
    for k in (PY, CY):
        F = np.zeros((6, 6))
        k.scatter_add(F, rm, cm, C)
        k.scatter_entries(F, ri, ci, vals)
        w = np.arange(7.0)
        k.front_forward(Lp, w)
        x = np.arange(7.0) + 1
        k.front_backward(Up, x)
        res.append((F, w, x))
    for a, b in zip(*res):
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_env_forces_python_backend():
    env = dict(os.environ, ESS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ess.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
def test_full_factorization_same_on_both_backends(monkeypatch):
    a, _ = generate(power_system_spec(400, seed=11))
    b = np.ones(a.n)
    results = []
    for k in (PY, CY):
        for name in ("dense_lu", "scatter_add", "scatter_entries", "front_forward",
                     "front_backward"):
            monkeypatch.setattr(kernels, name, getattr(k, name))
        lu, _ = parallel_factor(a, cores=2)
        x = solve(lu, b)
        assert residual_norm(a, x, b) <= 1e-10
        results.append(x)
    assert np.allclose(results[0], results[1], rtol=1e-12)
