import os
import subprocess
import sys

import numpy as np
import pytest

from multimean import _accel_py, _backend

try:
    from multimean import _accel
except ImportError:  # pragma: no cover - extension not built
    _accel = None

needs_ext = pytest.mark.skipif(_accel is None, reason="compiled extension not built")


def random_qp(rng, n):
    x = rng.standard_normal((n, n + 2))
    a = x @ x.T / n
    b = rng.standard_normal(n)
    return np.ascontiguousarray(a), b


def run_loop(mod, a, b, free, **kw):
    w = np.where(free, 1.0, 0.0)
    w /= w.sum()
    args = dict(eta0=50.0, n_bags=a.shape[0], t_max=300, tol=1e-10, gap_tol=1e-4, scale=float(np.diag(a).max()), clip=50.0)
    args.update(kw)
    t = mod.egd_loop(a, b, w, free, args["eta0"], args["n_bags"], args["t_max"], args["tol"],
                     args["gap_tol"], args["scale"], args["clip"])
    return w, t


def test_backend_name():
    assert _backend.NAME in ("cython", "python")
    if _accel is not None:
        assert _backend.NAME == "cython"


@needs_ext
@pytest.mark.parametrize("seed", range(8))
def test_egd_parity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    a, b = random_qp(rng, n)
    free = rng.random(n) < 0.7
    free[0] = True
    w_py, t_py = run_loop(_accel_py, a, b, free)
    w_cy, t_cy = run_loop(_accel, a, b, free)
    assert t_py == t_cy
    np.testing.assert_allclose(w_cy, w_py, atol=1e-12)
    assert np.all(w_cy[~free] == 0.0)


@needs_ext
@pytest.mark.parametrize("gap_tol", [0.0, 1e-4, np.inf])
def test_egd_parity_gap_rule(gap_tol):
    rng = np.random.default_rng(21)
    a, b = random_qp(rng, 7)
    free = np.ones(7, dtype=bool)
    w_py, t_py = run_loop(_accel_py, a, b, free, gap_tol=gap_tol, tol=1e-6)
    w_cy, t_cy = run_loop(_accel, a, b, free, gap_tol=gap_tol, tol=1e-6)
    assert t_py == t_cy
    np.testing.assert_allclose(w_cy, w_py, atol=1e-12)


def test_gap_rule_runs_longer():
    rng = np.random.default_rng(4)
    a, b = random_qp(rng, 6)
    free = np.ones(6, dtype=bool)
    _, t_loose = run_loop(_backend, a, b, free, gap_tol=np.inf, tol=1e-4)
    _, t_gap = run_loop(_backend, a, b, free, gap_tol=0.0, tol=1e-4)
    assert t_gap >= t_loose


def test_record_is_monotone():
    rng = np.random.default_rng(9)
    a, b = random_qp(rng, 5)
    w = np.full(5, 0.2)
    rec = []
    _accel_py.egd_loop(a, b, w, np.ones(5, bool), 50.0, 5, 200, 1e-12, 1e-4, float(a.diagonal().max()), 50.0, rec)
    f = [0.5 * v @ a @ v + b @ v for v in rec]
    assert np.all(np.diff(f) <= 1e-12 * (1 + np.abs(f[:-1])))


@needs_ext
def test_subsample_parity(rng):
    x = rng.standard_normal((15, 3))
    k = np.ascontiguousarray(x @ x.T)
    idx = np.ascontiguousarray(rng.integers(0, 15, (200, 4)), dtype=np.int64)
    np.testing.assert_allclose(_accel.subsample_terms(k, idx), _accel_py.subsample_terms(k, idx), rtol=1e-12)


def test_subsample_by_hand():
    k = np.arange(16, dtype=float).reshape(4, 4)
    idx = np.array([[0, 1, 2, 3]], dtype=np.int64)
    # K01 K02 = 1 * 2, K01 K23 = 1 * 11
    assert _backend.subsample_terms(k, idx) == (2.0, 11.0)


def test_pure_python_switch():
    env = dict(os.environ, MULTIMEAN_PURE_PYTHON="1")
    code = "from multimean import _backend; print(_backend.NAME)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
