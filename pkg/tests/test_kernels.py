"""The compiled extension and the numpy fallback must agree."""

import numpy as np
import pytest

from rcinvariants import _backend
from rcinvariants.invariants import initial_tangent_basis
from rcinvariants.reservoir import ReservoirParams, build_reservoir

fallback = _backend.get("python")
try:
    compiled = _backend.get("compiled")
except ImportError:  # pragma: no cover
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


@pytest.fixture(scope="module")
def rc_case():
    rng = np.random.default_rng(0)
    res = build_reservoir(ReservoirParams(N=60, rho_A=0.1, sigma_b=0.4, leak_rate=0.8), 4, 2)
    W_out = rng.normal(size=(4, 60)) * 0.2
    return res, np.ascontiguousarray(W_out), rng.uniform(-0.5, 0.5, 60), rng.normal(size=(300, 4))


def l96_start():
    return np.random.default_rng(1).uniform(7, 9, 10)


def test_backend_name():
    assert _backend.NAME in ("compiled", "python")


@needs_compiled
def test_l96_trajectory():
    a = compiled.l96_trajectory(l96_start(), 8.0, 0.01, 100, 500)
    b = fallback.l96_trajectory(l96_start(), 8.0, 0.01, 100, 500)
    np.testing.assert_allclose(np.asarray(a[0]), np.asarray(b[0]), atol=1e-10)
    assert a[1] == b[1] == -1


@needs_compiled
def test_l96_divergence_index():
    u0 = np.arange(1, 11) * 1e5
    a = compiled.l96_trajectory(u0, 8.0, 0.5, 0, 50)
    b = fallback.l96_trajectory(u0, 8.0, 0.5, 0, 50)
    assert a[1] == b[1] >= 0


@needs_compiled
def test_l96_lyapunov():
    Q0 = initial_tangent_basis(10, 10, 0)
    a = compiled.l96_lyapunov(l96_start(), 8.0, 0.01, Q0, 100, 2000, 10)
    b = fallback.l96_lyapunov(l96_start(), 8.0, 0.01, Q0, 100, 2000, 10)
    np.testing.assert_allclose(np.asarray(a[0]), np.asarray(b[0]), atol=1e-9)
    np.testing.assert_allclose(np.asarray(a[1]), np.asarray(b[1]), atol=1e-9)


@needs_compiled
def test_rc_drive(rc_case):
    res, _, r0, U = rc_case
    a = compiled.rc_drive(*res.kernel_args(), r0, U)
    b = fallback.rc_drive(*res.kernel_args(), r0, U)
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), atol=1e-13)


@needs_compiled
def test_rc_forecast(rc_case):
    res, W, r0, _ = rc_case
    args = (res.A.indptr, res.A.indices, res.A.data, res.W_in, W, 0.4, 0.8, r0, 200)
    a, b = compiled.rc_forecast(*args), fallback.rc_forecast(*args)
    np.testing.assert_allclose(np.asarray(a[0]), np.asarray(b[0]), atol=1e-11)
    np.testing.assert_allclose(np.asarray(a[1]), np.asarray(b[1]), atol=1e-11)
    assert a[2] == b[2] == -1


@needs_compiled
def test_rc_lyapunov(rc_case):
    res, W, r0, _ = rc_case
    Q0 = initial_tangent_basis(60, 5, 1)
    args = (res.A.indptr, res.A.indices, res.A.data, res.W_in, W, 0.4, 0.8, r0, Q0, 50, 1000, 10)
    a, b = compiled.rc_lyapunov(*args), fallback.rc_lyapunov(*args)
    np.testing.assert_allclose(np.asarray(a[0]), np.asarray(b[0]), atol=1e-8)
