"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and return conventions match the compiled module exactly, so
``_backend`` can swap one for the other. These are slower (Python-level
step loop) but need no compiler.
"""

import numpy as np
import scipy.sparse as sp

BLOWUP = 1e6


def _l96_rhs(u, F):
    return (np.roll(u, -1, axis=0) - np.roll(u, 2, axis=0)) * np.roll(u, 1, axis=0) - u + F


def _l96_jvp(u, V):
    # V holds tangent vectors as columns, shape (D, k)
    um1 = np.roll(u, 1)[:, None]
    du = (np.roll(u, -1) - np.roll(u, 2))[:, None]
    return (np.roll(V, -1, axis=0) - np.roll(V, 2, axis=0)) * um1 + du * np.roll(V, 1, axis=0) - V


def l96_trajectory(u0, F, dt, n_transient, n_steps):
    u = np.array(u0, dtype=np.float64, copy=True)
    D = u.shape[0]
    out = np.empty((n_steps, D))
    h2 = 0.5 * dt
    for step in range(n_transient + n_steps):
        k1 = _l96_rhs(u, F)
        k2 = _l96_rhs(u + h2 * k1, F)
        k3 = _l96_rhs(u + h2 * k2, F)
        k4 = _l96_rhs(u + dt * k3, F)
        x = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP:
            return out, step
        u = x
        if step >= n_transient:
            out[step - n_transient] = u
    return out, -1


def _reorthonormalize(V):
    """QR of the column block V with a positive R diagonal."""
    Q, R = np.linalg.qr(V)
    d = np.diag(R).copy()
    sign = np.where(d < 0, -1.0, 1.0)
    return Q * sign, np.abs(d)


def l96_lyapunov(u0, F, dt, Q0, n_transient, n_steps, qr_interval):
    u = np.array(u0, dtype=np.float64, copy=True)
    V = np.array(Q0, dtype=np.float64).T.copy()
    k = V.shape[1]
    sums = np.zeros(k)
    min_rdiag = np.inf
    h2 = 0.5 * dt
    total = n_transient + n_steps
    for step in range(total):
        k1 = _l96_rhs(u, F)
        K1 = _l96_jvp(u, V)
        u2 = u + h2 * k1
        K2 = _l96_jvp(u2, V + h2 * K1)
        k2 = _l96_rhs(u2, F)
        u3 = u + h2 * k2
        K3 = _l96_jvp(u3, V + h2 * K2)
        k3 = _l96_rhs(u3, F)
        u4 = u + dt * k3
        K4 = _l96_jvp(u4, V + dt * K3)
        k4 = _l96_rhs(u4, F)
        V = V + dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP:
            return sums, u, step, min_rdiag
        if (step + 1) % qr_interval == 0 or step + 1 == total:
            V, rdiag = _reorthonormalize(V)
            if step >= n_transient:
                rmin = rdiag.min()
                min_rdiag = min(min_rdiag, rmin)
                if rmin > 0.0:
                    sums += np.log(rdiag)
    return sums, u, -1, min_rdiag


def _csr(indptr, indices, data):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def rc_drive(indptr, indices, data, W_in, bias, alpha, r0, U):
    A = _csr(indptr, indices, data)
    r = np.array(r0, dtype=np.float64, copy=True)
    U = np.asarray(U, dtype=np.float64)
    states = np.empty((U.shape[0], r.shape[0]))
    drive_in = U @ W_in.T
    for t in range(U.shape[0]):
        r = alpha * np.tanh(A @ r + drive_in[t] + bias) + (1.0 - alpha) * r
        states[t] = r
    return states


def rc_forecast(indptr, indices, data, W_in, W_out, bias, alpha, r0, n_steps):
    A = _csr(indptr, indices, data)
    r = np.array(r0, dtype=np.float64, copy=True)
    out = np.empty((n_steps, W_in.shape[1]))
    for t in range(n_steps):
        u = W_out @ r
        r = alpha * np.tanh(A @ r + W_in @ u + bias) + (1.0 - alpha) * r
        y = W_out @ r
        out[t] = y
        if not np.all(np.isfinite(y)):
            return out, r, t
    return out, r, -1


def rc_lyapunov(indptr, indices, data, W_in, W_out, bias, alpha, r0, Q0,
                n_transient, n_steps, qr_interval):
    A = _csr(indptr, indices, data)
    r = np.array(r0, dtype=np.float64, copy=True)
    V = np.array(Q0, dtype=np.float64).T.copy()
    k = V.shape[1]
    sums = np.zeros(k)
    min_rdiag = np.inf
    total = n_transient + n_steps
    for t in range(total):
        th = np.tanh(A @ r + W_in @ (W_out @ r) + bias)
        sd = alpha * (1.0 - th * th)
        r = alpha * th + (1.0 - alpha) * r
        if not np.all(np.isfinite(r)):
            return sums, r, t, min_rdiag
        V = sd[:, None] * (A @ V + W_in @ (W_out @ V)) + (1.0 - alpha) * V
        if (t + 1) % qr_interval == 0 or t + 1 == total:
            V, rdiag = _reorthonormalize(V)
            if t >= n_transient:
                rmin = rdiag.min()
                min_rdiag = min(min_rdiag, rmin)
                if rmin > 0.0:
                    sums += np.log(rdiag)
    return sums, r, -1, min_rdiag
