# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in ``_fallback.py`` with the same
signature and return convention. Failures are reported as a step index
(``-1`` means success) so the caller can raise with context; no Python
exceptions are raised from inside ``nogil`` sections.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, sqrt, log, fabs, isfinite, HUGE_VAL

cnp.import_array()

cdef double BLOWUP = 1e6


# --------------------------------------------------------------------------
# Lorenz 96
# --------------------------------------------------------------------------

cdef inline void _l96_rhs(const double* u, double F, Py_ssize_t D,
                          double* out) noexcept nogil:
    cdef Py_ssize_t k, km1, km2, kp1
    for k in range(D):
        km1 = k - 1 if k >= 1 else k - 1 + D
        km2 = k - 2 if k >= 2 else k - 2 + D
        kp1 = k + 1 if k + 1 < D else k + 1 - D
        out[k] = (u[kp1] - u[km2]) * u[km1] - u[k] + F


cdef inline void _l96_jvp(const double* u, const double* v, Py_ssize_t D,
                          double* out) noexcept nogil:
    cdef Py_ssize_t k, km1, km2, kp1
    for k in range(D):
        km1 = k - 1 if k >= 1 else k - 1 + D
        km2 = k - 2 if k >= 2 else k - 2 + D
        kp1 = k + 1 if k + 1 < D else k + 1 - D
        out[k] = (v[kp1] - v[km2]) * u[km1] + (u[kp1] - u[km2]) * v[km1] - v[k]


cdef inline bint _l96_rk4(double* u, double F, double dt, Py_ssize_t D,
                          double* k1, double* k2, double* k3, double* k4,
                          double* tmp) noexcept nogil:
    """Advance u in place; return False on blow-up."""
    cdef Py_ssize_t i
    cdef double h2 = 0.5 * dt, x
    _l96_rhs(u, F, D, k1)
    for i in range(D):
        tmp[i] = u[i] + h2 * k1[i]
    _l96_rhs(tmp, F, D, k2)
    for i in range(D):
        tmp[i] = u[i] + h2 * k2[i]
    _l96_rhs(tmp, F, D, k3)
    for i in range(D):
        tmp[i] = u[i] + dt * k3[i]
    _l96_rhs(tmp, F, D, k4)
    for i in range(D):
        x = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not isfinite(x) or fabs(x) > BLOWUP:
            return False
        u[i] = x
    return True


def l96_trajectory(const double[::1] u0, double F, double dt,
                   Py_ssize_t n_transient, Py_ssize_t n_steps):
    cdef Py_ssize_t D = u0.shape[0]
    cdef double[::1] u = np.array(u0, dtype=np.float64, copy=True)
    cdef double[:, ::1] scratch = np.empty((5, D), dtype=np.float64)
    out_arr = np.empty((n_steps, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t step, i, fail = -1
    with nogil:
        for step in range(n_transient + n_steps):
            if not _l96_rk4(&u[0], F, dt, D, &scratch[0, 0], &scratch[1, 0],
                            &scratch[2, 0], &scratch[3, 0], &scratch[4, 0]):
                fail = step
                break
            if step >= n_transient:
                for i in range(D):
                    out[step - n_transient, i] = u[i]
    return out_arr, fail


cdef double _mgs(double* Q, Py_ssize_t k, Py_ssize_t n, double* rdiag) noexcept nogil:
    """Modified Gram-Schmidt on the k rows of Q (row-major, length n).

    Writes the R diagonal into rdiag and returns its minimum.
    """
    cdef Py_ssize_t i, j, m
    cdef double proj, nrm, rmin = HUGE_VAL
    cdef double* qj
    cdef double* qi
    for j in range(k):
        qj = Q + j * n
        for i in range(j):
            qi = Q + i * n
            proj = 0.0
            for m in range(n):
                proj += qj[m] * qi[m]
            for m in range(n):
                qj[m] -= proj * qi[m]
        nrm = 0.0
        for m in range(n):
            nrm += qj[m] * qj[m]
        nrm = sqrt(nrm)
        rdiag[j] = nrm
        if nrm < rmin:
            rmin = nrm
        if nrm > 0.0:
            for m in range(n):
                qj[m] /= nrm
    return rmin


def l96_lyapunov(const double[::1] u0, double F, double dt,
                 const double[:, ::1] Q0, Py_ssize_t n_transient,
                 Py_ssize_t n_steps, Py_ssize_t qr_interval):
    """Co-integrate the RK4 trajectory and its exact tangent map.

    Q0 holds the k initial tangent vectors as rows. Returns
    ``(log_sums, u_final, fail_step, min_rdiag)``; log sums only cover
    re-orthonormalizations after the transient.
    """
    cdef Py_ssize_t D = u0.shape[0]
    cdef Py_ssize_t k = Q0.shape[0]
    cdef double[::1] u = np.array(u0, dtype=np.float64, copy=True)
    cdef double[:, ::1] Q = np.array(Q0, dtype=np.float64, copy=True)
    cdef double[:, ::1] s = np.empty((5, D), dtype=np.float64)
    cdef double[:, ::1] T = np.empty((5 * k, D), dtype=np.float64)
    sums_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    cdef double[::1] rdiag = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t step, i, j, fail = -1
    cdef Py_ssize_t total = n_transient + n_steps
    cdef double h2 = 0.5 * dt, x, rmin, min_rdiag = HUGE_VAL
    cdef double *k1, *k2, *k3, *k4, *tmp
    cdef double *v, *K1, *K2, *K3, *K4, *vt
    with nogil:
        k1 = &s[0, 0]; k2 = &s[1, 0]; k3 = &s[2, 0]; k4 = &s[3, 0]; tmp = &s[4, 0]
        for step in range(total):
            # stage 1
            _l96_rhs(&u[0], F, D, k1)
            for j in range(k):
                _l96_jvp(&u[0], &Q[j, 0], D, &T[5 * j, 0])
            # stage 2
            for i in range(D):
                tmp[i] = u[i] + h2 * k1[i]
            for j in range(k):
                v = &Q[j, 0]; K1 = &T[5 * j, 0]; vt = &T[5 * j + 4, 0]
                for i in range(D):
                    vt[i] = v[i] + h2 * K1[i]
                _l96_jvp(tmp, vt, D, &T[5 * j + 1, 0])
            _l96_rhs(tmp, F, D, k2)
            # stage 3
            for i in range(D):
                tmp[i] = u[i] + h2 * k2[i]
            for j in range(k):
                v = &Q[j, 0]; K2 = &T[5 * j + 1, 0]; vt = &T[5 * j + 4, 0]
                for i in range(D):
                    vt[i] = v[i] + h2 * K2[i]
                _l96_jvp(tmp, vt, D, &T[5 * j + 2, 0])
            _l96_rhs(tmp, F, D, k3)
            # stage 4
            for i in range(D):
                tmp[i] = u[i] + dt * k3[i]
            for j in range(k):
                v = &Q[j, 0]; K3 = &T[5 * j + 2, 0]; vt = &T[5 * j + 4, 0]
                for i in range(D):
                    vt[i] = v[i] + dt * K3[i]
                _l96_jvp(tmp, vt, D, &T[5 * j + 3, 0])
            _l96_rhs(tmp, F, D, k4)
            # combine
            for j in range(k):
                v = &Q[j, 0]
                K1 = &T[5 * j, 0]; K2 = &T[5 * j + 1, 0]
                K3 = &T[5 * j + 2, 0]; K4 = &T[5 * j + 3, 0]
                for i in range(D):
                    v[i] = v[i] + dt / 6.0 * (K1[i] + 2.0 * K2[i] + 2.0 * K3[i] + K4[i])
            for i in range(D):
                x = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(x) or fabs(x) > BLOWUP:
                    fail = step
                u[i] = x
            if fail >= 0:
                break
            if (step + 1) % qr_interval == 0 or step + 1 == total:
                rmin = _mgs(&Q[0, 0], k, D, &rdiag[0])
                if step >= n_transient:
                    if rmin < min_rdiag:
                        min_rdiag = rmin
                    if rmin > 0.0:
                        for j in range(k):
                            sums[j] += log(rdiag[j])
    return sums_arr, np.asarray(u), fail, min_rdiag


# --------------------------------------------------------------------------
# Reservoir
# --------------------------------------------------------------------------

cdef inline void _rc_preact(const int* indptr, const int* indices, const double* data,
                            const double* W_in, const double* r, const double* u,
                            double bias, Py_ssize_t N, Py_ssize_t D,
                            double* z) noexcept nogil:
    """z = A r + W_in u + bias."""
    cdef Py_ssize_t i, p, d
    cdef double acc
    for i in range(N):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * r[indices[p]]
        for d in range(D):
            acc += W_in[i * D + d] * u[d]
        z[i] = acc + bias


cdef inline void _readout(const double* W_out, const double* r, Py_ssize_t N,
                          Py_ssize_t D, double* u) noexcept nogil:
    cdef Py_ssize_t i, d
    cdef double acc
    for d in range(D):
        acc = 0.0
        for i in range(N):
            acc += W_out[d * N + i] * r[i]
        u[d] = acc


def rc_drive(const int[::1] indptr, const int[::1] indices, const double[::1] data,
             const double[:, ::1] W_in, double bias, double alpha,
             const double[::1] r0, const double[:, ::1] U):
    """Open-loop driving; row t of the result is the state after consuming U[t]."""
    cdef Py_ssize_t N = r0.shape[0]
    cdef Py_ssize_t D = W_in.shape[1]
    cdef Py_ssize_t T = U.shape[0]
    states_arr = np.empty((T, N), dtype=np.float64)
    cdef double[:, ::1] states = states_arr
    cdef double[::1] r = np.array(r0, dtype=np.float64, copy=True)
    cdef double[::1] z = np.empty(N, dtype=np.float64)
    cdef Py_ssize_t t, i
    if T == 0:
        return states_arr
    with nogil:
        for t in range(T):
            _rc_preact(&indptr[0], &indices[0], &data[0], &W_in[0, 0], &r[0],
                       &U[t, 0], bias, N, D, &z[0])
            for i in range(N):
                r[i] = alpha * tanh(z[i]) + (1.0 - alpha) * r[i]
                states[t, i] = r[i]
    return states_arr


def rc_forecast(const int[::1] indptr, const int[::1] indices, const double[::1] data,
                const double[:, ::1] W_in, const double[:, ::1] W_out, double bias,
                double alpha, const double[::1] r0, Py_ssize_t n_steps):
    """Closed-loop forecast. Returns ``(outputs, r_final, fail_step)``."""
    cdef Py_ssize_t N = r0.shape[0]
    cdef Py_ssize_t D = W_in.shape[1]
    out_arr = np.empty((n_steps, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] r = np.array(r0, dtype=np.float64, copy=True)
    cdef double[::1] z = np.empty(N, dtype=np.float64)
    cdef double[::1] u = np.empty(D, dtype=np.float64)
    cdef Py_ssize_t t, i, d, fail = -1
    with nogil:
        for t in range(n_steps):
            _readout(&W_out[0, 0], &r[0], N, D, &u[0])
            _rc_preact(&indptr[0], &indices[0], &data[0], &W_in[0, 0], &r[0],
                       &u[0], bias, N, D, &z[0])
            for i in range(N):
                r[i] = alpha * tanh(z[i]) + (1.0 - alpha) * r[i]
            _readout(&W_out[0, 0], &r[0], N, D, &u[0])
            for d in range(D):
                if not isfinite(u[d]):
                    fail = t
                out[t, d] = u[d]
            if fail >= 0:
                break
    return out_arr, np.asarray(r), fail


def rc_lyapunov(const int[::1] indptr, const int[::1] indices, const double[::1] data,
                const double[:, ::1] W_in, const double[:, ::1] W_out, double bias,
                double alpha, const double[::1] r0, const double[:, ::1] Q0,
                Py_ssize_t n_transient, Py_ssize_t n_steps, Py_ssize_t qr_interval):
    """Per-step log growth sums of k tangent vectors of the autonomous map.

    Returns ``(log_sums, r_final, fail_step, min_rdiag)``.
    """
    cdef Py_ssize_t N = r0.shape[0]
    cdef Py_ssize_t D = W_in.shape[1]
    cdef Py_ssize_t k = Q0.shape[0]
    cdef double[::1] r = np.array(r0, dtype=np.float64, copy=True)
    cdef double[:, ::1] Q = np.array(Q0, dtype=np.float64, copy=True)
    cdef double[::1] z = np.empty(N, dtype=np.float64)
    cdef double[::1] sd = np.empty(N, dtype=np.float64)
    cdef double[::1] w = np.empty(N, dtype=np.float64)
    cdef double[::1] u = np.empty(D, dtype=np.float64)
    cdef double[::1] rdiag = np.empty(k, dtype=np.float64)
    sums_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    cdef Py_ssize_t t, i, j, fail = -1
    cdef Py_ssize_t total = n_transient + n_steps
    cdef double th, rmin, min_rdiag = HUGE_VAL
    with nogil:
        for t in range(total):
            _readout(&W_out[0, 0], &r[0], N, D, &u[0])
            _rc_preact(&indptr[0], &indices[0], &data[0], &W_in[0, 0], &r[0],
                       &u[0], bias, N, D, &z[0])
            for i in range(N):
                th = tanh(z[i])
                sd[i] = alpha * (1.0 - th * th)
                r[i] = alpha * th + (1.0 - alpha) * r[i]
                if not isfinite(r[i]):
                    fail = t
            if fail >= 0:
                break
            for j in range(k):
                _readout(&W_out[0, 0], &Q[j, 0], N, D, &u[0])
                _rc_preact(&indptr[0], &indices[0], &data[0], &W_in[0, 0], &Q[j, 0],
                           &u[0], 0.0, N, D, &w[0])
                for i in range(N):
                    Q[j, i] = sd[i] * w[i] + (1.0 - alpha) * Q[j, i]
            if (t + 1) % qr_interval == 0 or t + 1 == total:
                rmin = _mgs(&Q[0, 0], k, N, &rdiag[0])
                if t >= n_transient:
                    if rmin < min_rdiag:
                        min_rdiag = rmin
                    if rmin > 0.0:
                        for j in range(k):
                            sums[j] += log(rdiag[j])
    return sums_arr, np.asarray(r), fail, min_rdiag
