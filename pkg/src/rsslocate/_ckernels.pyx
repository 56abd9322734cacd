# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and results as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, pow, fabs

cnp.import_array()


cdef double _objective(const double[::1] theta, const double[:, ::1] sensors,
                       const double[::1] logr, double alpha, double log_beta,
                       double b2m1, double d_min, double[::1] grad, bint want_grad) noexcept nogil:
    cdef Py_ssize_t m_count = sensors.shape[0]
    cdef Py_ssize_t k = theta.shape[0] // 3
    cdef Py_ssize_t m, j
    cdef double f = 0.0
    cdef double su, sv, du, dv, d2, g, s1, s2, q, sig2, mu, res
    cdef double f_sig, f_mu, dsig_ds1, dsig_ds2, w, df_ds1, df_ds2, dg, radial
    cdef double dmin2 = d_min * d_min
    cdef double half_alpha = -0.5 * alpha
    cdef double gk[64]
    cdef double dk2[64]
    cdef double duk[64]
    cdef double dvk[64]
    cdef bint clamped[64]

    if want_grad:
        for j in range(3 * k):
            grad[j] = 0.0

    for m in range(m_count):
        su = sensors[m, 0]
        sv = sensors[m, 1]
        s1 = 0.0
        s2 = 0.0
        for j in range(k):
            du = theta[j] - su
            dv = theta[k + j] - sv
            d2 = du * du + dv * dv
            clamped[j] = d2 < dmin2
            if clamped[j]:
                d2 = dmin2
            g = theta[2 * k + j] * pow(d2, half_alpha)
            gk[j] = g
            dk2[j] = d2
            duk[j] = du
            dvk[j] = dv
            s1 = s1 + g
            s2 = s2 + g * g
        q = b2m1 * s2 / (s1 * s1)
        sig2 = log1p(q)
        mu = log_beta + log(s1) - 0.5 * sig2
        res = logr[m] - mu
        f += log(sig2) + res * res / sig2
        if want_grad:
            f_sig = 1.0 / sig2 - res * res / (sig2 * sig2)
            f_mu = -2.0 * res / sig2
            dsig_ds1 = -2.0 * q / (s1 * (1.0 + q))
            dsig_ds2 = b2m1 / (s1 * s1 * (1.0 + q))
            w = f_sig - 0.5 * f_mu
            df_ds1 = w * dsig_ds1 + f_mu / s1
            df_ds2 = w * dsig_ds2
            for j in range(k):
                dg = (df_ds1 + 2.0 * gk[j] * df_ds2) * gk[j]
                if not clamped[j]:
                    radial = -alpha * dg / dk2[j]
                    grad[j] += radial * duk[j]
                    grad[k + j] += radial * dvk[j]
                grad[2 * k + j] += dg
    if want_grad:
        for j in range(k):
            grad[2 * k + j] = grad[2 * k + j] / theta[2 * k + j]
    return f


def _check_k(theta):
    if theta.shape[0] % 3 or theta.shape[0] // 3 > 64:
        raise ValueError("theta must hold 3K entries with K <= 64")


def mle_objective(theta, sensors, logr, double alpha, double log_beta, double b2m1, double d_min):
    _check_k(theta)
    cdef double[::1] dummy = np.empty(0)
    return _objective(theta, sensors, logr, alpha, log_beta, b2m1, d_min, dummy, False)


def mle_objective_grad(theta, sensors, logr, double alpha, double log_beta, double b2m1, double d_min):
    _check_k(theta)
    grad = np.empty(theta.shape[0])
    cdef double[::1] gv = grad
    cdef double f = _objective(theta, sensors, logr, alpha, log_beta, b2m1, d_min, gv, True)
    return f, grad


cdef inline double _clip01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef double _residual(double[::1] s, double[::1] g) noexcept nogil:
    cdef Py_ssize_t i
    cdef double r = 0.0, t
    for i in range(s.shape[0]):
        t = fabs(s[i] - _clip01(s[i] - g[i]))
        if t > r:
            r = t
    return r


def box_qp_pg(B_in, c_in, s0, double tol, long max_iter):
    """Projected gradient with BB trial steps and monotone Armijo on the unit box."""
    cdef const double[:, ::1] B = np.ascontiguousarray(B_in, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    s_arr = np.clip(np.array(s0, dtype=np.float64), 0.0, 1.0)
    cdef double[::1] s = s_arr
    cdef double[::1] g = np.empty(n)
    cdef double[::1] s_new = np.empty(n)
    cdef double[::1] ds = np.empty(n)
    cdef double[::1] Bds = np.empty(n)
    cdef Py_ssize_t i, j
    cdef double L = 0.0, row, step_min, step, t, f, df, gds, dBd, sy, ss, res, acc
    cdef long it = 0

    for i in range(n):
        row = 0.0
        for j in range(n):
            row += fabs(B[i, j])
        if row > L:
            L = row
    step_min = 1.0 / L if L > 0 else 1.0

    f = 0.0
    for i in range(n):
        acc = c[i]
        for j in range(n):
            acc += B[i, j] * s[j]
        g[i] = acc
    for i in range(n):
        f += 0.5 * s[i] * (g[i] - c[i]) + c[i] * s[i]

    step = step_min
    res = _residual(s, g) if n else 0.0
    with nogil:
        while res > tol and it < max_iter:
            it += 1
            t = step
            while True:
                gds = 0.0
                for i in range(n):
                    s_new[i] = _clip01(s[i] - t * g[i])
                    ds[i] = s_new[i] - s[i]
                    gds += g[i] * ds[i]
                dBd = 0.0
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        acc += B[i, j] * ds[j]
                    Bds[i] = acc
                    dBd += ds[i] * acc
                df = gds + 0.5 * dBd
                if df <= 1e-4 * gds or t <= step_min:
                    break
                t = 0.5 * t
                if t < step_min:
                    t = step_min
            if not df <= 0:
                for i in range(n):
                    s_new[i] = s[i]
                    ds[i] = 0.0
                    Bds[i] = 0.0
                df = 0.0
            sy = 0.0
            ss = 0.0
            for i in range(n):
                s[i] = s_new[i]
                g[i] = g[i] + Bds[i]
                sy += ds[i] * Bds[i]
                ss += ds[i] * ds[i]
            f = f + df
            res = _residual(s, g)
            if ss == 0:
                break
            step = ss / sy if sy > 0 else 1e10 * step_min
            if step < step_min:
                step = step_min
            if step > 1e10 * step_min:
                step = 1e10 * step_min
    return s_arr, f, res, it
