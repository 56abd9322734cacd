"""Pure numpy versions of the hot kernels (used when the extension is unavailable).

Signatures mirror ``_ckernels``:

* ``mle_objective(theta, sensors, logr, alpha, log_beta, b2m1, d_min)``
* ``mle_objective_grad(theta, sensors, logr, alpha, log_beta, b2m1, d_min)``
* ``box_qp_pg(B, c, s0, tol, max_iter)``

``theta`` is ``(u_1..u_K, v_1..v_K, P_1..P_K)``; ``b2m1`` is ``beta**2 - 1``.
"""

import numpy as np


def _terms(theta, sensors, alpha, d_min):
    k = theta.shape[0] // 3
    du = theta[None, :k] - sensors[:, :1]
    dv = theta[None, k:2 * k] - sensors[:, 1:2]
    d2 = du * du + dv * dv
    clamped = d2 < d_min * d_min
    d2 = np.where(clamped, d_min * d_min, d2)
    g = theta[None, 2 * k:] * d2 ** (-0.5 * alpha)
    return k, du, dv, d2, clamped, g


def mle_objective(theta, sensors, logr, alpha, log_beta, b2m1, d_min):
    _, _, _, _, _, g = _terms(theta, sensors, alpha, d_min)
    s1 = g.sum(axis=1)
    s2 = (g * g).sum(axis=1)
    sig2 = np.log1p(b2m1 * s2 / (s1 * s1))
    mu = log_beta + np.log(s1) - 0.5 * sig2
    res = logr - mu
    return float(np.sum(np.log(sig2) + res * res / sig2))


def mle_objective_grad(theta, sensors, logr, alpha, log_beta, b2m1, d_min):
    k, du, dv, d2, clamped, g = _terms(theta, sensors, alpha, d_min)
    s1 = g.sum(axis=1)
    s2 = (g * g).sum(axis=1)
    q = b2m1 * s2 / (s1 * s1)
    sig2 = np.log1p(q)
    mu = log_beta + np.log(s1) - 0.5 * sig2
    res = logr - mu
    f = float(np.sum(np.log(sig2) + res * res / sig2))

    f_sig = 1.0 / sig2 - res * res / (sig2 * sig2)
    f_mu = -2.0 * res / sig2
    dsig_ds1 = -2.0 * q / (s1 * (1.0 + q))
    dsig_ds2 = b2m1 / (s1 * s1 * (1.0 + q))
    w = f_sig - 0.5 * f_mu
    df_ds1 = w * dsig_ds1 + f_mu / s1
    df_ds2 = w * dsig_ds2
    df_dg = df_ds1[:, None] + 2.0 * g * df_ds2[:, None]

    dg = df_dg * g
    radial = np.where(clamped, 0.0, -alpha * dg / d2)
    grad = np.empty(3 * k)
    grad[:k] = (radial * du).sum(axis=0)
    grad[k:2 * k] = (radial * dv).sum(axis=0)
    grad[2 * k:] = dg.sum(axis=0) / theta[2 * k:]
    return f, grad


def box_qp_pg(B, c, s0, tol, max_iter):
    """Projected gradient on ``min 0.5 s'Bs + c's`` over the unit box.

    Barzilai-Borwein trial steps with a monotone Armijo backtrack; the
    safeguard step is ``1/L`` with ``L`` the largest Gershgorin row bound.
    Returns ``(s, objective, residual, iterations)``.
    """
    n = c.shape[0]
    L = float(np.max(np.abs(B).sum(axis=1))) if n else 0.0
    step_min = 1.0 / L if L > 0 else 1.0
    s = np.clip(s0, 0.0, 1.0)
    g = B @ s + c
    f = 0.5 * s @ (g - c) + c @ s
    step = step_min
    it = 0
    res = float(np.max(np.abs(s - np.clip(s - g, 0.0, 1.0)))) if n else 0.0
    while res > tol and it < max_iter:
        it += 1
        t = step
        while True:
            s_new = np.clip(s - t * g, 0.0, 1.0)
            ds = s_new - s
            Bds = B @ ds
            # exact quadratic change along ds
            df = g @ ds + 0.5 * ds @ Bds
            if df <= 1e-4 * (g @ ds) or t <= step_min:
                break
            t = max(0.5 * t, step_min)
        if not df <= 0:
            # 1/L with exact curvature bound cannot increase f; guard rounding
            df = 0.0
            s_new = s
            ds = s_new - s
            Bds = np.zeros(n)
        s = s_new
        g = g + Bds
        f = f + df
        sy = ds @ Bds
        ss = ds @ ds
        if ss == 0:
            res = float(np.max(np.abs(s - np.clip(s - g, 0.0, 1.0))))
            break
        step = ss / sy if sy > 0 else 1e10 * step_min
        step = min(max(step, step_min), 1e10 * step_min)
        res = float(np.max(np.abs(s - np.clip(s - g, 0.0, 1.0))))
    return s, float(f), res, it
