"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np


def face_enumeration_qp(B, c, tol=1e-9):
    """Brute-force min of 0.5 s'Bs + c's over [0,1]^n.

    Every {lower, free, upper} pattern fixes the bound coordinates and
    solves the free block; feasible consistent solutions are kept.
    """
    B = np.asarray(B, float)
    c = np.asarray(c, float)
    n = len(c)
    best_f, best_s = math.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        s = np.where(pattern == 2, 1.0, 0.0)
        free = pattern == 1
        if free.any():
            Bff = B[np.ix_(free, free)]
            rhs = -(c[free] + B[np.ix_(free, ~free)] @ s[~free])
            x, *_ = np.linalg.lstsq(Bff, rhs, rcond=None)
            if np.max(np.abs(Bff @ x - rhs)) > 1e-8 * (1 + np.max(np.abs(rhs))):
                continue
            if np.any(x < -tol) or np.any(x > 1 + tol):
                continue
            s[free] = np.clip(x, 0, 1)
        f = 0.5 * s @ B @ s + c @ s
        if f < best_f:
            best_f, best_s = f, s
    return best_s, best_f


def rss_loop(sensors, positions, powers, alpha, d_min=1.0):
    """Noiseless received power summed with plain Python loops."""
    out = []
    for su, sv in sensors:
        tot = 0.0
        for (u, v), p in zip(positions, powers):
            d = max(math.hypot(su - u, sv - v), d_min)
            tot += p * d ** (-alpha)
        out.append(tot)
    return np.array(out)


def objective_loop(theta, sensors, r_hat, alpha, sigma_s, d_min=1.0):
    """Likelihood objective from the raw moment formulas, one sensor at a time."""
    k = len(theta) // 3
    b = math.exp(math.log(10) ** 2 * sigma_s ** 2 / 200)
    f = 0.0
    for (su, sv), r in zip(sensors, r_hat):
        e = 0.0
        var = 0.0
        for j in range(k):
            d = max(math.hypot(su - theta[j], sv - theta[k + j]), d_min)
            g = theta[2 * k + j] * d ** (-alpha)
            e += b * g
            var += b * b * (b * b - 1) * g * g
        mu = 2 * math.log(e) - 0.5 * math.log(e * e + var)
        s2 = math.log(e * e + var) - 2 * math.log(e)
        f += math.log(s2) + (math.log(r) - mu) ** 2 / s2
    return f


def central_diff(fun, x, rel_h=1e-4, points=5):
    """Central differences with ``h = rel_h * max(1, |x_i|)``; 3- or 5-point stencil."""
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel_h * max(1.0, abs(x[i]))

        def at(t):
            y = x.copy()
            y[i] += t
            return fun(y)
        if points == 3:
            g[i] = (at(h) - at(-h)) / (2 * h)
        else:
            g[i] = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
    return g
