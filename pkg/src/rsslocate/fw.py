"""Fenton-Wilkinson fit of the per-sensor RSS sum to a single log-normal.

The shadowing factor ``10**(n/10)`` with ``n ~ N(0, sigma_s**2)`` has
``E[x**l] = beta**(l**2)`` where ``beta = exp((ln 10)**2 sigma_s**2 / 200)``.
The bare ratio ``(ln 10)**2 sigma_s**2 / 200`` is *not* a valid moment factor
(it is below one for sigma_s < 8.7 dB and makes the variance negative), so the
exponential form is used everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import D_MIN, InvalidArgument


class DegenerateVariance(ValueError):
    """Raised when sigma_s == 0: the fitted log-variance vanishes and the likelihood is undefined."""


LN10 = math.log(10.0)


def beta(sigma_s: float) -> float:
    if sigma_s < 0:
        raise InvalidArgument(f"sigma_s must be nonnegative, got {sigma_s}")
    return math.exp(LN10 ** 2 * sigma_s ** 2 / 200.0)


def single_source_log_variance(sigma_s: float) -> float:
    """``(ln 10)**2 sigma_s**2 / 100``: variance of ln r for one source."""
    return LN10 ** 2 * sigma_s ** 2 / 100.0


@dataclass(frozen=True)
class FwParams:
    alpha: float
    sigma_s: float

    @property
    def beta(self) -> float:
        return beta(self.sigma_s)


@dataclass(frozen=True)
class LogNormalFit:
    mu: np.ndarray
    sigma2: np.ndarray


def split_theta(theta, k: int | None = None):
    theta = np.asarray(theta, dtype=float)
    if k is None:
        if theta.size % 3:
            raise InvalidArgument("theta length must be a multiple of 3")
        k = theta.size // 3
    return theta[:k], theta[k:2 * k], theta[2 * k:3 * k]


def gains(theta, sensors, alpha: float) -> np.ndarray:
    """``P_k * d_mk^-alpha`` for the sources in ``theta``, shape ``(M, K)``."""
    u, v, p = split_theta(theta)
    sensors = np.asarray(sensors, dtype=float).reshape(-1, 2)
    d = np.hypot(u[None, :] - sensors[:, :1], v[None, :] - sensors[:, 1:2])
    d = np.maximum(d, D_MIN)
    return p[None, :] * d ** (-alpha)


def sum_moments(theta, sensors, params: FwParams):
    """Mean and variance of the shadowed RSS sum at each sensor."""
    g = gains(theta, sensors, params.alpha)
    b = params.beta
    mean = b * g.sum(axis=1)
    var = b * b * (b * b - 1.0) * (g * g).sum(axis=1)
    return mean, var


def fit_lognormal(theta, sensors, params: FwParams) -> LogNormalFit:
    if params.sigma_s == 0:
        raise DegenerateVariance("sigma_s = 0 gives zero log-variance; likelihood undefined")
    g = gains(theta, sensors, params.alpha)
    s1 = g.sum(axis=1)
    s2 = (g * g).sum(axis=1)
    b2m1 = math.expm1(2.0 * math.log(params.beta))
    # sigma2 = ln(E^2 + D) - 2 ln E, written without the common beta factors
    sigma2 = np.log1p(b2m1 * s2 / (s1 * s1))
    mu = np.log(s1) + math.log(params.beta) - 0.5 * sigma2
    return LogNormalFit(mu, sigma2)
