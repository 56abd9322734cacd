"""Stage two: F-W likelihood, its gradient, and gradient projection over the parameter box.

The decision vector is ``theta = (u_1..u_K, v_1..v_K, P_1..P_K)``.  The
constraints ``A theta >= b`` with ``A = [I; -I]`` are handled with the
working-set projection ``I - M'(MM')^-1 M``.  Since every row of ``M`` is
``+-e_i`` that matrix is a 0/1 diagonal, so it is applied as a mask;
``projection_matrix`` keeps the literal formula for cross-checking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .fw import DegenerateVariance, FwParams, LN10, fit_lognormal
from .scenario import D_MIN, InvalidArgument, Roi


@dataclass(frozen=True)
class Problem:
    """Everything the likelihood needs besides theta."""

    sensors: np.ndarray
    r_hat: np.ndarray
    alpha: float
    sigma_s: float

    def __post_init__(self):
        sensors = np.ascontiguousarray(self.sensors, dtype=float).reshape(-1, 2)
        r = np.ascontiguousarray(self.r_hat, dtype=float).reshape(-1)
        if len(r) != len(sensors):
            raise InvalidArgument("one observation per sensor required")
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise InvalidArgument("observations must be positive and finite")
        if self.sigma_s == 0:
            raise DegenerateVariance("sigma_s = 0: likelihood undefined")
        if self.sigma_s < 0:
            raise InvalidArgument("sigma_s must be nonnegative")
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "r_hat", r)
        object.__setattr__(self, "_logr", np.log(r))

    @property
    def log_beta(self) -> float:
        return LN10 ** 2 * self.sigma_s ** 2 / 200.0

    @property
    def b2m1(self) -> float:
        return math.expm1(2.0 * self.log_beta)

    def _args(self):
        return self.sensors, self._logr, float(self.alpha), self.log_beta, self.b2m1, D_MIN

    def f(self, theta) -> float:
        return _kernels.mle_objective(np.ascontiguousarray(theta, dtype=float), *self._args())

    def f_grad(self, theta):
        return _kernels.mle_objective_grad(np.ascontiguousarray(theta, dtype=float), *self._args())


def objective(theta, sensors, r_hat, params: FwParams) -> float:
    return Problem(sensors, r_hat, params.alpha, params.sigma_s).f(theta)


def gradient(theta, sensors, r_hat, params: FwParams) -> np.ndarray:
    return Problem(sensors, r_hat, params.alpha, params.sigma_s).f_grad(theta)[1]


def objective_reference(theta, sensors, r_hat, params: FwParams) -> float:
    """Termwise sum over sensors using the fw module's fit (slow, for checking)."""
    fit = fit_lognormal(theta, sensors, params)
    y = np.log(np.asarray(r_hat, dtype=float))
    return float(sum(math.log(s2) + (yy - mu) ** 2 / s2
                     for yy, mu, s2 in zip(y, fit.mu, fit.sigma2)))


@dataclass(frozen=True)
class BoxConstraints:
    """``A x >= b`` with ``A = [I; -I]`` and ``b = [lo; -hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def for_sources(cls, k: int, roi: Roi, p_low: float, p_high: float) -> "BoxConstraints":
        lo = np.concatenate([np.zeros(2 * k), np.full(k, p_low)])
        hi = np.concatenate([np.full(k, roi.l), np.full(k, roi.w), np.full(k, p_high)])
        return cls(lo, hi)

    @property
    def A(self) -> np.ndarray:
        n = len(self.lo)
        return np.vstack([np.eye(n), -np.eye(n)])

    @property
    def b(self) -> np.ndarray:
        return np.concatenate([self.lo, -self.hi])

    def feasible(self, x) -> bool:
        return bool(np.all(self.A @ x >= self.b))


def projection_matrix(M: np.ndarray) -> np.ndarray:
    """``I - M'(MM')^-1 M`` (identity when ``M`` has no rows)."""
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    return np.eye(n) - M.T @ np.linalg.solve(M @ M.T, M)


@dataclass
class SolveOptions:
    max_iter: int = 5000
    kkt_tol: float = 1e-8
    ftol: float = 1e-10
    stall_iters: int = 5
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    min_step: float = 1e-12
    max_step: float = 1e6


@dataclass
class SolveReport:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    reason: str
    trace: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.theta) // 3

    @property
    def positions(self) -> np.ndarray:
        k = self.k
        return np.column_stack([self.theta[:k], self.theta[k:2 * k]])

    @property
    def powers(self) -> np.ndarray:
        return self.theta[2 * self.k:]

    def to_dict(self) -> dict:
        return {
            "theta": [float(x) for x in self.theta],
            "sources": [{"u": float(u), "v": float(v), "p": float(p)}
                        for (u, v), p in zip(self.positions, self.powers)],
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "reason": self.reason,
            "trace": [float(x) for x in self.trace],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def gradient_projection(fun, x0, lo, hi, opts: SolveOptions | None = None) -> SolveReport:
    """Gradient projection for ``min fun(x)`` subject to ``lo <= x <= hi``.

    ``fun(x, grad=True)`` returns ``(f, g)``; ``fun(x)`` returns ``f``.
    Works in coordinates rescaled to the unit box.
    """
    opts = opts or SolveOptions()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = hi - lo
    if np.any(span < 0):
        raise InvalidArgument("lower bound above upper bound")
    span_safe = np.where(span > 0, span, 1.0)
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise InvalidArgument("initial point is infeasible")

    def to_x(z):
        return np.clip(lo + z * span, lo, hi)

    z = np.where(span > 0, (x0 - lo) / span_safe, 0.0)
    z = np.clip(z, 0.0, 1.0)
    f, gx = fun(to_x(z), grad=True)
    g = gx * span
    trace = [f]
    step = 1.0
    stall = 0
    it = 0
    reason = "max_iter"
    converged = False
    fixed = span == 0

    while it < opts.max_iter:
        # working set, projected direction, multiplier test
        at_lo = (z <= 0.0) | fixed
        at_hi = (z >= 1.0) & ~fixed
        working = at_lo | at_hi
        while True:
            d = np.where(working, 0.0, -g)
            d_norm = np.max(np.abs(d), initial=0.0)
            # multipliers of the working rows: +g for lower-bound rows, -g for upper
            lam = np.where(at_lo, g, np.where(at_hi, -g, np.inf))
            lam = np.where(working & ~fixed, lam, np.inf)
            j = int(np.argmin(lam))
            releasable = np.isfinite(lam[j]) and lam[j] < -opts.kkt_tol
            if d_norm > opts.kkt_tol and not (releasable and -lam[j] > d_norm):
                break
            if not releasable:
                d = None
                break
            # also release early when the bound blocks more descent than the free
            # block offers; otherwise the face is crawled until the stall test fires
            working[j] = False
        if d is None:
            reason, converged = "kkt", True
            break

        # longest feasible step along d, then Armijo
        with np.errstate(divide="ignore", invalid="ignore"):
            to_bound = np.where(d < 0, z / -d, np.where(d > 0, (1.0 - z) / d, np.inf))
        a_bar = float(np.min(to_bound))
        t = min(step, a_bar)
        slope = float(g @ d)
        accepted = False
        for _ in range(opts.max_backtracks):
            z_new = z + t * d
            if t == a_bar:
                hit = to_bound <= a_bar
                z_new[hit & (d < 0)] = 0.0
                z_new[hit & (d > 0)] = 1.0
            z_new = np.clip(z_new, 0.0, 1.0)
            f_new = fun(to_x(z_new))
            if f_new <= f + opts.c1 * t * slope:
                accepted = True
                break
            t *= opts.backtrack
        if not accepted:
            reason, converged = "line_search", True
            break

        # accept and refresh the gradient
        it += 1
        f_old, z_old, g_old = f, z, g
        z = z_new
        f, gx = fun(to_x(z), grad=True)
        g = gx * span
        trace.append(f)
        # Barzilai-Borwein length for the next trial step
        dz = z - z_old
        sy = float(dz @ (g - g_old))
        step = float(dz @ dz) / sy if sy > 0 else 1.0
        step = min(max(step, opts.min_step), opts.max_step)
        if abs(f_old - f) < opts.ftol * (1.0 + abs(f)):
            stall += 1
            if stall >= opts.stall_iters:
                reason, converged = "ftol", True
                break
        else:
            stall = 0

    return SolveReport(to_x(z), float(f), it, converged, reason, trace)


def solve(theta0, problem: Problem, bounds: BoxConstraints,
          opts: SolveOptions | None = None) -> SolveReport:
    """Minimize the F-W likelihood objective from ``theta0`` over ``bounds``."""

    def fun(x, grad=False):
        return problem.f_grad(x) if grad else problem.f(x)

    return gradient_projection(fun, theta0, bounds.lo, bounds.hi, opts)
