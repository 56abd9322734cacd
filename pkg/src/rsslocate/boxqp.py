"""Convex quadratic programs over the unit box: ``min 0.5 s'Bs + c's, 0 <= s <= 1``.

The solver alternates short bursts of projected gradient (Barzilai-Borwein
trial step, monotone Armijo backtrack, ``1/L`` safeguard) with an exact
minimization over the current free coordinates.  The gradient bursts pick
out the active set; the face step finishes the job in a handful of rounds
instead of thousands of gradient iterations on ill-conditioned ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import box_qp_pg
from .scenario import InvalidArgument


@dataclass(frozen=True)
class QpProblem:
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        B = np.ascontiguousarray(self.B, dtype=float)
        c = np.ascontiguousarray(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        if B.shape != (n, n):
            raise InvalidArgument(f"B must be {n}x{n}, got {B.shape}")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(c))):
            raise InvalidArgument("QP data must be finite")
        scale = max(1.0, float(np.max(np.abs(B))) if n else 1.0)
        if np.max(np.abs(B - B.T), initial=0.0) > 1e-10 * scale:
            raise InvalidArgument("B must be symmetric")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def objective(self, s) -> float:
        return float(0.5 * s @ (self.B @ s) + self.c @ s)

    def residual(self, s) -> float:
        """Projected-gradient KKT residual ``||s - clip(s - (Bs + c))||_inf``."""
        if self.n == 0:
            return 0.0
        g = self.B @ s + self.c
        return float(np.max(np.abs(s - np.clip(s - g, 0.0, 1.0))))


@dataclass(frozen=True)
class QpSolution:
    s: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int


class QpNonConvergence(RuntimeError):
    def __init__(self, msg, best: QpSolution):
        super().__init__(msg)
        self.best = best


def is_psd(B, tol=1e-8) -> bool:
    return bool(np.linalg.eigvalsh(B).min() >= -tol)


def _face_step(p: QpProblem, s: np.ndarray) -> np.ndarray:
    g = p.B @ s + p.c
    free = np.flatnonzero((s > 0) & (s < 1))
    if free.size == 0:
        return s
    Bff = p.B[np.ix_(free, free)]
    try:
        step = np.linalg.solve(Bff, -g[free])
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(Bff, -g[free], rcond=None)[0]
    if not np.all(np.isfinite(step)):
        return s
    f0 = p.objective(s)
    t = 1.0
    for _ in range(40):
        trial = s.copy()
        trial[free] = np.clip(s[free] + t * step, 0.0, 1.0)
        ds = trial - s
        if ds @ ds > 0 and p.objective(trial) <= f0 + 1e-4 * (g @ ds):
            return trial
        t *= 0.5
    return s


def solve_box_qp(p: QpProblem, tol: float = 1e-8, max_iter: int = 10_000,
                 s0=None, burst: int = 10) -> QpSolution:
    """Minimize the box QP until the projected-gradient residual is at most ``tol``.

    Raises QpNonConvergence (carrying the best iterate) when ``max_iter``
    gradient iterations pass without meeting ``tol``.
    """
    s = np.zeros(p.n) if s0 is None else np.clip(np.asarray(s0, dtype=float), 0.0, 1.0)
    it = 0
    res = p.residual(s)
    while res > tol and it < max_iter:
        s, _, res, k = box_qp_pg(p.B, p.c, s, tol, min(burst, max_iter - it))
        it += max(k, 1)
        if res <= tol:
            break
        s = _face_step(p, s)
        res = p.residual(s)
    sol = QpSolution(s, p.objective(s), res, it)
    if res > tol:
        raise QpNonConvergence(f"box QP residual {res:.3g} > {tol:g} after {it} iterations", sol)
    return sol
