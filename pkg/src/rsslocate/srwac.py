"""Stage one: sparse recovery on the grid, threshold truncation, clustering, weighted averaging."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .boxqp import QpNonConvergence, QpProblem, solve_box_qp
from .rng import CLUSTERING, substream
from .scenario import Grid, InvalidArgument, Roi, distance_matrix

DEFAULT_LAMBDA = 1e-3
SUPPORT_FLOOR = 1e-3  # relative to max(s*)
CANDIDATE_MODES = ("support", "adt")


@dataclass(frozen=True)
class CandidateSet:
    indices: np.ndarray
    weights: np.ndarray
    threshold: float


@dataclass(frozen=True)
class InitialEstimate:
    positions: np.ndarray  # (K, 2)
    powers: np.ndarray  # (K,)
    clusters: tuple  # K arrays of grid indices
    s_star: np.ndarray | None = None
    candidates: CandidateSet | None = None
    qp_converged: bool = True

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.positions[:, 0], self.positions[:, 1], self.powers])


def build_phi(grid: Grid, sensors, alpha: float, p_high: float) -> np.ndarray:
    """``Phi[m, n] = p_high * d_mn**-alpha`` with distances clamped at ``D_MIN``."""
    return p_high * distance_matrix(sensors, grid.points) ** (-alpha)


def sparse_recover(phi, r_hat, lam: float = DEFAULT_LAMBDA, tol: float = 1e-8,
                   max_iter: int = 10_000, return_solution: bool = False):
    """BPDN over ``[0, 1]^N`` posed as a box QP with ``B = Phi'Phi``, ``c = lam - Phi'r``."""
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    phi = np.asarray(phi, dtype=float)
    r_hat = np.asarray(r_hat, dtype=float)
    B = phi.T @ phi
    B = 0.5 * (B + B.T)
    c = lam - phi.T @ r_hat
    sol = solve_box_qp(QpProblem(B, c), tol=tol, max_iter=max_iter)
    return sol if return_solution else sol.s


def adt_truncate(s_star) -> CandidateSet:
    s_star = np.asarray(s_star, dtype=float)
    if s_star.size == 0:
        raise InvalidArgument("empty weight vector")
    spread = float(np.std(s_star, ddof=1)) if s_star.size > 1 else 0.0
    thr = float(s_star.max()) - spread
    idx = np.flatnonzero(s_star >= thr)
    return CandidateSet(idx, s_star[idx], thr)


def support_truncate(s_star, floor: float = SUPPORT_FLOOR) -> CandidateSet:
    """Keep the numerical support of ``s_star``: entries at least ``floor * max``."""
    s_star = np.asarray(s_star, dtype=float)
    if s_star.size == 0:
        raise InvalidArgument("empty weight vector")
    thr = floor * float(s_star.max())
    idx = np.flatnonzero(s_star >= thr)
    return CandidateSet(idx, s_star[idx], thr)


def select_candidates(s_star, mode: str = "support") -> CandidateSet:
    if mode == "support":
        return support_truncate(s_star)
    if mode == "adt":
        return adt_truncate(s_star)
    raise InvalidArgument(f"unknown candidate mode {mode!r}; expected one of {CANDIDATE_MODES}")


# -- k-means ---------------------------------------------------------------

def _kmeanspp(X, k, rng):
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = X[rng.integers(n)]
        else:
            centers[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _sse(X, labels, centers):
    return float(((X - centers[labels]) ** 2).sum())


def lloyd(X, centers, max_iter=100, trace=None):
    """Plain Lloyd iterations; an emptied cluster is re-seeded at the point
    farthest from the current centers."""
    X = np.asarray(X, dtype=float)
    centers = np.array(centers, dtype=float)
    k = len(centers)
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        own = d2[np.arange(len(X)), new]
        for j in range(k):
            if not np.any(new == j):
                # farthest point among clusters that can spare one
                sizes = np.bincount(new, minlength=k)
                spare = np.where(sizes[new] > 1, own, -1.0)
                far = int(spare.argmax())
                new[far] = j
                own[far] = -1.0
        if trace is not None:
            trace.append(_sse(X, new, centers))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([X[labels == j].mean(axis=0) for j in range(k)])
        if trace is not None:
            trace.append(_sse(X, labels, centers))
    return labels, centers


def kmeans(X, k, rng, n_init=10, max_iter=100):
    """k-means++ seeded Lloyd, best of ``n_init`` restarts by within-cluster SSE."""
    X = np.asarray(X, dtype=float)
    best = None
    for _ in range(n_init):
        labels, centers = lloyd(X, _kmeanspp(X, k, rng), max_iter)
        sse = _sse(X, labels, centers)
        if best is None or sse < best[0]:
            best = (sse, labels, centers)
    return best[1], best[2]


def cluster_and_average(cands: CandidateSet, grid: Grid, k: int, p_high: float,
                        p_low: float, seed: int = 0, trial: int = 0,
                        roi: Roi | None = None) -> InitialEstimate:
    idx = np.asarray(cands.indices)
    wts = np.asarray(cands.weights, dtype=float)
    pts = grid.points[idx]

    if len(idx) < k:
        # too few candidates: pad with copies of the strongest one, offset by a grid step
        top = int(np.argmax(wts))
        offsets = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)]
        extra_pts, extra_w, extra_i = [], [], []
        for j in range(k - len(idx)):
            ou, ov = offsets[j % len(offsets)]
            scale = 1 + j // len(offsets)
            extra_pts.append(pts[top] + scale * np.array([ou * grid.spacing_l, ov * grid.spacing_w]))
            extra_w.append(wts[top])
            extra_i.append(idx[top])
        pts = np.vstack([pts, extra_pts])
        wts = np.concatenate([wts, extra_w])
        idx = np.concatenate([idx, extra_i])

    rng = substream(seed, trial, CLUSTERING)
    labels, _ = kmeans(pts, k, rng)

    positions = np.empty((k, 2))
    powers = np.empty(k)
    clusters = []
    for j in range(k):
        members = labels == j
        w = wts[members]
        if w.sum() > 0:
            positions[j] = (w[:, None] * pts[members]).sum(axis=0) / w.sum()
        else:
            positions[j] = pts[members].mean(axis=0)
        powers[j] = w.max() * p_high
        clusters.append(idx[members])

    powers = np.clip(powers, p_low, p_high)
    if roi is None:
        roi = Roi(grid.points[:, 0].max(), grid.points[:, 1].max())
    positions = _nudge_inside(positions, roi)
    return InitialEstimate(positions, powers, tuple(clusters), candidates=cands)


def _nudge_inside(positions, roi: Roi):
    eps_l = 1e-6 * roi.l
    eps_w = 1e-6 * roi.w
    out = positions.copy()
    out[:, 0] = np.clip(out[:, 0], eps_l, roi.l - eps_l)
    out[:, 1] = np.clip(out[:, 1], eps_w, roi.w - eps_w)
    return out


def initialize(sensors, roi: Roi, grid: Grid, r_hat, k: int, alpha: float,
               p_low: float, p_high: float, lam: float = DEFAULT_LAMBDA,
               seed: int = 0, trial: int = 0, candidates: str = "support",
               allow_inexact_qp: bool = False) -> InitialEstimate:
    """Compose build_phi, sparse_recover, candidate selection and cluster_and_average.

    ``candidates="adt"`` truncates at ``max(s*) - std(s*)``.  The default
    ``"support"`` keeps every grid point carrying at least 1e-3 of the peak
    weight: on sparse ``s*`` the std-based threshold usually leaves fewer
    than K points, all around the strongest source, and the weaker sources
    never get a cluster.

    With ``allow_inexact_qp`` a QP that misses its tolerance contributes its
    best iterate instead of raising; the estimate is flagged accordingly.
    """
    phi = build_phi(grid, sensors, alpha, p_high)
    converged = True
    try:
        s_star = sparse_recover(phi, r_hat, lam)
    except QpNonConvergence as exc:
        if not allow_inexact_qp:
            raise
        s_star, converged = exc.best.s, False
    cands = select_candidates(s_star, candidates)
    est = cluster_and_average(cands, grid, k, p_high, p_low, seed=seed, trial=trial, roi=roi)
    return InitialEstimate(est.positions, est.powers, est.clusters, s_star=s_star,
                           candidates=cands, qp_converged=converged)


def write_debug_csv(path, grid: Grid, est: InitialEstimate) -> None:
    """One row per grid point: index, coordinates, recovered weight, retained flag, cluster id."""
    cluster_of = {}
    for j, members in enumerate(est.clusters):
        for n in members:
            cluster_of.setdefault(int(n), j)
    retained = set(int(i) for i in est.candidates.indices) if est.candidates is not None else set()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["grid_index", "u", "v", "s_star", "retained", "cluster"])
        for n, (u, v) in enumerate(grid.points):
            wr.writerow([n, repr(float(u)), repr(float(v)), repr(float(est.s_star[n])),
                         int(n in retained), cluster_of.get(n, -1)])
