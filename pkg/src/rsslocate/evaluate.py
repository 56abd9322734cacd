"""Source matching, error metrics, MEF/CDF curves and the Monte-Carlo driver."""

from __future__ import annotations

import csv
import itertools
import math
import multiprocessing as mp
from dataclasses import dataclass, field, replace

import numpy as np

from . import mle
from .channel import simulate_rss
from .scenario import InvalidArgument, Roi, ScenarioConfig, make_grid, random_scenario
from .srwac import DEFAULT_LAMBDA, initialize

MAX_MATCH_K = 8
CURVE_POINTS = 200
CURVE_MAX = 0.5


def match_sources(truth, estimates):
    """Pair estimates with true sources minimizing the summed squared error.

    Returns ``(perm, errors)`` where ``estimates[perm[k]]`` is matched to
    ``truth[k]`` and ``errors[k]`` is the distance between them.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    estimates = np.asarray(estimates, dtype=float).reshape(-1, 2)
    k = len(truth)
    if len(estimates) != k:
        raise InvalidArgument("truth and estimates must have the same length")
    if k > MAX_MATCH_K:
        raise InvalidArgument(f"exhaustive matching supports K <= {MAX_MATCH_K}, got {k}")
    d2 = ((truth[:, None, :] - estimates[None, :, :]) ** 2).sum(axis=2)
    rows = np.arange(k)
    best_perm, best_cost = None, math.inf
    for perm in itertools.permutations(range(k)):
        cost = d2[rows, perm].sum()
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    perm = np.array(best_perm, dtype=int)
    return perm, np.sqrt(d2[rows, perm])


@dataclass
class TrialRecord:
    trial: int
    true_positions: np.ndarray
    est_positions: np.ndarray
    errors: np.ndarray
    iterations: int = 0
    converged: bool = True
    objective: float = float("nan")
    true_powers: np.ndarray | None = None
    est_powers: np.ndarray | None = None

    @property
    def delta(self) -> float:
        return float(self.errors.max())

    @property
    def avg_error(self) -> float:
        return float(self.errors.mean())

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.errors ** 2)))


def rmse(trials) -> float:
    """Mean over trials of the per-trial root-mean-square position error."""
    trials = list(trials)
    if not trials:
        raise InvalidArgument("rmse needs at least one trial")
    return float(np.mean([t.rms for t in trials]))


def relative_rmse(rmse_m: float, roi: Roi) -> float:
    return rmse_m / math.sqrt(roi.area)


def d_grid(n: int = CURVE_POINTS, d_max: float = CURVE_MAX) -> np.ndarray:
    return np.linspace(0.0, d_max, n)


def ecdf(samples, d) -> np.ndarray:
    """Fraction of samples <= each entry of ``d``."""
    x = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(x, np.asarray(d, dtype=float), side="right") / len(x)


def mef_curve(deltas, roi: Roi, d=None) -> np.ndarray:
    """P(max relative error > d), errors scaled by sqrt(area)."""
    d = d_grid() if d is None else d
    return 1.0 - ecdf(np.asarray(deltas, dtype=float) / math.sqrt(roi.area), d)


def cdf_curve(avg_errors, roi: Roi, d=None) -> np.ndarray:
    d = d_grid() if d is None else d
    return ecdf(np.asarray(avg_errors, dtype=float) / math.sqrt(roi.area), d)


# -- experiment driver --------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid_n: int = 121
    lam: float = DEFAULT_LAMBDA
    candidates: str = "support"
    fixed_geometry: bool = False
    solve_options: mle.SolveOptions = field(default_factory=mle.SolveOptions)

    def with_sweep(self, name: str, value) -> "ExperimentConfig":
        if name == "sigma":
            return replace(self, scenario=replace(self.scenario, sigma_s=float(value)))
        if name == "sensors":
            return replace(self, scenario=replace(self.scenario, m=int(value)))
        raise InvalidArgument(f"unknown sweep parameter {name!r}")


@dataclass
class ExperimentResult:
    param: str
    value: float
    roi: Roi
    trials: list
    d: np.ndarray = field(default_factory=d_grid)

    @property
    def j(self) -> int:
        return len(self.trials)

    @property
    def failures(self) -> int:
        return sum(not t.converged for t in self.trials)

    @property
    def rmse(self) -> float:
        return rmse(self.trials)

    @property
    def relative_rmse(self) -> float:
        return relative_rmse(self.rmse, self.roi)

    @property
    def relative_rmse_converged(self) -> float:
        ok = [t for t in self.trials if t.converged]
        return relative_rmse(rmse(ok), self.roi) if ok else float("nan")

    @property
    def mef(self) -> np.ndarray:
        return mef_curve([t.delta for t in self.trials], self.roi, self.d)

    @property
    def cdf(self) -> np.ndarray:
        return cdf_curve([t.avg_error for t in self.trials], self.roi, self.d)

    def prob_avg_within(self, d_rel: float) -> float:
        return float(ecdf([t.avg_error / math.sqrt(self.roi.area) for t in self.trials], [d_rel])[0])

    def prob_delta_exceeds(self, d_rel: float) -> float:
        return 1.0 - float(ecdf([t.delta / math.sqrt(self.roi.area) for t in self.trials], [d_rel])[0])


def run_trial(cfg: ExperimentConfig, master_seed: int, trial: int) -> TrialRecord:
    """simulate -> initialize -> solve -> match for one trial index."""
    sc_cfg = cfg.scenario
    geo_trial = 0 if cfg.fixed_geometry else trial
    scenario = random_scenario(sc_cfg, master_seed, geo_trial)
    r, _ = simulate_rss(scenario, master_seed, trial)
    grid = make_grid(scenario.roi, cfg.grid_n)
    est = initialize(scenario.sensors, scenario.roi, grid, r, scenario.k, scenario.alpha,
                     scenario.p_low, scenario.p_high, lam=cfg.lam, seed=master_seed,
                     trial=trial, candidates=cfg.candidates, allow_inexact_qp=True)
    problem = mle.Problem(scenario.sensors, r, scenario.alpha, scenario.sigma_s)
    bounds = mle.BoxConstraints.for_sources(scenario.k, scenario.roi, scenario.p_low, scenario.p_high)
    report = mle.solve(est.theta, problem, bounds, cfg.solve_options)
    perm, errors = match_sources(scenario.source_positions, report.positions)
    return TrialRecord(trial, scenario.source_positions.copy(), report.positions[perm],
                       errors, report.iterations, report.converged and est.qp_converged,
                       report.objective, scenario.powers.copy(), report.powers[perm])


def _run_chunk(args):
    cfg, master_seed, trials = args
    return [run_trial(cfg, master_seed, t) for t in trials]


def run_trials(cfg: ExperimentConfig, master_seed: int, n_trials: int, threads: int = 1,
               progress=None) -> list:
    """Run trials ``0..n_trials-1``; output order and values do not depend on ``threads``."""
    if n_trials < 1:
        raise InvalidArgument("need at least one trial")
    ids = list(range(n_trials))
    if threads <= 1:
        out = []
        for t in ids:
            out.append(run_trial(cfg, master_seed, t))
            if progress:
                progress(len(out), n_trials)
        return out
    chunk = max(1, min(25, n_trials // (4 * threads) or 1))
    jobs = [(cfg, master_seed, ids[i:i + chunk]) for i in range(0, n_trials, chunk)]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    out = []
    with ctx.Pool(threads) as pool:
        for recs in pool.imap(_run_chunk, jobs):
            out.extend(recs)
            if progress:
                progress(len(out), n_trials)
    out.sort(key=lambda rec: rec.trial)
    return out


def run_experiment(cfg: ExperimentConfig, master_seed: int, n_trials: int, param: str = "sigma",
                   value=None, threads: int = 1, progress=None) -> ExperimentResult:
    if value is not None:
        cfg = cfg.with_sweep(param, value)
    else:
        value = cfg.scenario.sigma_s if param == "sigma" else cfg.scenario.m
    trials = run_trials(cfg, master_seed, n_trials, threads, progress)
    roi = Roi(cfg.scenario.l, cfg.scenario.w)
    return ExperimentResult(param, float(value), roi, trials)


# -- CSV output ---------------------------------------------------------------

RESULT_COLUMNS = ["sweep_param", "trial", "seed", "rmse_m", "rel_rmse", "delta_rel",
                  "avg_err_rel", "iterations", "converged"]
CURVE_COLUMNS = ["sweep_param", "d", "mef", "cdf"]
SUMMARY_COLUMNS = ["sweep_param", "value", "rho", "trials", "rmse_m", "rel_rmse",
                   "rel_rmse_converged", "failures", "p_avg_le_0.1", "p_delta_gt_0.1"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def result_rows(res: ExperimentResult, master_seed: int):
    root = math.sqrt(res.roi.area)
    for t in res.trials:
        yield [_fmt(res.value), _fmt(t.trial), _fmt(master_seed), _fmt(t.rms), _fmt(t.rms / root),
               _fmt(t.delta / root), _fmt(t.avg_error / root), _fmt(t.iterations), _fmt(t.converged)]


def curve_rows(res: ExperimentResult):
    for d, m, c in zip(res.d, res.mef, res.cdf):
        yield [_fmt(res.value), _fmt(d), _fmt(m), _fmt(c)]


def summary_row(res: ExperimentResult, m_sensors: int):
    rho = m_sensors / res.roi.area
    return [res.param, _fmt(res.value), _fmt(rho), _fmt(res.j), _fmt(res.rmse),
            _fmt(res.relative_rmse), _fmt(res.relative_rmse_converged), _fmt(res.failures),
            _fmt(res.prob_avg_within(0.1)), _fmt(res.prob_delta_exceeds(0.1))]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
