"""Multi-source RSS under log-normal shadowing (linear mW throughout)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .rng import SHADOWING, substream
from .scenario import Scenario, distance_matrix, InvalidArgument


def path_gains(scenario: Scenario) -> np.ndarray:
    """``P_k * d_mk^-alpha`` as an ``(M, K)`` array."""
    d = distance_matrix(scenario.sensors, scenario.source_positions)
    return scenario.powers[None, :] * d ** (-scenario.alpha)


def noiseless_rss(scenario: Scenario) -> np.ndarray:
    return path_gains(scenario).sum(axis=1)


def simulate_rss(scenario: Scenario, seed: int | None = None, trial: int = 0,
                 size: int | None = None):
    """Draw RSS observations and the shadowing that produced them.

    Returns ``(r, n)`` with ``r`` of shape ``(M,)`` and ``n`` of shape
    ``(M, K)`` in dB.  With ``size`` given, a leading axis of that many
    independent draws is added to both.
    """
    if seed is None:
        seed = scenario.seed
    gains = path_gains(scenario)
    rng = substream(seed, trial, SHADOWING)
    shape = gains.shape if size is None else (size,) + gains.shape
    # scaled standard normals: the same seed gives the same pattern at every sigma_s
    n = scenario.sigma_s * rng.standard_normal(shape)
    r = (gains * 10.0 ** (n / 10.0)).sum(axis=-1)
    return r, n


def save_observation(r, path) -> None:
    Path(path).write_text(json.dumps([float(x) for x in r]))


def load_observation(path, m: int | None = None) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text())
        r = np.asarray(data, dtype=float)
    except (ValueError, TypeError) as exc:
        raise InvalidArgument(f"malformed observation file {path}: {exc}") from exc
    if r.ndim != 1 or not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise InvalidArgument("observation must be a flat list of positive numbers")
    if m is not None and len(r) != m:
        raise InvalidArgument(f"observation has {len(r)} entries, scenario has {m} sensors")
    return r
