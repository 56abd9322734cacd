"""Multi-source RSS localization under log-normal shadowing.

Two stages: a sparse-recovery / weighted-average initializer on a grid,
then a Fenton-Wilkinson maximum-likelihood fit solved by gradient
projection over the box of positions and powers.
"""

from ._kernels import BACKEND
from .scenario import Grid, Roi, Scenario, ScenarioConfig, make_grid, random_scenario
from .channel import noiseless_rss, simulate_rss
from .fw import FwParams, fit_lognormal, sum_moments
from .boxqp import QpProblem, solve_box_qp
from .srwac import initialize
from .mle import BoxConstraints, Problem, solve

__all__ = [
    "BACKEND", "Grid", "Roi", "Scenario", "ScenarioConfig", "make_grid", "random_scenario",
    "noiseless_rss", "simulate_rss", "FwParams", "fit_lognormal", "sum_moments",
    "QpProblem", "solve_box_qp", "initialize", "BoxConstraints", "Problem", "solve",
]
__version__ = "0.1.0"
