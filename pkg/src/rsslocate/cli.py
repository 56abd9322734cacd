"""Command-line front end: ``simulate``, ``solve`` and ``sweep``.

Exit codes: 0 success (a non-converged solve still counts), 2 invalid
input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import mle
from .channel import load_observation, save_observation, simulate_rss
from .evaluate import (CURVE_COLUMNS, RESULT_COLUMNS, SUMMARY_COLUMNS, ExperimentConfig,
                       curve_rows, result_rows, run_experiment, summary_row)
from .fw import DegenerateVariance
from .scenario import InvalidArgument, Scenario, ScenarioConfig, make_grid, random_scenario
from .srwac import CANDIDATE_MODES, initialize, write_debug_csv

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3


class ConfigError(InvalidArgument):
    pass


@dataclass
class RunConfig:
    l: float = 2000.0
    w: float = 2000.0
    sensors: object = 150          # int, or list of ints for a sensor sweep
    sources: int = 3
    grid_n: int = 121
    alpha: float = 2.5
    sigma: object = 6.0            # float, or list of floats for a sigma sweep
    p_low: float = 2000.0
    p_high: float = 4000.0
    lam: float = 1e-3
    trials: int = 500
    seed: int = 0
    out: str = "out"
    threads: int = 1
    fixed_geometry: bool = False
    candidates: str = "support"

    def sigma_list(self) -> list:
        return list(self.sigma) if isinstance(self.sigma, (list, tuple)) else [self.sigma]

    def sensor_list(self) -> list:
        return list(self.sensors) if isinstance(self.sensors, (list, tuple)) else [self.sensors]

    def sweep(self):
        """``(param, values)``; at most one of sigma/sensors may hold several values."""
        sig, sen = self.sigma_list(), self.sensor_list()
        if len(sig) > 1 and len(sen) > 1:
            raise ConfigError("sweep either sigma or sensors, not both")
        if len(sen) > 1:
            return "sensors", sen
        return "sigma", sig

    def scenario_config(self, sigma=None, sensors=None) -> ScenarioConfig:
        return ScenarioConfig(m=int(sensors if sensors is not None else self.sensor_list()[0]),
                              k=self.sources, l=self.l, w=self.w, alpha=self.alpha,
                              sigma_s=float(sigma if sigma is not None else self.sigma_list()[0]),
                              p_low=self.p_low, p_high=self.p_high)

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(scenario=self.scenario_config(), grid_n=self.grid_n,
                                lam=self.lam, candidates=self.candidates,
                                fixed_geometry=self.fixed_geometry)


# JSON key -> RunConfig attribute ("lambda" is a keyword in Python)
_KEY_TO_ATTR = {f.name: f.name for f in fields(RunConfig)}
_KEY_TO_ATTR["lambda"] = "lam"
del _KEY_TO_ATTR["lam"]


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(path, text, key):
    line = _line_of(text, key) if text is not None else None
    return f"{path}:{line}: " if line else (f"{path}: " if path else "")


def validate(cfg: RunConfig, path=None, text=None) -> RunConfig:
    def fail(key, msg):
        raise ConfigError(f"{_where(path, text, key)}{key}: {msg}")

    def check(key, ok, msg):
        if not ok:
            fail(key, msg)

    check("l", cfg.l > 0, "must be positive")
    check("w", cfg.w > 0, "must be positive")
    check("sources", isinstance(cfg.sources, int) and cfg.sources >= 2, "K must be an integer >= 2")
    for m in cfg.sensor_list():
        check("sensors", isinstance(m, int) and m >= 1, "must be positive integers")
    n = cfg.grid_n
    check("grid_n", isinstance(n, int) and n >= 4 and int(round(n ** 0.5)) ** 2 == n,
          "must be a perfect square >= 4")
    check("alpha", cfg.alpha > 0, "must be positive")
    for s in cfg.sigma_list():
        check("sigma", isinstance(s, (int, float)) and s >= 0, "must be nonnegative")
    check("p_low", 0 < cfg.p_low <= cfg.p_high, "need 0 < p_low <= p_high")
    check("lambda", cfg.lam > 0, "must be positive")
    check("trials", isinstance(cfg.trials, int) and cfg.trials >= 1, "J must be >= 1")
    check("threads", isinstance(cfg.threads, int) and cfg.threads >= 1, "must be >= 1")
    check("candidates", cfg.candidates in CANDIDATE_MODES, f"must be one of {CANDIDATE_MODES}")
    if len(cfg.sigma_list()) > 1 and len(cfg.sensor_list()) > 1:
        fail("sigma", "sweep either sigma or sensors, not both")
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    cfg = RunConfig()
    for key, value in data.items():
        attr = _KEY_TO_ATTR.get(key)
        if attr is None:
            raise ConfigError(f"{_where(path, text, key)}unknown field {key!r}")
        default = getattr(RunConfig, attr)
        try:
            value = _coerce(attr, value, default)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{_where(path, text, key)}{key}: {exc}") from exc
        setattr(cfg, attr, value)
    return validate(cfg, path, text)


def _coerce(attr, value, default):
    if attr in ("sigma", "sensors"):
        conv = float if attr == "sigma" else _as_int
        if isinstance(value, list):
            if not value:
                raise ValueError("empty list")
            return [conv(v) for v in value]
        return conv(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError("expected true/false")
        return value
    if isinstance(default, int):
        return _as_int(value)
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ValueError("expected a number")
        return float(value)
    return str(value)


def _as_int(v):
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(v)


def _list_arg(conv):
    def parse(text):
        parts = [p for p in text.split(",") if p.strip()]
        try:
            vals = [conv(p) for p in parts]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad value list {text!r}")
        if not vals:
            raise argparse.ArgumentTypeError("empty list")
        return vals if len(vals) > 1 else vals[0]
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file with run settings")
    common.add_argument("--seed", type=int)
    common.add_argument("--sigma", type=_list_arg(float), help="shadowing std in dB (comma list to sweep)")
    common.add_argument("--sensors", type=_list_arg(int), help="sensor count M (comma list to sweep)")
    common.add_argument("--sources", type=int)
    common.add_argument("--grid-n", dest="grid_n", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--l", type=float)
    common.add_argument("--w", type=float)
    common.add_argument("--p-low", dest="p_low", type=float)
    common.add_argument("--p-high", dest="p_high", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--candidates", choices=CANDIDATE_MODES)
    common.add_argument("--out")

    p = argparse.ArgumentParser(prog="rsslocate", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="draw a scenario and one RSS observation")

    s = sub.add_parser("solve", parents=[common], help="localize sources from scenario + observation files")
    s.add_argument("scenario")
    s.add_argument("observation")
    s.add_argument("--debug-csv", help="write per-grid-point stage-one weights here")
    s.add_argument("--max-iter", type=int, default=5000)

    w = sub.add_parser("sweep", parents=[common], help="Monte-Carlo sweep over sigma or sensor count")
    w.add_argument("--trials", type=int)
    w.add_argument("--threads", type=int)
    w.add_argument("--fixed-geometry", dest="fixed_geometry", action="store_true", default=None)
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for attr in _KEY_TO_ATTR.values():
        val = getattr(args, attr, None)
        if val is not None:
            setattr(cfg, attr, val)
    return validate(cfg)


def _progress(done, total):
    print(f"\r  trial {done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)


def cmd_simulate(cfg: RunConfig) -> int:
    if len(cfg.sigma_list()) > 1 or len(cfg.sensor_list()) > 1:
        raise ConfigError("simulate takes a single sigma and sensor count")
    scenario = random_scenario(cfg.scenario_config(), cfg.seed)
    r, _ = simulate_rss(scenario, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario.save(out / "scenario.json")
    save_observation(r, out / "observation.json")
    print(json.dumps({"scenario": str(out / "scenario.json"),
                      "observation": str(out / "observation.json"), "m": scenario.m}))
    return EXIT_OK


def cmd_solve(cfg: RunConfig, scenario_path, observation_path, debug_csv=None, max_iter=5000) -> int:
    try:
        scenario = Scenario.load(scenario_path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{scenario_path}:{exc.lineno}: {exc.msg}") from exc
    r = load_observation(observation_path, scenario.m)
    grid = make_grid(scenario.roi, cfg.grid_n)
    est = initialize(scenario.sensors, scenario.roi, grid, r, scenario.k, scenario.alpha,
                     scenario.p_low, scenario.p_high, lam=cfg.lam, seed=scenario.seed,
                     candidates=cfg.candidates, allow_inexact_qp=True)
    try:
        problem = mle.Problem(scenario.sensors, r, scenario.alpha, scenario.sigma_s)
    except DegenerateVariance:
        # no shadowing: the likelihood is undefined, report the stage-one estimate
        report = mle.SolveReport(est.theta, float("nan"), 0, False, "sigma_s_zero_init_only", [])
    else:
        bounds = mle.BoxConstraints.for_sources(scenario.k, scenario.roi, scenario.p_low, scenario.p_high)
        report = mle.solve(est.theta, problem, bounds, mle.SolveOptions(max_iter=max_iter))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    if debug_csv:
        write_debug_csv(debug_csv, grid, est)
    print(json.dumps({"report": str(out / "report.json"), "converged": report.converged,
                      "objective": report.objective}))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    param, values = cfg.sweep()
    if param == "sigma" and any(v <= 0 for v in values):
        raise ConfigError("sigma: sweep values must be positive (likelihood needs shadowing)")
    base = cfg.experiment_config()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {name: out / f"{name}_{param}.csv" for name in ("results", "curves", "summary")}
    headers = {"results": RESULT_COLUMNS, "curves": CURVE_COLUMNS, "summary": SUMMARY_COLUMNS}
    handles = {name: open(path, "w", newline="") for name, path in files.items()}
    try:
        for name, fh in handles.items():
            fh.write(",".join(headers[name]) + "\n")
        for value in values:
            print(f"{param}={value}", file=sys.stderr)
            res = run_experiment(base, cfg.seed, cfg.trials, param, value,
                                 threads=cfg.threads, progress=_progress)
            m = int(value) if param == "sensors" else base.scenario.m
            handles["results"].writelines(",".join(row) + "\n" for row in result_rows(res, cfg.seed))
            handles["curves"].writelines(",".join(row) + "\n" for row in curve_rows(res))
            handles["summary"].write(",".join(summary_row(res, m)) + "\n")
            for fh in handles.values():
                fh.flush()
    finally:
        for fh in handles.values():
            fh.close()
    print(json.dumps({k: str(v) for k, v in files.items()}))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.scenario, args.observation, args.debug_csv, args.max_iter)
        return cmd_sweep(cfg)
    except KeyboardInterrupt:
        print("interrupted; completed sweep points were flushed", file=sys.stderr)
        return 130
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
