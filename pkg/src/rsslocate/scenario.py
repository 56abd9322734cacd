"""Region of interest, sensors, sources, discretization grid and seeded scenario draws."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import substream, GEOMETRY

D_MIN = 1.0  # metres; distances below this are clamped


class InvalidArgument(ValueError):
    pass


@dataclass(frozen=True)
class Roi:
    l: float
    w: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0):
            raise InvalidArgument(f"ROI dimensions must be positive, got l={self.l}, w={self.w}")

    @property
    def area(self) -> float:
        return self.l * self.w

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts[:, 0] >= 0) & (pts[:, 0] <= self.l)
                & (pts[:, 1] >= 0) & (pts[:, 1] <= self.w))


@dataclass(frozen=True)
class Point2:
    u: float
    v: float


@dataclass(frozen=True)
class Source:
    position: Point2
    p: float

    @property
    def u(self) -> float:
        return self.position.u

    @property
    def v(self) -> float:
        return self.position.v


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scenario:
    """A localization instance.

    Sensor and source coordinates are kept as read-only ``(M, 2)`` and
    ``(K, 2)`` arrays; ``powers`` holds the K source powers in mW.
    """

    roi: Roi
    sensors: np.ndarray
    source_positions: np.ndarray
    powers: np.ndarray
    alpha: float = 2.5
    sigma_s: float = 6.0
    p_low: float = 2000.0
    p_high: float = 4000.0
    seed: int = 0

    def __post_init__(self):
        sensors = _frozen(self.sensors).reshape(-1, 2)
        srcs = _frozen(self.source_positions).reshape(-1, 2)
        powers = _frozen(self.powers).reshape(-1)
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "source_positions", srcs)
        object.__setattr__(self, "powers", powers)

        if len(sensors) < 1:
            raise InvalidArgument("need at least one sensor")
        if len(srcs) < 2:
            raise InvalidArgument(f"need K >= 2 sources, got {len(srcs)}")
        if len(powers) != len(srcs):
            raise InvalidArgument("one power per source required")
        if not self.alpha > 0:
            raise InvalidArgument(f"path-loss exponent must be positive, got {self.alpha}")
        if not self.sigma_s >= 0:
            raise InvalidArgument(f"sigma_s must be nonnegative, got {self.sigma_s}")
        if not 0 < self.p_low <= self.p_high:
            raise InvalidArgument(f"bad power bounds [{self.p_low}, {self.p_high}]")
        if not np.all(np.isfinite(sensors)) or not np.all(np.isfinite(srcs)):
            raise InvalidArgument("coordinates must be finite")
        if not self.roi.contains(sensors).all():
            raise InvalidArgument("sensor outside ROI")
        if not self.roi.contains(srcs).all():
            raise InvalidArgument("source outside ROI")
        if np.any(powers < self.p_low) or np.any(powers > self.p_high):
            raise InvalidArgument("source power outside [p_low, p_high]")

    @property
    def m(self) -> int:
        return len(self.sensors)

    @property
    def k(self) -> int:
        return len(self.source_positions)

    @property
    def sources(self) -> list[Source]:
        return [Source(Point2(float(u), float(v)), float(p))
                for (u, v), p in zip(self.source_positions, self.powers)]

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.roi == other.roi
                and np.array_equal(self.sensors, other.sensors)
                and np.array_equal(self.source_positions, other.source_positions)
                and np.array_equal(self.powers, other.powers)
                and (self.alpha, self.sigma_s, self.p_low, self.p_high, self.seed)
                == (other.alpha, other.sigma_s, other.p_low, other.p_high, other.seed))

    def replace(self, **changes) -> "Scenario":
        kw = dict(roi=self.roi, sensors=self.sensors, source_positions=self.source_positions,
                  powers=self.powers, alpha=self.alpha, sigma_s=self.sigma_s,
                  p_low=self.p_low, p_high=self.p_high, seed=self.seed)
        kw.update(changes)
        return Scenario(**kw)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "roi": {"l": self.roi.l, "w": self.roi.w},
            "sensors": self.sensors.tolist(),
            "sources": [{"u": float(u), "v": float(v), "p": float(p)}
                        for (u, v), p in zip(self.source_positions, self.powers)],
            "alpha": self.alpha,
            "sigma_s": self.sigma_s,
            "p_low": self.p_low,
            "p_high": self.p_high,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            roi = Roi(float(d["roi"]["l"]), float(d["roi"]["w"]))
            sensors = np.asarray(d["sensors"], dtype=float).reshape(-1, 2)
            srcs = d["sources"]
            pos = np.array([[s["u"], s["v"]] for s in srcs], dtype=float).reshape(-1, 2)
            powers = np.array([s["p"] for s in srcs], dtype=float)
            return cls(roi, sensors, pos, powers, alpha=float(d["alpha"]),
                       sigma_s=float(d["sigma_s"]), p_low=float(d["p_low"]),
                       p_high=float(d["p_high"]), seed=int(d["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"malformed scenario: {exc!r}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    spacing_l: float
    spacing_w: float
    side: int = field(default=0)

    @property
    def n(self) -> int:
        return len(self.points)


def make_grid(roi: Roi, n: int) -> Grid:
    """Square lattice of ``n`` points covering the ROI, corners included.

    Points are row-major: index ``i * side + j`` sits at ``(j * dl, i * dw)``.
    """
    side = math.isqrt(n) if n >= 0 else 0
    if n < 4 or side * side != n:
        raise InvalidArgument(f"grid size must be a perfect square >= 4, got {n}")
    dl = roi.l / (side - 1)
    dw = roi.w / (side - 1)
    jj, ii = np.meshgrid(np.arange(side), np.arange(side))
    pts = np.column_stack([jj.ravel() * dl, ii.ravel() * dw])
    # pin the far edge exactly on the boundary
    pts[jj.ravel() == side - 1, 0] = roi.l
    pts[ii.ravel() == side - 1, 1] = roi.w
    return Grid(_frozen(pts), dl, dw, side)


def distance(p, q, d_min: float = D_MIN) -> float:
    if isinstance(p, Point2):
        p = (p.u, p.v)
    if isinstance(q, Point2):
        q = (q.u, q.v)
    return max(math.hypot(p[0] - q[0], p[1] - q[1]), d_min)


def distance_matrix(a: np.ndarray, b: np.ndarray, d_min: float = D_MIN) -> np.ndarray:
    """Clamped pairwise distances, shape ``(len(a), len(b))``."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    return np.maximum(d, d_min)


@dataclass(frozen=True)
class ScenarioConfig:
    m: int = 150
    k: int = 3
    l: float = 2000.0
    w: float = 2000.0
    alpha: float = 2.5
    sigma_s: float = 6.0
    p_low: float = 2000.0
    p_high: float = 4000.0


def random_scenario(config: ScenarioConfig, seed: int, trial: int = 0) -> Scenario:
    """Uniform i.i.d. sensors, sources and powers drawn from the geometry substream.

    Sources and powers are drawn before sensors, so for a given (seed, trial)
    the sources stay the same when only the sensor count changes.
    """
    if config.k < 2:
        raise InvalidArgument(f"need K >= 2 sources, got {config.k}")
    if config.m < 1:
        raise InvalidArgument(f"need M >= 1 sensors, got {config.m}")
    roi = Roi(config.l, config.w)
    rng = substream(seed, trial, GEOMETRY)
    scale = np.array([roi.l, roi.w])
    srcs = rng.random((config.k, 2)) * scale
    powers = rng.uniform(config.p_low, config.p_high, config.k)
    sensors = rng.random((config.m, 2)) * scale
    return Scenario(roi, sensors, srcs, powers, alpha=config.alpha, sigma_s=config.sigma_s,
                    p_low=config.p_low, p_high=config.p_high, seed=seed)
