"""Signal-retention schedules, sampling-time grids, and training-time laws.

alpha(t) is strictly decreasing on [0, 1] with alpha(0) = 1 - eps0 and
alpha(1) = eps1; the small endpoint clips keep every reverse-kernel
denominator nonzero. Linear and cosine forms are provided:

    linear: alpha(t) = (1 - eps0) (1 - t) + eps1 t
    cosine: alpha(t) = eps1 + (1 - eps0 - eps1) cos(pi t / 2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import stream

__all__ = [
    "Schedule",
    "TimeDistribution",
    "TimeGrid",
    "alpha",
    "alpha_prime",
    "sample_time",
    "make_grid",
    "DEFAULT_EPS",
    "DEFAULT_T_MIN",
]

DEFAULT_EPS = 1e-4
DEFAULT_T_MIN = 1e-3


@dataclass(frozen=True)
class Schedule:
    kind: str = "linear"
    eps0: float = DEFAULT_EPS
    eps1: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in ("linear", "cosine"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not (0.0 < self.eps0 < 0.5 and 0.0 < self.eps1 < 0.5):
            raise ConfigError("eps0 and eps1 must lie in (0, 0.5)")

    def alpha(self, t):
        return alpha(self, t)

    def alpha_prime(self, t):
        return alpha_prime(self, t)


def _check_time(t) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ConfigError(f"time must lie in [0, 1], got {t!r}")
    return arr


def alpha(s: Schedule, t):
    """Retention alpha(t); accepts scalars or arrays."""
    arr = _check_time(t)
    span = 1.0 - s.eps0 - s.eps1
    if s.kind == "linear":
        out = (1.0 - s.eps0) * (1.0 - arr) + s.eps1 * arr
    else:
        out = s.eps1 + span * np.cos(0.5 * math.pi * arr)
    return out if isinstance(out, np.ndarray) and out.ndim else float(out)


def alpha_prime(s: Schedule, t):
    """Analytic d alpha / d t."""
    arr = _check_time(t)
    span = 1.0 - s.eps0 - s.eps1
    if s.kind == "linear":
        out = np.full_like(arr, -span)
    else:
        out = -span * 0.5 * math.pi * np.sin(0.5 * math.pi * arr)
    return out if isinstance(out, np.ndarray) and out.ndim else float(out)


@dataclass(frozen=True)
class TimeDistribution:
    """Law of the training time t on (0, 1).

    kinds: "uniform"; "logit-normal" with params (mu, sigma), drawing
    sigmoid(mu + sigma z); "beta" with params (a, b).
    """

    kind: str = "logit-normal"
    params: tuple[float, ...] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind == "uniform":
            object.__setattr__(self, "params", ())
        elif self.kind == "logit-normal":
            if len(self.params) != 2 or self.params[1] <= 0:
                raise ConfigError("logit-normal needs params (mu, sigma>0)")
        elif self.kind == "beta":
            if len(self.params) != 2 or min(self.params) <= 0:
                raise ConfigError("beta needs params (a>0, b>0)")
        else:
            raise ConfigError(f"unknown time distribution {self.kind!r}")


def sample_time(d: TimeDistribution, rng: np.random.Generator, size=None):
    """Draw t from d; values are clipped into the open interval (0, 1)."""
    if d.kind == "uniform":
        t = rng.random(size)
    elif d.kind == "logit-normal":
        mu, sigma = d.params
        z = rng.standard_normal(size)
        t = 1.0 / (1.0 + np.exp(-(mu + sigma * z)))
    else:
        a, b = d.params
        t = rng.beta(a, b, size)
    tiny = np.finfo(np.float64).tiny
    return np.clip(t, tiny, 1.0 - 1e-15)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly decreasing times 1 = t_0 > t_1 > ... > t_T ~ 0."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size < 2:
            raise ConfigError("time grid needs at least two points")
        if np.any(np.diff(vals) >= 0):
            raise ConfigError("time grid must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    @property
    def steps(self) -> int:
        return self.values.size - 1

    def __getitem__(self, k: int) -> float:
        return float(self.values[k])


def make_grid(T: int, kind: str = "cosine", t_min: float = DEFAULT_T_MIN) -> TimeGrid:
    """Sampling grid with T steps from t=1 down to t=t_min.

    linear: t_k = 1 - k (1 - t_min) / T
    cosine: t_k = t_min + (1 - t_min) cos(k pi / (2 T))
    """
    if T < 1:
        raise ConfigError(f"grid steps must be >= 1, got {T}")
    if not (0.0 <= t_min < 1.0):
        raise ConfigError(f"t_min must lie in [0, 1), got {t_min}")
    k = np.arange(T + 1, dtype=np.float64)
    if kind == "linear":
        vals = 1.0 - k * (1.0 - t_min) / T
    elif kind == "cosine":
        vals = t_min + (1.0 - t_min) * np.cos(k * math.pi / (2.0 * T))
    else:
        raise ConfigError(f"unknown grid kind {kind!r}")
    vals[0] = 1.0
    vals[-1] = t_min
    return TimeGrid(vals)


def default_time_distribution(conditional: bool) -> TimeDistribution:
    """logit-normal(1, 1) for conditional runs, Beta(3, 1) otherwise."""
    if conditional:
        return TimeDistribution("logit-normal", (1.0, 1.0))
    return TimeDistribution("beta", (3.0, 1.0))


def time_stream(seed: int, *tags) -> np.random.Generator:
    """Keyed stream helper re-exported for callers sampling times."""
    return stream(seed, *tags)
