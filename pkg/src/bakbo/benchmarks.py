"""Synthetic objectives, their summary warps, and the canonical settings.

Both test functions are built from two additive pieces; the warp maps a
point to exactly those two pieces, so the objective is a closed-form
function of the warped coordinates.  That makes the warped kernel
"informed": it sees the objective's own sufficient statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from .kernels import WarpFunction
from .space import Domain

__all__ = [
    "AckleyParams",
    "RastriginParams",
    "BenchmarkSetting",
    "SETTING_NAMES",
    "ackley",
    "rastrigin",
    "ackley_warp",
    "rastrigin_warp",
    "get_setting",
    "estimate_y_max",
    "normalization_constant",
    "normalized_cost",
]


@dataclass(frozen=True)
class AckleyParams:
    a: float = 20.0
    b: float = 0.2
    c: float = 2.0 * math.pi


@dataclass(frozen=True)
class RastriginParams:
    a: float = 10.0
    c: float = 2.0


def ackley(x, params: AckleyParams = AckleyParams()):
    """Ackley function; zero at the origin, positive elsewhere.

    Accepts a single point of shape (d,) or a batch (..., d).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    radial = -params.b * np.sqrt(np.sum(x * x, axis=-1) / d)
    cosine = np.sum(np.cos(params.c * x), axis=-1) / d
    value = -params.a * np.exp(radial) - np.exp(cosine) + params.a + math.e
    return float(value) if x.ndim == 1 else value


def ackley_warp(x, params: AckleyParams = AckleyParams()):
    """Two-component summary: the arguments of Ackley's exponentials."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    radial = -params.b * np.sqrt(np.sum(x * x, axis=-1) / d)
    cosine = np.sum(np.cos(params.c * x), axis=-1) / d
    return np.stack([radial, cosine], axis=-1)


def rastrigin(x, params: RastriginParams = RastriginParams()):
    """Rastrigin function; zero at the origin, positive elsewhere."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    square = np.sum(x * x, axis=-1)
    cosine = np.sum(params.a * np.cos(params.c * math.pi * x), axis=-1)
    value = square - cosine + params.a * d
    return float(value) if x.ndim == 1 else value


def rastrigin_warp(x, params: RastriginParams = RastriginParams()):
    """Two-component summary: Rastrigin's square and cosine sums.

    The objective is linear in this summary, so a kernel on the warped
    coordinates models it with a two-dimensional lengthscale budget.
    """
    x = np.asarray(x, dtype=float)
    square = np.sum(x * x, axis=-1)
    cosine = np.sum(params.a * np.cos(params.c * math.pi * x), axis=-1)
    return np.stack([square, cosine], axis=-1)


@dataclass(frozen=True, eq=False)
class BenchmarkSetting:
    """One named objective-domain pairing used by the experiment harness."""

    name: str
    domain: Domain
    objective: object  # callable, (..., d) -> (...)
    warp: WarpFunction
    known_optimum: float = 0.0

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def evaluate(self, x) -> float:
        return float(self.objective(np.asarray(x, dtype=float)))


def _make_setting(name: str, low: float, high: float, dimension: int, kind: str) -> BenchmarkSetting:
    domain = Domain.cube(low, high, dimension)
    if kind == "ackley":
        params = AckleyParams()
        objective = partial(ackley, params=params)
        warp_fn = partial(ackley_warp, params=params)
        warp_name = "ackley_summary"
    else:
        params = RastriginParams()
        objective = partial(rastrigin, params=params)
        warp_fn = partial(rastrigin_warp, params=params)
        warp_name = "rastrigin_summary"
    warp = WarpFunction(name=warp_name, input_dim=dimension, output_dim=2, fn=warp_fn)
    return BenchmarkSetting(name=name, domain=domain, objective=objective, warp=warp)


_SETTINGS = {
    "ackley2d_near": ("ackley", -10.0, 10.0, 2),
    "ackley2d_far": ("ackley", -100.0, 100.0, 2),
    "ackley10d": ("ackley", -10.0, 10.0, 10),
    "rastrigin10d": ("rastrigin", -5.0, 5.0, 10),
}

SETTING_NAMES = tuple(_SETTINGS)


def get_setting(name: str) -> BenchmarkSetting:
    try:
        kind, low, high, dimension = _SETTINGS[name]
    except KeyError:
        raise KeyError(
            f"unknown setting {name!r}; choose one of {', '.join(SETTING_NAMES)}"
        ) from None
    return _make_setting(name, low, high, dimension, kind)


# Normalization constants are estimated once per setting from a fixed-seed
# uniform sweep and cached; runs never perturb them.
_Y_MAX_SEED = 86_243
_Y_MAX_SAMPLES = 1_000_000
_y_max_cache: dict[str, float] = {}


def estimate_y_max(
    setting: BenchmarkSetting,
    samples: int = _Y_MAX_SAMPLES,
    seed: int = _Y_MAX_SEED,
) -> float:
    """Largest objective value seen over a uniform sweep of the domain."""
    rng = np.random.default_rng(seed)
    best = -math.inf
    remaining = samples
    while remaining > 0:
        chunk = min(remaining, 125_000)
        points = setting.domain.sample(rng, chunk)
        best = max(best, float(np.max(setting.objective(points))))
        remaining -= chunk
    return best


def normalization_constant(setting: BenchmarkSetting) -> float:
    """Cached estimate of the setting's largest typical objective value."""
    value = _y_max_cache.get(setting.name)
    if value is None:
        value = estimate_y_max(setting)
        _y_max_cache[setting.name] = value
    return value


def normalized_cost(setting: BenchmarkSetting, y):
    """Objective value scaled to [0, 1] by the setting's estimated maximum."""
    scale = normalization_constant(setting)
    value = np.clip(np.asarray(y, dtype=float) / scale, 0.0, 1.0)
    return float(value) if np.ndim(y) == 0 else value
