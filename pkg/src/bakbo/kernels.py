"""Covariance functions for the surrogate model.

Four families are supported: a squared-exponential kernel on the raw
coordinates, the same kernel composed with a deterministic warp of the
inputs, the sum of those two, and a per-iteration random alternation
between the first two.  The alternation draw itself is pure: the caller
supplies the uniform variate, so replaying a run never depends on hidden
RNG state inside this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

LABEL_SE = "SE"
LABEL_PHI = "PHI"

__all__ = [
    "LABEL_SE",
    "LABEL_PHI",
    "KernelHyper",
    "WarpFunction",
    "WarpError",
    "KernelChoice",
    "SEStrategy",
    "WarpedStrategy",
    "SumStrategy",
    "AlternationStrategy",
    "KernelStrategy",
    "SquaredExponential",
    "WarpedSE",
    "AdditiveSE",
    "se_eval",
    "warped_eval",
    "sum_eval",
    "draw_kernel",
    "gram",
]


class WarpError(RuntimeError):
    """Warp produced a non-finite value; carries the offending input."""

    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = x


@dataclass(frozen=True, eq=False)
class KernelHyper:
    """Signal variance and per-dimension lengthscales of one SE block."""

    signal_variance: float
    lengthscales: np.ndarray

    def __post_init__(self) -> None:
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1:
            raise ValueError("lengthscales must form a 1-d array")
        if not np.isfinite(ls).all() or not (ls > 0).all():
            raise ValueError("lengthscales must be finite and strictly positive")
        sv = float(self.signal_variance)
        if not np.isfinite(sv) or sv <= 0:
            raise ValueError("signal_variance must be finite and strictly positive")
        object.__setattr__(self, "signal_variance", sv)
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dimension(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True, eq=False)
class WarpFunction:
    """Deterministic map from the search space into a summary space.

    ``fn`` must accept arrays of shape (..., input_dim) and return arrays
    of shape (..., output_dim); it is applied to whole batches of points
    when building Gram matrices.
    """

    name: str
    input_dim: int
    output_dim: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(
                f"warp {self.name!r} expects inputs of dimension {self.input_dim}, "
                f"got {x.shape[-1]}"
            )
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape != x.shape[:-1] + (self.output_dim,):
            raise ValueError(
                f"warp {self.name!r} returned shape {out.shape}, "
                f"expected {x.shape[:-1] + (self.output_dim,)}"
            )
        if not np.isfinite(out).all():
            raise WarpError(f"warp {self.name!r} produced a non-finite value", x)
        return out


@dataclass(frozen=True)
class KernelChoice:
    """Outcome of one alternation draw: which kernel, and the variate used."""

    label: str
    theta: float

    def __post_init__(self) -> None:
        if self.label not in (LABEL_SE, LABEL_PHI):
            raise ValueError(f"label must be {LABEL_SE!r} or {LABEL_PHI!r}")


def _scaled_sqdist(za: np.ndarray, zb: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    # Explicit coordinate differences: exact zeros on the diagonal and an
    # exactly symmetric result, unlike the expanded-square shortcut.
    diff = za[:, None, :] / lengthscales - zb[None, :, :] / lengthscales
    return np.einsum("ijk,ijk->ij", diff, diff)


def _se_matrix(za: np.ndarray, zb: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    return hyper.signal_variance * np.exp(-0.5 * _scaled_sqdist(za, zb, hyper.lengthscales))


class SquaredExponential:
    """SE kernel on the raw coordinates, fixed hyperparameters."""

    __slots__ = ("hyper",)

    label = LABEL_SE

    def __init__(self, hyper: KernelHyper):
        self.hyper = hyper

    def value(self, x: np.ndarray, x2: np.ndarray) -> float:
        return se_eval(x, x2, self.hyper)

    def matrix(self, points: np.ndarray) -> np.ndarray:
        return _se_matrix(points, points, self.hyper)

    def cross(self, points: np.ndarray, queries: np.ndarray) -> np.ndarray:
        return _se_matrix(points, queries, self.hyper)

    def diag_value(self) -> float:
        # stationary: k(x, x) is the signal variance for every x
        return self.hyper.signal_variance


class WarpedSE:
    """SE kernel evaluated on warped coordinates."""

    __slots__ = ("warp", "hyper")

    label = LABEL_PHI

    def __init__(self, warp: WarpFunction, hyper: KernelHyper):
        if hyper.dimension != warp.output_dim:
            raise ValueError(
                f"hyperparameters cover {hyper.dimension} dimensions but warp "
                f"{warp.name!r} outputs {warp.output_dim}"
            )
        self.warp = warp
        self.hyper = hyper

    def value(self, x: np.ndarray, x2: np.ndarray) -> float:
        return warped_eval(x, x2, self.warp, self.hyper)

    def matrix(self, points: np.ndarray) -> np.ndarray:
        z = self.warp(points)
        return _se_matrix(z, z, self.hyper)

    def cross(self, points: np.ndarray, queries: np.ndarray) -> np.ndarray:
        return _se_matrix(self.warp(points), self.warp(queries), self.hyper)

    def diag_value(self) -> float:
        return self.hyper.signal_variance


class AdditiveSE:
    """Sum of a raw-coordinate SE kernel and a warped SE kernel."""

    __slots__ = ("raw", "warped")

    label = "SUM"

    def __init__(self, raw: SquaredExponential, warped: WarpedSE):
        self.raw = raw
        self.warped = warped

    def value(self, x: np.ndarray, x2: np.ndarray) -> float:
        return self.raw.value(x, x2) + self.warped.value(x, x2)

    def matrix(self, points: np.ndarray) -> np.ndarray:
        return self.raw.matrix(points) + self.warped.matrix(points)

    def cross(self, points: np.ndarray, queries: np.ndarray) -> np.ndarray:
        return self.raw.cross(points, queries) + self.warped.cross(points, queries)

    def diag_value(self) -> float:
        return self.raw.diag_value() + self.warped.diag_value()


@dataclass(frozen=True, eq=False)
class SEStrategy:
    """Always use the raw-coordinate SE kernel."""

    hyper: KernelHyper

    def kernel(self, choice: KernelChoice | None = None) -> SquaredExponential:
        return SquaredExponential(self.hyper)


@dataclass(frozen=True, eq=False)
class WarpedStrategy:
    """Always use the warped SE kernel."""

    warp: WarpFunction
    hyper: KernelHyper

    def kernel(self, choice: KernelChoice | None = None) -> WarpedSE:
        return WarpedSE(self.warp, self.hyper)


@dataclass(frozen=True, eq=False)
class SumStrategy:
    """Always use the additive raw-plus-warped kernel."""

    raw_hyper: KernelHyper
    warp: WarpFunction
    warp_hyper: KernelHyper

    def kernel(self, choice: KernelChoice | None = None) -> AdditiveSE:
        return AdditiveSE(SquaredExponential(self.raw_hyper), WarpedSE(self.warp, self.warp_hyper))


@dataclass(frozen=True, eq=False)
class AlternationStrategy:
    """Pick the raw or the warped kernel afresh each iteration.

    Carries independent hyperparameter sets for the two sides; the draw
    that selects between them is made by the caller via `draw_kernel`.
    """

    raw_hyper: KernelHyper
    warp: WarpFunction
    warp_hyper: KernelHyper
    p_alt: float = 0.5

    def __post_init__(self) -> None:
        p = float(self.p_alt)
        if not 0.0 <= p <= 1.0:
            raise ValueError("p_alt must lie in [0, 1]")
        object.__setattr__(self, "p_alt", p)

    def kernel(self, choice: KernelChoice) -> SquaredExponential | WarpedSE:
        if choice.label == LABEL_SE:
            return SquaredExponential(self.raw_hyper)
        return WarpedSE(self.warp, self.warp_hyper)


KernelStrategy = Union[SEStrategy, WarpedStrategy, SumStrategy, AlternationStrategy]


def _as_point(x, dimension: int, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size != dimension:
        raise ValueError(f"{name} must be a point of dimension {dimension}, got shape {x.shape}")
    return x


def se_eval(x, x2, hyper: KernelHyper) -> float:
    """SE covariance between two raw points."""
    x = _as_point(x, hyper.dimension, "x")
    x2 = _as_point(x2, hyper.dimension, "x2")
    r = (x - x2) / hyper.lengthscales
    return float(hyper.signal_variance * np.exp(-0.5 * (r @ r)))


def warped_eval(x, x2, warp: WarpFunction, hyper: KernelHyper) -> float:
    """SE covariance between the warped images of two points."""
    x = _as_point(x, warp.input_dim, "x")
    x2 = _as_point(x2, warp.input_dim, "x2")
    return se_eval(warp(x), warp(x2), hyper)


def sum_eval(x, x2, strategy: SumStrategy) -> float:
    """Covariance under the additive raw-plus-warped kernel."""
    return se_eval(x, x2, strategy.raw_hyper) + warped_eval(
        x, x2, strategy.warp, strategy.warp_hyper
    )


def draw_kernel(p_alt: float, theta: float) -> KernelChoice:
    """Resolve one alternation draw from a uniform variate.

    theta at or below p_alt selects the raw SE kernel, anything above
    selects the warped kernel.
    """
    p_alt = float(p_alt)
    theta = float(theta)
    if not 0.0 <= p_alt <= 1.0:
        raise ValueError("p_alt must lie in [0, 1]")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    label = LABEL_SE if theta <= p_alt else LABEL_PHI
    return KernelChoice(label=label, theta=theta)


def gram(points, kernel) -> np.ndarray:
    """Full covariance matrix of a point set under a concrete kernel."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a nonempty array of shape (n, d)")
    return kernel.matrix(pts)
