"""Exact Gaussian-process regression on a fixed kernel.

The posterior is the standard conjugate form: a Cholesky factor of the
noisy Gram matrix, precomputed weights for the mean, and the training
inputs kept around for cross-covariances.  Targets are centered on their
mean before solving, so predictions revert to that shift far from data.

Hyperparameters are refit by maximizing the log marginal likelihood in
log space with analytic gradients; the refit never returns a set whose
likelihood falls below the incumbent's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import (
    AlternationStrategy,
    KernelHyper,
    KernelStrategy,
    SEStrategy,
    SumStrategy,
    WarpedStrategy,
)

__all__ = [
    "Observation",
    "Dataset",
    "Prediction",
    "PosteriorModel",
    "FactorizationError",
    "fit_posterior",
    "predict",
    "predict_batch",
    "predict_prior",
    "log_marginal_likelihood",
    "optimize_hyperparameters",
]

# Jitter ladder for near-singular Gram matrices, as fractions of the mean
# diagonal: start at 1e-9, escalate tenfold, give up past 1e-3.
_JITTER_START = 1e-9
_JITTER_LIMIT = 1e-3

# Refit is skipped below this many observations; the likelihood surface is
# too flat to say anything useful about three or more free parameters.
MIN_POINTS_FOR_REFIT = 3

_LOG_2PI = math.log(2.0 * math.pi)


class FactorizationError(RuntimeError):
    """Gram matrix stayed non-positive-definite through the jitter ladder."""


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    y: float


class Dataset:
    """Append-only trial history with cached array views."""

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be at least 1")
        self.dimension = int(dimension)
        self._xs: list[np.ndarray] = []
        self._ys: list[float] = []
        self._x_cache: np.ndarray | None = None
        self._y_cache: np.ndarray | None = None

    @classmethod
    def from_arrays(cls, X, y) -> "Dataset":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must have shape (n, d)")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one entry per row of X")
        data = cls(X.shape[1])
        for xi, yi in zip(X, y):
            data.append(xi, yi)
        return data

    def append(self, x, y: float) -> None:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dimension,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dimension},)")
        y = float(y)
        if not math.isfinite(y):
            raise ValueError(f"observation value must be finite, got {y}")
        self._xs.append(x.copy())
        self._ys.append(y)
        self._x_cache = None
        self._y_cache = None

    def __len__(self) -> int:
        return len(self._ys)

    @property
    def X(self) -> np.ndarray:
        if self._x_cache is None:
            self._x_cache = np.array(self._xs, dtype=float)
        return self._x_cache

    @property
    def y(self) -> np.ndarray:
        if self._y_cache is None:
            self._y_cache = np.array(self._ys, dtype=float)
        return self._y_cache

    @property
    def observations(self) -> tuple[Observation, ...]:
        return tuple(Observation(x.copy(), y) for x, y in zip(self._xs, self._ys))


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class PosteriorModel:
    """Frozen posterior state: everything needed to predict."""

    kernel: object
    noise_variance: float
    train_x: np.ndarray
    train_y: np.ndarray
    y_shift: float
    gram_factor: np.ndarray  # lower Cholesky factor of K + (noise + jitter) I
    weights: np.ndarray      # (K + noise I)^{-1} (y - y_shift)
    jitter: float

    @property
    def best_y(self) -> float:
        return float(self.train_y.min())


def _chol_with_jitter(system: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of a symmetric system, escalating jitter on failure."""
    try:
        return np.linalg.cholesky(system), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(system)))
    if scale <= 0:
        scale = 1.0
    frac = _JITTER_START
    eye = np.eye(system.shape[0])
    while frac <= _JITTER_LIMIT:
        jitter = frac * scale
        try:
            return np.linalg.cholesky(system + jitter * eye), jitter
        except np.linalg.LinAlgError:
            frac *= 10.0
    raise FactorizationError(
        "covariance matrix is not positive definite even with jitter up to "
        f"{_JITTER_LIMIT:g} of the mean diagonal; the system is too ill-conditioned"
    )


def fit_posterior(data: Dataset, kernel, noise_variance: float) -> PosteriorModel:
    """Factor the noisy Gram matrix and precompute prediction weights."""
    if len(data) == 0:
        raise ValueError("cannot fit a posterior on an empty dataset")
    noise_variance = float(noise_variance)
    if not math.isfinite(noise_variance) or noise_variance < 0:
        raise ValueError("noise_variance must be finite and nonnegative")
    X = data.X
    y = data.y
    K = kernel.matrix(X)
    system = K + noise_variance * np.eye(len(data))
    L, jitter = _chol_with_jitter(system)
    y_shift = float(y.mean())
    weights = cho_solve((L, True), y - y_shift, check_finite=False)
    return PosteriorModel(
        kernel=kernel,
        noise_variance=noise_variance,
        train_x=X.copy(),
        train_y=y.copy(),
        y_shift=y_shift,
        gram_factor=L,
        weights=weights,
        jitter=jitter,
    )


def predict(model: PosteriorModel, x) -> Prediction:
    """Posterior mean and variance at one point."""
    means, variances = predict_batch(model, np.atleast_2d(np.asarray(x, dtype=float)))
    return Prediction(mean=float(means[0]), variance=float(variances[0]))


def predict_batch(model: PosteriorModel, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at many points, shape (m,) each."""
    queries = np.asarray(queries, dtype=float)
    if queries.ndim != 2 or queries.shape[1] != model.train_x.shape[1]:
        raise ValueError(
            f"queries must have shape (m, {model.train_x.shape[1]}), got {queries.shape}"
        )
    k_cross = model.kernel.cross(model.train_x, queries)
    means = model.y_shift + model.weights @ k_cross
    v = solve_triangular(model.gram_factor, k_cross, lower=True, check_finite=False)
    variances = model.kernel.diag_value() - np.einsum("ij,ij->j", v, v)
    return means, np.maximum(variances, 0.0)


def predict_prior(kernel, x) -> Prediction:
    """Prior mean and variance before any data."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return Prediction(mean=0.0, variance=float(kernel.value(x, x)))


def log_marginal_likelihood(data: Dataset, kernel, noise_variance: float) -> float:
    """Gaussian evidence of the mean-centered targets under the kernel."""
    if len(data) == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    noise_variance = float(noise_variance)
    if not math.isfinite(noise_variance) or noise_variance < 0:
        raise ValueError("noise_variance must be finite and nonnegative")
    K = kernel.matrix(data.X)
    system = K + noise_variance * np.eye(len(data))
    L, _ = _chol_with_jitter(system)
    yc = data.y - data.y.mean()
    alpha = cho_solve((L, True), yc, check_finite=False)
    return float(
        -0.5 * yc @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(data) * _LOG_2PI
    )


# --- hyperparameter refit -------------------------------------------------

_REJECT = 1e25  # objective value for parameter sets whose system is singular


@dataclass
class _SEBlock:
    """One SE component of the kernel, in its own input space."""

    z: np.ndarray             # (n, q) inputs seen by this block
    incumbent: KernelHyper
    widths: np.ndarray        # (q,) positive scales for lengthscale bounds

    def __post_init__(self) -> None:
        q = self.z.shape[1]
        if self.incumbent.dimension != q or self.widths.shape != (q,):
            raise ValueError("block inputs, hyperparameters and widths disagree")
        # squared coordinate differences, reused by every objective call
        diff = self.z[:, None, :] - self.z[None, :, :]
        self.sqdiff = np.ascontiguousarray(np.moveaxis(diff * diff, -1, 0))  # (q, n, n)


def _pack(hypers: Sequence[KernelHyper]) -> np.ndarray:
    parts = []
    for h in hypers:
        parts.append([math.log(h.signal_variance)])
        parts.append(np.log(h.lengthscales))
    return np.concatenate(parts)


def _unpack(params: np.ndarray, blocks: Sequence[_SEBlock]) -> list[KernelHyper]:
    out = []
    i = 0
    for block in blocks:
        q = block.z.shape[1]
        sv = math.exp(params[i])
        ls = np.exp(params[i + 1 : i + 1 + q])
        out.append(KernelHyper(signal_variance=sv, lengthscales=ls))
        i += 1 + q
    return out


def _nll_and_grad(
    params: np.ndarray, blocks: Sequence[_SEBlock], yc: np.ndarray, noise: float
) -> tuple[float, np.ndarray]:
    n = yc.size
    part_k = []
    part_s = []  # scaled squared distances, reused for the lengthscale gradient
    i = 0
    for block in blocks:
        q = block.z.shape[1]
        sv = math.exp(params[i])
        inv_ls2 = np.exp(-2.0 * params[i + 1 : i + 1 + q])
        s = np.tensordot(inv_ls2, block.sqdiff, axes=(0, 0))
        part_k.append(sv * np.exp(-0.5 * s))
        part_s.append(inv_ls2)
        i += 1 + q
    K = part_k[0] if len(part_k) == 1 else part_k[0] + part_k[1]
    system = K + noise * np.eye(n)
    try:
        L = np.linalg.cholesky(system)
    except np.linalg.LinAlgError:
        return _REJECT, np.zeros_like(params)
    alpha = cho_solve((L, True), yc, check_finite=False)
    nll = 0.5 * yc @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * _LOG_2PI
    # dLML/dtheta = 0.5 tr((alpha alpha^T - A^{-1}) dK/dtheta)
    inv_system = cho_solve((L, True), np.eye(n), check_finite=False)
    M = np.outer(alpha, alpha) - inv_system
    grad = np.empty_like(params)
    i = 0
    for block, Kb, inv_ls2 in zip(blocks, part_k, part_s):
        q = block.z.shape[1]
        MK = M * Kb
        grad[i] = -0.5 * MK.sum()
        grad[i + 1 : i + 1 + q] = -0.5 * inv_ls2 * np.einsum(
            "ij,kij->k", MK, block.sqdiff
        )
        i += 1 + q
    return float(nll), grad


def _block_bounds(blocks: Sequence[_SEBlock], yc: np.ndarray) -> list[tuple[float, float]]:
    var_y = float(np.var(yc))
    if var_y <= 0 or not math.isfinite(var_y):
        var_y = 1.0
    bounds = []
    for block in blocks:
        bounds.append((math.log(1e-4 * var_y), math.log(1e4 * var_y)))
        for w in block.widths:
            bounds.append((math.log(1e-2 * w), math.log(10.0 * w)))
    return bounds


def _fit_blocks(
    blocks: list[_SEBlock],
    yc: np.ndarray,
    noise: float,
    rng: np.random.Generator,
    restarts: int,
    max_iter: int,
) -> list[KernelHyper] | None:
    """Multi-start L-BFGS over log parameters; None when nothing beat the incumbent."""
    bounds = _block_bounds(blocks, yc)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    incumbent = _pack([b.incumbent for b in blocks])
    inc_nll, _ = _nll_and_grad(incumbent, blocks, yc, noise)

    starts = [np.clip(incumbent, lo, hi)]
    for _ in range(max(restarts - 1, 0)):
        starts.append(rng.uniform(lo, hi))

    best_nll = math.inf
    best_params = None
    for x0 in starts:
        result = minimize(
            _nll_and_grad,
            x0,
            args=(blocks, yc, noise),
            method="L-BFGS-B",
            jac=True,
            bounds=bounds,
            options={"maxiter": max_iter},
        )
        if result.fun < best_nll:
            best_nll = float(result.fun)
            best_params = result.x
    if best_params is None or best_nll >= inc_nll:
        return None
    return _unpack(best_params, blocks)


def _default_widths(z: np.ndarray) -> np.ndarray:
    widths = z.max(axis=0) - z.min(axis=0)
    # collapsed dimensions would give empty bounds; fall back to unit scale
    return np.where(widths > 1e-12, widths, 1.0)


def optimize_hyperparameters(
    data: Dataset,
    strategy: KernelStrategy,
    noise_variance: float,
    *,
    rng: np.random.Generator | None = None,
    restarts: int = 5,
    max_iter: int = 60,
    input_widths: np.ndarray | None = None,
    warp_widths: np.ndarray | None = None,
) -> KernelStrategy:
    """Refit the strategy's hyperparameters by marginal likelihood.

    ``input_widths`` and ``warp_widths`` set the scale of the lengthscale
    bounds in the raw and warped spaces; both default to the span of the
    observed data.  With fewer than MIN_POINTS_FOR_REFIT observations the
    incumbent strategy is returned untouched.
    """
    if len(data) < MIN_POINTS_FOR_REFIT:
        return strategy
    if rng is None:
        rng = np.random.default_rng(0)
    noise = float(noise_variance)
    X = data.X
    yc = data.y - data.y.mean()

    def raw_block(hyper: KernelHyper) -> _SEBlock:
        widths = np.asarray(input_widths, float) if input_widths is not None else _default_widths(X)
        return _SEBlock(z=X, incumbent=hyper, widths=widths)

    def warp_block(warp, hyper: KernelHyper) -> _SEBlock:
        z = warp(X)
        widths = np.asarray(warp_widths, float) if warp_widths is not None else _default_widths(z)
        return _SEBlock(z=z, incumbent=hyper, widths=widths)

    if isinstance(strategy, SEStrategy):
        fitted = _fit_blocks([raw_block(strategy.hyper)], yc, noise, rng, restarts, max_iter)
        return strategy if fitted is None else replace(strategy, hyper=fitted[0])

    if isinstance(strategy, WarpedStrategy):
        fitted = _fit_blocks(
            [warp_block(strategy.warp, strategy.hyper)], yc, noise, rng, restarts, max_iter
        )
        return strategy if fitted is None else replace(strategy, hyper=fitted[0])

    if isinstance(strategy, SumStrategy):
        blocks = [raw_block(strategy.raw_hyper), warp_block(strategy.warp, strategy.warp_hyper)]
        fitted = _fit_blocks(blocks, yc, noise, rng, restarts, max_iter)
        if fitted is None:
            return strategy
        return replace(strategy, raw_hyper=fitted[0], warp_hyper=fitted[1])

    if isinstance(strategy, AlternationStrategy):
        # both sides are refit against their own single-kernel evidence
        raw_fit = _fit_blocks([raw_block(strategy.raw_hyper)], yc, noise, rng, restarts, max_iter)
        warp_fit = _fit_blocks(
            [warp_block(strategy.warp, strategy.warp_hyper)], yc, noise, rng, restarts, max_iter
        )
        return replace(
            strategy,
            raw_hyper=strategy.raw_hyper if raw_fit is None else raw_fit[0],
            warp_hyper=strategy.warp_hyper if warp_fit is None else warp_fit[0],
        )

    raise TypeError(f"unsupported strategy type: {type(strategy).__name__}")
