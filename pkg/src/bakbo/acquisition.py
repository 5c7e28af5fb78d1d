"""Acquisition functions and the derivative-free inner maximization.

The inner search scores a batch of uniform candidates, then refines the
incumbent (the best-scoring candidate) with coordinate-wise random
perturbations on a shrinking radius, accepting a move only when it
scores strictly better.  Every point goes through the same batched
predict path, so scores are exactly comparable and the returned point
dominates every candidate drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gp import PosteriorModel, Prediction, predict_batch
from .space import Domain

__all__ = [
    "AcquisitionConfig",
    "expected_improvement",
    "lcb",
    "propose_next",
]

KIND_EI = "ei"
KIND_LCB = "lcb"

# Relative perturbation radius of the polish phase: geometric decay from
# a tenth of the domain width down to one ten-thousandth.
_REFINE_RADIUS_START = 0.1
_REFINE_RADIUS_END = 1e-4


@dataclass(frozen=True)
class AcquisitionConfig:
    kind: str = KIND_EI
    beta: float = 2.0
    candidate_count: int = 2000
    refine_steps: int = 20

    def __post_init__(self) -> None:
        if self.kind not in (KIND_EI, KIND_LCB):
            raise ValueError(f"kind must be {KIND_EI!r} or {KIND_LCB!r}")
        if not math.isfinite(self.beta) or self.beta <= 0:
            raise ValueError("beta must be finite and strictly positive")
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be at least 1")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be nonnegative")


def _ei_values(means: np.ndarray, variances: np.ndarray, best_y: float) -> np.ndarray:
    gap = best_y - means
    s = np.sqrt(variances)
    out = np.maximum(gap, 0.0)  # deterministic limit where the posterior is exact
    positive = s > 0
    if np.any(positive):
        sp = s[positive]
        z = gap[positive] / sp
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        out[positive] = gap[positive] * ndtr(z) + sp * pdf
    return np.maximum(out, 0.0)


def _lcb_values(means: np.ndarray, variances: np.ndarray, beta: float) -> np.ndarray:
    return means - beta * np.sqrt(variances)


def expected_improvement(prediction: Prediction, best_y: float) -> float:
    """Expected one-step improvement below best_y (minimization)."""
    means = np.array([prediction.mean])
    variances = np.array([max(prediction.variance, 0.0)])
    return float(_ei_values(means, variances, float(best_y))[0])


def lcb(prediction: Prediction, beta: float) -> float:
    """Lower confidence bound; smaller is more promising."""
    if not math.isfinite(beta) or beta <= 0:
        raise ValueError("beta must be finite and strictly positive")
    return float(prediction.mean - beta * math.sqrt(max(prediction.variance, 0.0)))


def propose_next(
    model: PosteriorModel,
    domain: Domain,
    config: AcquisitionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Approximate argmax of the acquisition over the domain."""
    if domain.dimension != model.train_x.shape[1]:
        raise ValueError("domain dimension does not match the model's inputs")

    if config.kind == KIND_EI:
        best_y = model.best_y

        def score(points: np.ndarray) -> np.ndarray:
            means, variances = predict_batch(model, points)
            return _ei_values(means, variances, best_y)

        better = np.greater
        pick = np.argmax
    else:

        def score(points: np.ndarray) -> np.ndarray:
            means, variances = predict_batch(model, points)
            return _lcb_values(means, variances, config.beta)

        better = np.less
        pick = np.argmin

    candidates = domain.sample(rng, config.candidate_count)
    scores = score(candidates)
    idx = int(pick(scores))  # ties resolve to the first occurrence
    x = candidates[idx].copy()
    x_score = scores[idx]

    steps = config.refine_steps
    width = domain.width
    for step in range(steps):
        if steps > 1:
            decay = (_REFINE_RADIUS_END / _REFINE_RADIUS_START) ** (step / (steps - 1))
        else:
            decay = 1.0
        radius = _REFINE_RADIUS_START * decay * width
        for j in range(domain.dimension):
            # the draw happens unconditionally to keep the stream aligned
            delta = rng.uniform(-radius[j], radius[j])
            trial = x.copy()
            trial[j] = min(max(trial[j] + delta, domain.lower[j]), domain.upper[j])
            trial_score = score(trial[None, :])[0]
            if better(trial_score, x_score):
                x = trial
                x_score = trial_score
    return x
