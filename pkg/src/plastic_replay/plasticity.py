"""Per-neuron learning-capacity scores and gradient-norm tracking.

A neuron's score is its batch-mean gradient magnitude divided by the mean
over its layer, so scores average to 1 within each layer; neurons whose
score falls at or below a threshold count as inactive. Shrinking scores
and a shrinking gradient L1 norm are the desk-scale symptoms of a network
losing its ability to fit new targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import GradientRecord

DEGENERATE_LAYER_MEAN = 1e-12
DEFAULT_INACTIVITY_THRESHOLD = 0.1


@dataclass
class GramaReport:
    scores: list[np.ndarray]  # per layer, per neuron
    inactive_fraction: float
    tau: float
    grad_l1: float


def grama_scores(preact_grad_mags: list[np.ndarray]) -> list[np.ndarray]:
    """Normalize each neuron's batch-mean gradient magnitude by its layer
    mean; a layer with (numerically) all-zero gradients scores 0."""
    scores = []
    for mags in preact_grad_mags:
        mags = np.asarray(mags, dtype=np.float64)
        mean = mags.mean()
        if mean < DEGENERATE_LAYER_MEAN:
            scores.append(np.zeros_like(mags))
        else:
            scores.append(mags / mean)
    return scores


def inactive_fraction(scores: list[np.ndarray], tau: float) -> float:
    """Fraction of neurons (all layers pooled) with score <= tau."""
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    pooled = np.concatenate([np.ravel(s) for s in scores])
    return float(np.count_nonzero(pooled <= tau) / pooled.size)


def grad_l1(record: GradientRecord) -> float:
    """Batch-mean L1 norm over all parameter gradients."""
    total = sum(np.abs(gw).sum() + np.abs(gb).sum() for gw, gb in record.param_grads)
    return float(total / record.batch_size)


def grama_report(record: GradientRecord, tau: float = DEFAULT_INACTIVITY_THRESHOLD) -> GramaReport:
    scores = grama_scores(record.preact_magnitudes())
    return GramaReport(
        scores=scores,
        inactive_fraction=inactive_fraction(scores, tau),
        tau=tau,
        grad_l1=grad_l1(record),
    )
