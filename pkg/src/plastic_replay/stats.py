"""Evaluation aggregation: interquartile mean and stratified bootstrap CIs.

The IQM trims exactly a quarter of the probability mass from each tail,
weighting the boundary order statistics fractionally, so it is defined for
any sample size (not just multiples of four). The bootstrap resamples runs
with replacement independently within each task, pools the resamples, and
takes percentiles of the pooled IQM across replicates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ScoreMatrix:
    """Final scores grouped by task: scores[task] = per-run score vector."""

    scores: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.scores:
            raise ValueError("score matrix must contain at least one task")
        clean = {}
        for task, runs in self.scores.items():
            runs = np.asarray(runs, dtype=np.float64)
            if runs.size == 0:
                raise ValueError(f"task {task!r} has no runs")
            clean[task] = runs
        self.scores = clean

    @property
    def tasks(self) -> list[str]:
        return list(self.scores)

    def pooled(self) -> np.ndarray:
        return np.concatenate(list(self.scores.values()))


def iqm(values) -> float:
    """Mean of the middle 50%, trimming exactly n/4 mass per tail with
    fractional weight on the boundary elements."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("iqm of an empty sequence")
    trim = n / 4.0
    weights = np.ones(n)
    whole = int(np.floor(trim))
    frac = trim - whole
    weights[:whole] = 0.0
    weights[n - whole :] = 0.0
    if frac > 0.0:
        weights[whole] = 1.0 - frac
        weights[n - whole - 1] = 1.0 - frac
    return float(np.sum(weights * x) / np.sum(weights))


def _resample_once(matrix: ScoreMatrix, rng: np.random.Generator) -> np.ndarray:
    """One stratified bootstrap replicate: resample runs with replacement
    within each task, then pool."""
    parts = []
    for runs in matrix.scores.values():
        idx = rng.integers(0, runs.size, size=runs.size)
        parts.append(runs[idx])
    return np.concatenate(parts)


def stratified_bootstrap_ci(
    matrix: ScoreMatrix,
    reps: int,
    level: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the pooled IQM at the given
    confidence level, stratified by task; deterministic per seeded rng."""
    if reps < 100:
        raise ValueError(f"reps must be >= 100, got {reps}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    stats = np.empty(reps)
    for i in range(reps):
        stats[i] = iqm(_resample_once(matrix, rng))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(lo), float(hi)
