"""AUROC via the Mann-Whitney rank statistic, and its bootstrap standard error."""

from __future__ import annotations

import numpy as np

from ..errors import UndefinedMetricError


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    run_rank = (starts + 1 + ends) / 2.0  # mean of ranks starts+1 .. ends
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def auroc(y, scores) -> float:
    """P(score of a random positive > that of a random negative), ties counting one half."""
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=np.float64)
    if y.shape != scores.shape:
        raise ValueError(f"{len(y)} labels but {len(scores)} scores")
    if np.isnan(scores).any():
        raise ValueError("scores contain NaN")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError(f"AUROC needs both classes (positives={n1}, negatives={n0})")
    r1 = average_ranks(scores)[pos].sum()
    return float((r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def auroc_stderr(y, scores, n_boot: int = 200, seed: int = 0) -> float:
    """Std of AUROC over bootstrap resamples drawn separately within each class."""
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=np.float64)
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y != 1)
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("bootstrap stderr needs both classes")
    rng = np.random.default_rng(seed)
    labels = np.r_[np.ones(len(pos), dtype=np.int8), np.zeros(len(neg), dtype=np.int8)]
    values = np.empty(n_boot)
    for b in range(n_boot):
        idx = np.r_[rng.choice(pos, len(pos)), rng.choice(neg, len(neg))]
        values[b] = auroc(labels, scores[idx])
    return float(values.std())
