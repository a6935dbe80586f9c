"""Flattened per-stay examples: 24 hourly vectors followed by demographics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..represent.tensors import DenseSeries


@dataclass
class FlatExamples:
    stay_ids: np.ndarray
    X: np.ndarray  # (n, p)
    y: np.ndarray  # (n,) in {0, 1}
    columns: list[str]

    def __len__(self) -> int:
        return len(self.stay_ids)

    def take(self, rows) -> "FlatExamples":
        rows = np.asarray(rows)
        return FlatExamples(self.stay_ids[rows], self.X[rows], self.y[rows], self.columns)

    def with_labels(self, y) -> "FlatExamples":
        return FlatExamples(self.stay_ids, self.X, np.asarray(y, dtype=np.int8), self.columns)


def make_examples(series: DenseSeries, demo: np.ndarray, demo_names: list[str], labels,
                  dtype=np.float64) -> FlatExamples:
    """Concatenate hour-ordered feature vectors with the demographic vector."""
    hourly = series.flatten()
    X = np.empty((hourly.shape[0], hourly.shape[1] + demo.shape[1]), dtype=dtype)
    X[:, :hourly.shape[1]] = hourly
    X[:, hourly.shape[1]:] = demo
    return FlatExamples(
        np.asarray(series.stay_ids), X, np.asarray(labels, dtype=np.int8),
        series.flat_columns() + list(demo_names),
    )
