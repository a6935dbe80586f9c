"""Simple imputation: forward-filled value, observed mask, time since last measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import DenseSeries, HourlyTensor

CHANNELS = ("value", "mask", "delta")


@dataclass
class ImputedTensor:
    stay_ids: np.ndarray
    features: list[str]
    value: np.ndarray  # (n, hours, d)
    mask: np.ndarray
    delta: np.ndarray

    @property
    def hours(self) -> int:
        return self.value.shape[1]

    def channel_columns(self) -> list[str]:
        return [f"{f}:{ch}" for f in self.features for ch in CHANNELS]

    def channels(self) -> np.ndarray:
        """(n, hours, 3d) with channels interleaved per feature."""
        n, h, d = self.value.shape
        out = np.empty((n, h, d, 3))
        out[..., 0] = self.value
        out[..., 1] = self.mask
        out[..., 2] = self.delta
        return out.reshape(n, h, 3 * d)

    def dense(self) -> DenseSeries:
        return DenseSeries(self.stay_ids, self.channel_columns(), self.channels())


def forward_fill(values: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Carry the last observation along axis 1; ``fill`` before the first one."""
    seen = ~np.isnan(values)
    idx = np.where(seen, np.arange(values.shape[1])[None, :, None], -1)
    np.maximum.accumulate(idx, axis=1, out=idx)
    taken = np.take_along_axis(values, np.maximum(idx, 0), axis=1)
    return np.where(idx >= 0, taken, fill)


def simple_impute(tensor: HourlyTensor, censor_hours: int | None = None) -> ImputedTensor:
    """Expand a normalized tensor into (value, mask, delta) channels.

    delta restarts at 0 on each observation and otherwise grows by
    ``1 / censor_hours`` per hour, starting from a virtual 0 before hour 0.
    """
    values = tensor.values
    hours = values.shape[1]
    step = 1.0 / (censor_hours or hours)
    seen = ~np.isnan(values)
    delta = np.empty_like(values)
    prev = np.zeros((values.shape[0], values.shape[2]))
    for h in range(hours):
        prev = np.where(seen[:, h], 0.0, prev + step)
        delta[:, h] = prev
    return ImputedTensor(
        tensor.stay_ids,
        list(tensor.columns),
        forward_fill(values, 0.0),
        seen.astype(np.float64),
        delta,
    )
