"""Hourly grids and the raw / clinical-aggregate representations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import ConfigError
from ..schema import item_column
from .maps import AggregationMap


@dataclass
class HourlyTensor:
    """A batch of per-stay hour x feature grids; NaN marks "not measured"."""

    stay_ids: np.ndarray
    columns: list[str]
    values: np.ndarray  # (n_stays, hours, n_columns)

    def __post_init__(self):
        self.stay_ids = np.asarray(self.stay_ids, dtype=np.int64)
        self.columns = list(self.columns)
        if self.values.shape[0] != len(self.stay_ids) or self.values.shape[2] != len(self.columns):
            raise ValueError(f"grid shape {self.values.shape} does not match "
                             f"{len(self.stay_ids)} stays x {len(self.columns)} columns")

    @property
    def hours(self) -> int:
        return self.values.shape[1]

    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def missing_rate(self) -> float:
        return float(np.isnan(self.values).mean()) if self.values.size else float("nan")

    def take(self, rows) -> "HourlyTensor":
        rows = np.asarray(rows)
        return HourlyTensor(self.stay_ids[rows], self.columns, self.values[rows])

    def select(self, stay_ids) -> "HourlyTensor":
        pos = pd.Series(np.arange(len(self.stay_ids)), index=self.stay_ids)
        return self.take(pos.loc[np.asarray(stay_ids, dtype=np.int64)].to_numpy())

    def stay(self, stay_id) -> np.ndarray:
        return self.values[int(np.flatnonzero(self.stay_ids == stay_id)[0])]


@dataclass
class DenseSeries:
    """Model-ready hourly features without missing cells."""

    stay_ids: np.ndarray
    columns: list[str]
    values: np.ndarray  # (n_stays, hours, n_columns)

    @property
    def hours(self) -> int:
        return self.values.shape[1]

    def flat_columns(self) -> list[str]:
        return [f"h{h:02d}|{c}" for h in range(self.hours) for c in self.columns]

    def flatten(self) -> np.ndarray:
        n = self.values.shape[0]
        return self.values.reshape(n, -1)


def _reindex(tensor: HourlyTensor, columns: list[str]) -> HourlyTensor:
    pos = {c: j for j, c in enumerate(tensor.columns)}
    out = np.full(tensor.values.shape[:2] + (len(columns),), np.nan)
    src = [pos[c] for c in columns if c in pos]
    dst = [j for j, c in enumerate(columns) if c in pos]
    out[:, :, dst] = tensor.values[:, :, src]
    return HourlyTensor(tensor.stay_ids, columns, out)


def build_raw(tensor: HourlyTensor, items: pd.DataFrame) -> HourlyTensor:
    """One column per item of the full vocabulary (both eras), sorted by id.

    Values are passed through unchanged; items a stay never uses stay absent.
    """
    columns = sorted(item_column(i) for i in items["item_id"])
    extra = set(tensor.columns) - set(columns)
    if extra:
        raise ConfigError(f"tensor columns not in item vocabulary: {sorted(extra)[:5]}")
    if tensor.columns == columns:
        return HourlyTensor(tensor.stay_ids, columns, tensor.values.copy())
    return _reindex(tensor, columns)


def build_aggregate(tensor: HourlyTensor, agg_map: AggregationMap) -> HourlyTensor:
    """Average member items per group after conversion to canonical units.

    Unmapped items are dropped; a group cell is absent iff no member item was
    observed in that hour.
    """
    pos = {c: j for j, c in enumerate(tensor.columns)}
    groups = sorted(agg_map.groups, key=lambda g: g.group_id)
    n, hours, _ = tensor.values.shape
    out = np.full((n, hours, len(groups)), np.nan)
    for k, g in enumerate(groups):
        members = [(pos[item_column(i)], f) for i, f in g.members if item_column(i) in pos]
        if not members:
            continue
        idx = np.array([m[0] for m in members])
        factors = np.array([m[1] for m in members])
        canon = tensor.values[:, :, idx] * factors
        seen = ~np.isnan(canon)
        total = np.where(seen, canon, 0.0).sum(axis=2)
        count = seen.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, :, k] = np.where(count > 0, total / count, np.nan)
    return HourlyTensor(tensor.stay_ids, [g.group_id for g in groups], out)
