"""Per-column z-normalization fitted on training stays only."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .tensors import HourlyTensor

STD_FLOOR = 1e-12
FORMAT = "ehrshift-normalizer v1"


@dataclass
class Normalizer:
    columns: list[str]
    mean: np.ndarray
    std: np.ndarray

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {FORMAT}\ncolumn,mean,std\n")
        for c, m, s in zip(self.columns, self.mean, self.std):
            buf.write(f"{c},{float(m)!r},{float(s)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Normalizer":
        lines = text.splitlines()
        if not lines or lines[0] != f"# {FORMAT}":
            raise ValueError(f"not a {FORMAT} document")
        rows = [ln.split(",") for ln in lines[2:] if ln]
        return cls([r[0] for r in rows], np.array([float(r[1]) for r in rows]),
                   np.array([float(r[2]) for r in rows]))


def fit_normalizer(tensor: HourlyTensor) -> Normalizer:
    """Mean and population std of observed cells per column.

    Columns never observed in training fall back to mean 0 / std 1; std below
    ``STD_FLOOR`` is replaced by 1.
    """
    v = tensor.values.reshape(-1, tensor.values.shape[2])
    seen = ~np.isnan(v)
    count = seen.sum(axis=0)
    filled = np.where(seen, v, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, filled.sum(axis=0) / count, 0.0)
        dev = np.where(seen, v - mean, 0.0)
        var = np.where(count > 0, (dev**2).sum(axis=0) / count, 1.0)
    std = np.sqrt(var)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return Normalizer(list(tensor.columns), mean, std)


def apply_normalizer(norm: Normalizer, tensor: HourlyTensor) -> HourlyTensor:
    if list(tensor.columns) != norm.columns:
        raise ValueError("tensor columns differ from the fitted normalizer's columns")
    return HourlyTensor(tensor.stay_ids, tensor.columns, (tensor.values - norm.mean) / norm.std)
