"""On-disk table schemas and the in-memory dataset container."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

if TYPE_CHECKING:
    from .represent.maps import AggregationMap, MiniOntology

EVENT_COLUMNS = ("stay_id", "item_id", "hour_offset", "value")
STAY_COLUMNS = (
    "stay_id",
    "patient_id",
    "admit_year",
    "age",
    "gender",
    "ethnicity",
    "insurance",
    "icu_mortality",
    "los_days",
)
ITEM_COLUMNS = ("item_id", "description", "recorded_unit", "to_canonical_factor", "era")
AGG_MAP_COLUMNS = ("group_id", "group_name", "item_id", "to_canonical_factor")
ONTOLOGY_COLUMNS = ("concept_id", "synonym")

EVENT_DTYPES = {"stay_id": "int64", "item_id": "int64", "hour_offset": "float64", "value": "float64"}
STAY_DTYPES = {
    "stay_id": "int64",
    "patient_id": "int64",
    "admit_year": "int64",
    "age": "float64",
    "gender": "object",
    "ethnicity": "object",
    "insurance": "object",
    "icu_mortality": "bool",
    "los_days": "float64",
}
ITEM_DTYPES = {
    "item_id": "int64",
    "description": "object",
    "recorded_unit": "object",
    "to_canonical_factor": "float64",
    "era": "object",
}

ERAS = ("pre", "post", "both")

# label name -> function of the stays frame
TASKS = {
    "mortality": lambda stays: stays["icu_mortality"].to_numpy().astype(np.int8),
    "long_los": lambda stays: (stays["los_days"].to_numpy() > 3.0).astype(np.int8),
}


def empty_frame(columns, dtypes) -> pd.DataFrame:
    return pd.DataFrame({c: pd.Series([], dtype=dtypes[c]) for c in columns})


def item_column(item_id) -> str:
    """Raw feature identifier; zero padding keeps lexicographic == numeric order."""
    return f"item_{int(item_id):07d}"


@dataclass
class Dataset:
    events: pd.DataFrame
    stays: pd.DataFrame
    items: pd.DataFrame
    agg_map: "AggregationMap | None" = None
    ontology: "MiniOntology | None" = None
    # ground truth kept by the generator only (stay_id -> severity)
    truth: dict = field(default_factory=dict, repr=False, compare=False)

    def labels(self, task: str, stays: pd.DataFrame | None = None) -> np.ndarray:
        return TASKS[task](self.stays if stays is None else stays)

