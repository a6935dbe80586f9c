"""Loading, cohort selection and hourly bucketing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, SchemaError
from .represent.maps import AggregationMap, MiniOntology
from .represent.tensors import HourlyTensor
from .schema import (
    AGG_MAP_COLUMNS,
    ERAS,
    EVENT_COLUMNS,
    EVENT_DTYPES,
    ITEM_COLUMNS,
    ITEM_DTYPES,
    ONTOLOGY_COLUMNS,
    STAY_COLUMNS,
    STAY_DTYPES,
    Dataset,
    item_column,
)


@dataclass(frozen=True)
class CohortCriteria:
    first_stay_only: bool = True
    min_stay_hours: float = 36.0
    min_age_years: float = 15.0  # exclusive
    censor_hours: int = 24

    def validate(self) -> None:
        if self.censor_hours < 1 or int(self.censor_hours) != self.censor_hours:
            raise ConfigError(f"censor_hours must be a positive integer, got {self.censor_hours}")
        if not self.censor_hours < self.min_stay_hours:
            raise ConfigError(
                f"censor_hours ({self.censor_hours}) must be below min_stay_hours ({self.min_stay_hours})"
                " to keep a label gap"
            )


def _read_table(path: Path, columns, dtypes) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise SchemaError(path, None, None, "file not found")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise SchemaError(path, None, None, f"unreadable: {exc}") from exc
    if tuple(df.columns) != tuple(columns):
        raise SchemaError(path, 1, None, f"header {list(df.columns)} != expected {list(columns)}")
    out = {}
    for col in columns:
        raw = df[col]
        kind = dtypes[col]
        if kind in ("int64", "float64"):
            vals = pd.to_numeric(raw, errors="coerce")
            bad = vals.isna().to_numpy()
            if kind == "int64" and not bad.any():
                bad = (vals != np.floor(vals)).to_numpy()
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise SchemaError(path, row + 2, col, f"cannot parse {raw.iloc[row]!r} as {kind}")
            if kind == "float64":
                # shortest-repr round trip
                vals = raw.astype("float64")
            out[col] = vals.astype(kind)
        elif kind == "bool":
            low = raw.str.lower()
            ok = low.isin(["true", "false", "1", "0"]).to_numpy()
            if not ok.all():
                row = int(np.flatnonzero(~ok)[0])
                raise SchemaError(path, row + 2, col, f"cannot parse {raw.iloc[row]!r} as boolean")
            out[col] = low.isin(["true", "1"]).astype(bool)
        else:
            empty = (raw == "").to_numpy()
            if empty.any():
                row = int(np.flatnonzero(empty)[0])
                raise SchemaError(path, row + 2, col, "empty value")
            out[col] = raw.astype(object)
    return pd.DataFrame(out, columns=list(columns))


def dataset_paths(data_dir) -> dict[str, Path]:
    d = Path(data_dir)
    return {name: d / f"{name}.csv" for name in ("events", "stays", "items", "agg_map", "ontology")}


def load_dataset(paths) -> Dataset:
    """Load the delimited-text tables; ``paths`` is a directory or a name -> path mapping."""
    if not isinstance(paths, dict):
        paths = dataset_paths(paths)
    events = _read_table(paths["events"], EVENT_COLUMNS, EVENT_DTYPES)
    stays = _read_table(paths["stays"], STAY_COLUMNS, STAY_DTYPES)
    items = _read_table(paths["items"], ITEM_COLUMNS, ITEM_DTYPES)

    bad_era = ~items["era"].isin(ERAS).to_numpy()
    if bad_era.any():
        row = int(np.flatnonzero(bad_era)[0])
        raise SchemaError(paths["items"], row + 2, "era", f"unknown era {items['era'].iloc[row]!r}")
    nonpos = ~(items["to_canonical_factor"].to_numpy() > 0)
    if nonpos.any():
        row = int(np.flatnonzero(nonpos)[0])
        raise SchemaError(paths["items"], row + 2, "to_canonical_factor", "must be > 0")
    if items["item_id"].duplicated().any():
        row = int(np.flatnonzero(items["item_id"].duplicated().to_numpy())[0])
        raise SchemaError(paths["items"], row + 2, "item_id", "duplicate item_id")
    if stays["stay_id"].duplicated().any():
        row = int(np.flatnonzero(stays["stay_id"].duplicated().to_numpy())[0])
        raise SchemaError(paths["stays"], row + 2, "stay_id", "duplicate stay_id")

    known = set(items["item_id"].tolist())
    unknown = ~events["item_id"].isin(known).to_numpy()
    if unknown.any():
        row = int(np.flatnonzero(unknown)[0])
        raise SchemaError(
            paths["events"], row + 2, "item_id", f"item_id {events['item_id'].iloc[row]} not in item dictionary"
        )
    off = events["hour_offset"].to_numpy()
    bad = ~(np.isfinite(off) & (off >= 0))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise SchemaError(paths["events"], row + 2, "hour_offset", "must be finite and >= 0")
    orphan = ~events["stay_id"].isin(set(stays["stay_id"].tolist())).to_numpy()
    if orphan.any():
        row = int(np.flatnonzero(orphan)[0])
        raise SchemaError(paths["events"], row + 2, "stay_id", f"stay {events['stay_id'].iloc[row]} not in stays")

    agg_map = ontology = None
    if Path(paths.get("agg_map", "")).is_file():
        df = _read_table(paths["agg_map"], AGG_MAP_COLUMNS,
                         {"group_id": "object", "group_name": "object", "item_id": "int64",
                          "to_canonical_factor": "float64"})
        agg_map = AggregationMap.from_frame(df)
    if Path(paths.get("ontology", "")).is_file():
        df = _read_table(paths["ontology"], ONTOLOGY_COLUMNS, {"concept_id": "object", "synonym": "object"})
        ontology = MiniOntology.from_frame(df)
    return Dataset(events, stays, items, agg_map, ontology)


def select_cohort(stays: pd.DataFrame, criteria: CohortCriteria = CohortCriteria()) -> pd.DataFrame:
    criteria.validate()
    s = stays
    if criteria.first_stay_only:
        # earliest admit_year, then lowest stay_id
        first = s.sort_values(["patient_id", "admit_year", "stay_id"], kind="stable")
        first = first.drop_duplicates("patient_id", keep="first")
        s = s[s["stay_id"].isin(first["stay_id"])]
    keep = (s["los_days"] * 24.0 >= criteria.min_stay_hours) & (s["age"] > criteria.min_age_years)
    return s[keep].sort_values("stay_id", kind="stable").reset_index(drop=True)


def bucket_hourly(events: pd.DataFrame, stays, criteria: CohortCriteria = CohortCriteria(),
                  columns=None) -> HourlyTensor:
    """Hourly means over half-open buckets [h, h+1) for h < censor_hours.

    ``stays`` may be a stays frame, an array of stay ids or a single id;
    ``columns`` is the ordered list of item ids (default: all items seen).
    """
    if isinstance(stays, pd.DataFrame):
        stay_ids = stays["stay_id"].to_numpy(dtype=np.int64)
    else:
        stay_ids = np.atleast_1d(np.asarray(stays, dtype=np.int64))
    hours = int(criteria.censor_hours)
    if columns is None:
        columns = sorted(set(events["item_id"].tolist()))
    item_ids = np.asarray(list(columns), dtype=np.int64)

    ev = events[(events["hour_offset"] < hours) & events["stay_id"].isin(stay_ids)
                & events["item_id"].isin(item_ids)]
    # canonical order makes the float sums independent of file order
    ev = ev.sort_values(["stay_id", "item_id", "hour_offset", "value"], kind="stable")
    row_of = pd.Series(np.arange(len(stay_ids)), index=stay_ids)
    col_of = pd.Series(np.arange(len(item_ids)), index=item_ids)
    r = row_of.loc[ev["stay_id"].to_numpy()].to_numpy()
    c = col_of.loc[ev["item_id"].to_numpy()].to_numpy()
    h = np.floor(ev["hour_offset"].to_numpy()).astype(np.int64)

    shape = (len(stay_ids), hours, len(item_ids))
    flat = np.ravel_multi_index((r, h, c), shape) if len(r) else np.zeros(0, dtype=np.int64)
    size = int(np.prod(shape))
    sums = np.bincount(flat, weights=ev["value"].to_numpy(), minlength=size)
    counts = np.bincount(flat, minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / counts, np.nan).reshape(shape)
    return HourlyTensor(stay_ids, [item_column(i) for i in item_ids], values)


def demographic_matrix(stays: pd.DataFrame, include_insurance: bool = False, categories=None):
    """One-hot gender and ethnicity blocks (optionally insurance).

    ``categories`` maps attribute -> ordered category list; by default the
    sorted distinct values present in ``stays`` are used.
    """
    attrs = ["gender", "ethnicity"] + (["insurance"] if include_insurance else [])
    categories = dict(categories or {})
    blocks, names = [], []
    for a in attrs:
        cats = categories.get(a) or sorted(stays[a].unique().tolist())
        categories[a] = cats
        vals = stays[a].to_numpy()
        block = np.stack([(vals == c) for c in cats], axis=1).astype(np.float64) if cats else \
            np.zeros((len(stays), 0))
        blocks.append(block)
        names += [f"demo|{a}={c}" for c in cats]
    X = np.concatenate(blocks, axis=1) if blocks else np.zeros((len(stays), 0))
    return X, names, categories
