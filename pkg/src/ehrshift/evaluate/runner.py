"""Grid evaluation: per-year temporal regimes, year-agnostic 5x2 CV, subgroups.

The unit of work is one (representation, regime, split) triple: the
representation is fit on the training stays once and every (task, model)
pair reuses the resulting features. Units are independent, so they can run in
any order or process; rows are merged by sorted key.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from ..cohort import CohortCriteria, bucket_hourly, demographic_matrix, select_cohort
from ..errors import (
    ConfigError,
    DegenerateLabelError,
    EmptySplitError,
    StratificationError,
    UndefinedMetricError,
)
from ..models.flat import make_examples
from ..models.search import FAMILIES, SearchSpec, random_search
from ..represent.pipeline import BASELINES, REPRESENTATIONS, Representation
from ..schema import TASKS, Dataset
from .metrics import auroc, auroc_stderr
from .regimes import RegimeSpec, split_regime, stratified_repeats

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("task", "representation", "model", "regime", "test_year", "auroc", "stderr",
                  "n_train", "n_test", "subgroup", "subgroup_value", "flag")
SUMMARY_COLUMNS = ("task", "representation", "model", "regime", "n_years", "average_auroc_mean",
                   "average_auroc_std", "max_drop", "first_year", "worst_year")
SUBGROUP_ATTRIBUTES = ("gender", "ethnicity", "insurance")
CV_FLAG = "5x2cv"
UNSTABLE = "unstable"


def cell_seed(*parts) -> int:
    """Stable 63-bit seed from a cell key (independent of scheduling and process)."""
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


@dataclass
class Prepared:
    """Cohort-level inputs shared by every evaluation cell."""

    stays: pd.DataFrame
    raw: object  # HourlyTensor over the full item vocabulary
    demo: np.ndarray
    demo_names: list[str]
    labels: dict[str, np.ndarray]
    items: pd.DataFrame
    agg_map: object
    ontology: object
    censor_hours: int

    @property
    def years(self) -> np.ndarray:
        return self.stays["admit_year"].to_numpy()

    @property
    def year_range(self) -> tuple[int, int]:
        return int(self.years.min()), int(self.years.max())


def prepare(data: Dataset, criteria: CohortCriteria = CohortCriteria()) -> Prepared:
    stays = select_cohort(data.stays, criteria)
    if stays.empty:
        raise ConfigError("cohort selection left no stays")
    columns = sorted(data.items["item_id"].tolist())
    raw = bucket_hourly(data.events, stays, criteria, columns)
    # one-hot categories are a property of the data dictionary, not a fitted statistic
    demo, names, _ = demographic_matrix(stays)
    labels = {task: np.asarray(fn(stays), dtype=np.int8) for task, fn in TASKS.items()}
    return Prepared(stays, raw, demo, names, labels, data.items, data.agg_map, data.ontology,
                    int(criteria.censor_hours))


@dataclass
class EvalSettings:
    tasks: list[str] = field(default_factory=lambda: list(TASKS))
    representations: list[str] = field(default_factory=lambda: list(REPRESENTATIONS))
    models: list[str] = field(default_factory=lambda: list(FAMILIES))
    regimes: list[RegimeSpec] = field(default_factory=lambda: [RegimeSpec("full_history")])
    search: SearchSpec = field(default_factory=SearchSpec)
    n_boot: int = 200
    subgroup_attributes: tuple[str, ...] = SUBGROUP_ATTRIBUTES
    subgroup_floor: int = 30
    pca_k: int | None = None
    cv_repeats: int = 5
    cv_folds: int = 2
    seed: int = 0

    def validate(self) -> None:
        for name, values, allowed in (("tasks", self.tasks, tuple(TASKS)),
                                      ("representations", self.representations, REPRESENTATIONS + BASELINES),
                                      ("models", self.models, FAMILIES)):
            if not values:
                raise ConfigError(f"{name} must not be empty")
            bad = [v for v in values if v not in allowed]
            if bad:
                raise ConfigError(f"unknown {name}: {bad}; allowed {list(allowed)}")
            if len(set(values)) != len(values):
                raise ConfigError(f"duplicate entries in {name}")
        if not self.regimes:
            raise ConfigError("regimes must not be empty")
        if len({r.kind for r in self.regimes}) != len(self.regimes):
            raise ConfigError("each regime kind may appear once")
        bad = [a for a in self.subgroup_attributes if a not in SUBGROUP_ATTRIBUTES]
        if bad:
            raise ConfigError(f"unknown subgroup attributes {bad}")
        if self.n_boot < 1 or self.subgroup_floor < 0 or self.cv_repeats < 1 or self.cv_folds < 2:
            raise ConfigError("n_boot >= 1, subgroup_floor >= 0, cv_repeats >= 1 and cv_folds >= 2 required")


@dataclass(frozen=True)
class Unit:
    representation: str
    regime: RegimeSpec
    split: str  # test year, or "cv<repeat>-<fold>" for year-agnostic

    @property
    def key(self) -> tuple:
        return (self.representation, self.regime.kind, self.split)


@dataclass
class Row:
    task: str
    representation: str
    model: str
    regime: str
    test_year: str
    auroc: float | None
    stderr: float | None
    n_train: int
    n_test: int
    subgroup: str = ""
    subgroup_value: str = ""
    flag: str = ""

    def sort_key(self) -> tuple:
        return (self.task, self.representation, self.model, self.regime, self.test_year,
                self.subgroup, self.subgroup_value)


@dataclass
class UnitOutput:
    rows: list[Row]
    # (task, model) -> serialized representation + model state
    artifacts: dict[tuple[str, str], str] = field(default_factory=dict)


def plan_units(prep: Prepared, settings: EvalSettings) -> list[Unit]:
    first, last = prep.year_range
    units = []
    for rep in settings.representations:
        for regime in settings.regimes:
            if regime.temporal:
                resolved = regime.resolve(first, last)
                units += [Unit(rep, resolved, str(y)) for y in resolved.test_years(first, last)]
            else:
                units += [Unit(rep, regime, f"cv{r + 1}-{f + 1}")
                          for r in range(settings.cv_repeats) for f in range(settings.cv_folds)]
    return units


def _agnostic_split(prep: Prepared, settings: EvalSettings, split: str):
    # stratify on every task label jointly so one split serves all tasks; folds are dealt over
    # patients so stays of one patient never straddle train and test
    code = np.zeros(len(prep.stays), dtype=np.int64)
    for task in sorted(prep.labels):
        code = code * 2 + prep.labels[task]
    _, patient = np.unique(prep.stays["patient_id"].to_numpy(), return_inverse=True)
    strata = np.full(patient.max() + 1, np.iinfo(np.int64).max)
    np.minimum.at(strata, patient, code)
    r, f = (int(x) - 1 for x in split[2:].split("-"))
    for rr, ff, train, test in stratified_repeats(strata, settings.cv_repeats, settings.cv_folds,
                                                  cell_seed(settings.seed, "agnostic")):
        if (rr, ff) == (r, f):
            return np.flatnonzero(np.isin(patient, train)), np.flatnonzero(np.isin(patient, test))
    raise ValueError(f"no split {split}")


def _split(prep: Prepared, settings: EvalSettings, unit: Unit):
    if unit.regime.temporal:
        return split_regime(prep.years, unit.regime, int(unit.split))
    return _agnostic_split(prep, settings, unit.split)


def eval_subgroups(stays: pd.DataFrame, y, scores, attribute: str, floor: int = 30, n_boot: int = 200,
                   seed: int = 0) -> list[tuple[str, int, float | None, float | None, str]]:
    """(value, count, auroc, stderr, flag) per attribute value; small or one-class groups are flagged."""
    values = stays[attribute].astype(str).to_numpy()
    y = np.asarray(y)
    out = []
    for v in sorted(set(values.tolist())):
        m = values == v
        n = int(m.sum())
        yy, ss = y[m], np.asarray(scores)[m]
        if n < floor or len(np.unique(yy)) < 2:
            out.append((v, n, None, None, UNSTABLE))
            continue
        out.append((v, n, auroc(yy, ss), auroc_stderr(yy, ss, n_boot, cell_seed(seed, attribute, v)), ""))
    return out


def run_unit(prep: Prepared, settings: EvalSettings, unit: Unit, keep_artifacts: bool = False) -> UnitOutput:
    rep_name, regime = unit.representation, unit.regime.kind

    def skip_rows(reason, n_train=0, n_test=0):
        return [Row(t, rep_name, m, regime, unit.split, None, None, n_train, n_test, flag=f"skipped:{reason}")
                for t in settings.tasks for m in settings.models]

    try:
        train, test = _split(prep, settings, unit)
    except EmptySplitError as e:
        log.warning("%s/%s/%s: %s", rep_name, regime, unit.split, e)
        return UnitOutput(skip_rows(f"empty_{e.side}"))

    with threadpool_limits(1):
        rep = Representation(rep_name, prep.items, prep.agg_map, prep.ontology, settings.pca_k,
                             prep.censor_hours, pca_seed=cell_seed(settings.seed, "pca", *unit.key))
        rep.fit(prep.raw.take(train))
        rows_idx = np.concatenate([train, test])
        series = rep.transform(prep.raw.take(rows_idx))
        ex = make_examples(series, prep.demo[rows_idx], prep.demo_names, np.zeros(len(rows_idx)))
        del series
        X_train, X_test = ex.X[:len(train)], ex.X[len(train):]
        rep_text = rep.artifacts_text() if keep_artifacts else ""
        out = UnitOutput([])
        cache: dict = {}  # label-free, shared by every task on these rows
        for task in settings.tasks:
            y_train, y_test = prep.labels[task][train], prep.labels[task][test]
            for family in settings.models:
                key = (task, rep_name, family, regime, unit.split)
                try:
                    result = random_search(X_train, y_train, settings.search, family, ex.columns,
                                           seed=cell_seed(settings.seed, "search", *key), cache=cache)
                except (StratificationError, DegenerateLabelError) as e:
                    log.warning("%s: training skipped (%s)", "/".join(key), e)
                    out.rows.append(Row(*key, None, None, len(train), len(test), flag="skipped:train_labels"))
                    continue
                if keep_artifacts:
                    out.artifacts[(task, family)] = rep_text + result.model.to_text()
                scores = result.model.predict_proba(X_test)
                try:
                    a = auroc(y_test, scores)
                    se = auroc_stderr(y_test, scores, settings.n_boot, cell_seed(settings.seed, "boot", *key))
                    flag = CV_FLAG if not unit.regime.temporal else ""
                except UndefinedMetricError:
                    a = se = None
                    flag = "skipped:test_labels"
                out.rows.append(Row(*key, a, se, len(train), len(test), flag=flag))
                if not unit.regime.temporal:
                    continue
                test_stays = prep.stays.iloc[test]
                for attr in settings.subgroup_attributes:
                    for v, n, ga, gse, gflag in eval_subgroups(
                            test_stays, y_test, scores, attr, settings.subgroup_floor, settings.n_boot,
                            cell_seed(settings.seed, "boot", *key)):
                        out.rows.append(Row(*key, ga, gse, len(train), n, attr, v, gflag))
    return out


def _guarded_unit(prep, settings, unit, keep_artifacts) -> UnitOutput:
    """run_unit, with unexpected failures turned into error rows so the grid carries on."""
    try:
        return run_unit(prep, settings, unit, keep_artifacts)
    except Exception as e:  # noqa: BLE001 - recorded per cell, reported through the exit status
        log.error("%s failed: %s: %s", "/".join(unit.key), type(e).__name__, e)
        return UnitOutput([Row(t, unit.representation, m, unit.regime.kind, unit.split, None, None, 0, 0,
                               flag=f"error:{type(e).__name__}")
                           for t in settings.tasks for m in settings.models])


def run_grid(prep: Prepared, settings: EvalSettings, jobs: int = 1, keep_artifacts: bool = False,
             progress=None) -> tuple[list[Row], dict]:
    """Evaluate every unit; rows come back sorted by cell key regardless of ``jobs``."""
    settings.validate()
    units = plan_units(prep, settings)
    if jobs == 1:
        outputs = []
        for i, u in enumerate(units):
            outputs.append(_guarded_unit(prep, settings, u, keep_artifacts))
            if progress:
                progress(i + 1, len(units), u)
    else:
        from joblib import Parallel, delayed

        outputs = Parallel(n_jobs=jobs, backend="loky")(
            delayed(_guarded_unit)(prep, settings, u, keep_artifacts) for u in units)
    rows = sorted((r for o in outputs for r in o.rows), key=Row.sort_key)
    artifacts = {}
    for u, o in zip(units, outputs):
        for (task, family), text in o.artifacts.items():
            artifacts[(task, u.representation, family, u.regime.kind, u.split)] = text
    return rows, artifacts


# ---------------------------------------------------------------- reports


@dataclass
class YearResult:
    test_year: int | str
    auroc: float
    stderr: float
    n_test: int
    n_train: int


@dataclass
class EvalReport:
    task: str
    representation: str
    model: str
    regime: str
    years: list[YearResult]
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (split, reason)
    subgroups: list[Row] = field(default_factory=list)

    @property
    def aurocs(self) -> np.ndarray:
        return np.array([y.auroc for y in self.years])

    @property
    def average_auroc(self) -> tuple[float, float]:
        """Mean and (population) std over test years or CV evaluations."""
        a = self.aurocs
        if len(a) == 0:
            return math.nan, math.nan
        return float(a.mean()), float(a.std())

    @property
    def max_drop(self) -> float | None:
        """AUROC of the first test year minus the minimum over later years (temporal only)."""
        if self.regime == "year_agnostic" or len(self.years) < 2:
            return None
        a = self.aurocs
        return float(a[0] - a[1:].min())

    @property
    def worst_year(self):
        if not self.years:
            return None
        return self.years[int(np.argmin(self.aurocs))].test_year


def _as_year(split: str):
    return int(split) if split.isdigit() else split


def build_reports(rows: list[Row]) -> list[EvalReport]:
    groups: dict[tuple, EvalReport] = {}
    for r in sorted(rows, key=Row.sort_key):
        key = (r.task, r.representation, r.model, r.regime)
        rep = groups.setdefault(key, EvalReport(*key, []))
        if r.subgroup:
            rep.subgroups.append(r)
        elif r.flag.startswith(("skipped", "error")):
            rep.skipped.append((r.test_year, r.flag))
        else:
            rep.years.append(YearResult(_as_year(r.test_year), r.auroc, r.stderr, r.n_test, r.n_train))
    for rep in groups.values():
        rep.years.sort(key=lambda y: (isinstance(y.test_year, str), y.test_year))
    return [groups[k] for k in sorted(groups)]


def eval_temporal(prep: Prepared, task: str, representation: str, model: str, regime: RegimeSpec,
                  settings: EvalSettings | None = None) -> EvalReport:
    if not regime.temporal:
        raise ConfigError("eval_temporal needs a temporal regime")
    settings = _narrow(settings, task, representation, model, regime)
    rows, _ = run_grid(prep, settings)
    return build_reports(rows)[0]


def eval_year_agnostic(prep: Prepared, task: str, representation: str, model: str,
                       settings: EvalSettings | None = None) -> EvalReport:
    settings = _narrow(settings, task, representation, model, RegimeSpec("year_agnostic"))
    rows, _ = run_grid(prep, settings)
    return build_reports(rows)[0]


def _narrow(settings, task, representation, model, regime) -> EvalSettings:
    base = settings or EvalSettings()
    return EvalSettings(
        tasks=[task], representations=[representation], models=[model], regimes=[regime],
        search=base.search, n_boot=base.n_boot, subgroup_attributes=base.subgroup_attributes,
        subgroup_floor=base.subgroup_floor, pca_k=base.pca_k, cv_repeats=base.cv_repeats,
        cv_folds=base.cv_folds, seed=base.seed,
    )


# ---------------------------------------------------------------- CSV output


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def metrics_csv(rows: list[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in sorted(rows, key=Row.sort_key):
        w.writerow([_fmt(getattr(r, c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def summary_rows(reports: list[EvalReport]) -> list[dict]:
    out = []
    for rep in reports:
        mean, std = rep.average_auroc
        out.append({
            "task": rep.task, "representation": rep.representation, "model": rep.model, "regime": rep.regime,
            "n_years": len(rep.years),
            "average_auroc_mean": None if math.isnan(mean) else mean,
            "average_auroc_std": None if math.isnan(std) else std,
            "max_drop": rep.max_drop,
            "first_year": rep.years[0].test_year if rep.years and rep.regime != "year_agnostic" else None,
            "worst_year": rep.worst_year if rep.regime != "year_agnostic" else None,
        })
    return out


def summary_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in summary_rows(reports):
        w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def read_metrics(path) -> list[Row]:
    """Parse metrics.csv; malformed rows raise ValueError naming the line."""
    from ..errors import SchemaError

    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRIC_COLUMNS:
            raise SchemaError(path, 1, None, f"expected header {','.join(METRIC_COLUMNS)}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(METRIC_COLUMNS):
                raise SchemaError(path, lineno, None, f"expected {len(METRIC_COLUMNS)} fields, got {len(rec)}")
            d = dict(zip(METRIC_COLUMNS, rec))
            try:
                a = float(d["auroc"]) if d["auroc"] else None
                se = float(d["stderr"]) if d["stderr"] else None
                n_train, n_test = int(d["n_train"]), int(d["n_test"])
            except ValueError as e:
                raise SchemaError(path, lineno, None, str(e)) from None
            if a is not None and not 0.0 <= a <= 1.0:
                raise SchemaError(path, lineno, "auroc", f"value {a} outside [0, 1]")
            if se is not None and se < 0:
                raise SchemaError(path, lineno, "stderr", f"negative value {se}")
            if not d["test_year"]:
                raise SchemaError(path, lineno, "test_year", "empty")
            rows.append(Row(d["task"], d["representation"], d["model"], d["regime"], d["test_year"], a, se,
                            n_train, n_test, d["subgroup"], d["subgroup_value"], d["flag"]))
    return rows
