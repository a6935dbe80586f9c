import dataclasses
import io

import numpy as np
import pandas as pd
import pytest

from ehrshift.errors import SchemaError
from ehrshift.evaluate.metrics import auroc
from ehrshift.evaluate.regimes import RegimeSpec
from ehrshift.evaluate.runner import (
    CV_FLAG,
    UNSTABLE,
    EvalSettings,
    build_reports,
    eval_subgroups,
    eval_year_agnostic,
    metrics_csv,
    prepare,
    read_metrics,
    run_grid,
    summary_csv,
)
from ehrshift.models.search import DEFAULT_SPACES, Dist, SearchSpec
from ehrshift.represent.tensors import HourlyTensor


def fast_search(n_draws=1):
    spaces = {k: dict(v) for k, v in DEFAULT_SPACES.items()}
    spaces["rf"]["n_estimators"] = Dist("int_uniform", (5, 10))
    spaces["rf"]["max_depth"] = Dist("int_uniform", (3, 5))
    return SearchSpec(spaces, n_draws=n_draws, cv_folds=2)


def settings(**kw):
    base = dict(tasks=["long_los"], representations=["aggregate"], models=["lr", "rf"],
                regimes=[RegimeSpec("full_history")], search=fast_search(), n_boot=20,
                subgroup_attributes=(), cv_repeats=2)
    base.update(kw)
    return EvalSettings(**base)


@pytest.fixture(scope="module")
def prep(small_data):
    return prepare(small_data)


def subset(prep, mask):
    idx = np.flatnonzero(mask)
    return dataclasses.replace(prep, stays=prep.stays.iloc[idx].reset_index(drop=True), raw=prep.raw.take(idx),
                               demo=prep.demo[idx], labels={k: v[idx] for k, v in prep.labels.items()})


@pytest.fixture(scope="module")
def grid(prep):
    s = settings(regimes=[RegimeSpec("full_history"), RegimeSpec("prior_year")], subgroup_attributes=("gender",))
    rows, _ = run_grid(prep, s)
    return s, rows


def test_every_cell_has_a_row_per_test_year(prep, grid):
    s, rows = grid
    main = [r for r in rows if not r.subgroup]
    keys = {(r.model, r.regime, r.test_year) for r in main}
    assert len(keys) == len(main)
    for model in s.models:
        for regime in ("full_history", "prior_year"):
            assert {y for m, g, y in keys if (m, g) == (model, regime)} == {str(y) for y in range(2003, 2007)}
    for r in main:
        assert r.flag == "" and 0 <= r.auroc <= 1 and r.stderr >= 0
        assert r.n_test == int((prep.years == int(r.test_year)).sum())


def test_max_drop_recomputed_from_csv(tmp_path, grid):
    _, rows = grid
    path = tmp_path / "metrics.csv"
    path.write_text(metrics_csv(rows))
    back = read_metrics(path)
    assert metrics_csv(back) == metrics_csv(rows)
    table = pd.read_csv(path, keep_default_na=False, dtype=str)
    table = table[table["subgroup"] == ""]
    summary = pd.read_csv(io.StringIO(summary_csv(build_reports(back))), float_precision="round_trip")
    for _, srow in summary.iterrows():
        cell = table[(table["model"] == srow["model"]) & (table["regime"] == srow["regime"])]
        a = cell.sort_values("test_year")["auroc"].map(float).to_numpy()
        assert srow["max_drop"] == a[0] - a[1:].min()
        assert srow["n_years"] == len(a)
        assert np.isclose(srow["average_auroc_mean"], a.mean())


def test_subgroup_rows_partition_test_year(grid, prep):
    _, rows = grid
    sub = [r for r in rows if r.subgroup == "gender"]
    for (model, regime, year) in {(r.model, r.regime, r.test_year) for r in sub}:
        parts = [r for r in sub if (r.model, r.regime, r.test_year) == (model, regime, year)]
        assert sum(r.n_test for r in parts) == int((prep.years == int(year)).sum())
        assert sorted(r.subgroup_value for r in parts) == sorted(set(prep.stays.gender.astype(str)))


def test_read_metrics_errors(tmp_path, grid):
    _, rows = grid
    good = metrics_csv(rows).splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([good[0], good[1].replace(",long_los,", ",long_los,", 1)]) + "\n")
    read_metrics(bad)
    fields = good[1].split(",")
    fields[5] = "1.5"
    bad.write_text("\n".join([good[0], ",".join(fields)]) + "\n")
    with pytest.raises(SchemaError, match="line 2"):
        read_metrics(bad)
    bad.write_text("task,auroc\n")
    with pytest.raises(SchemaError, match="line 1"):
        read_metrics(bad)


def test_subgroup_flags():
    stays = pd.DataFrame({"gender": ["F"] * 50 + ["M"] * 50 + ["X"] * 5})
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(50), rng.integers(0, 2, 50), [0, 1, 0, 1, 1]]
    s = rng.random(105)
    out = {v: rest for v, *rest in eval_subgroups(stays, y, s, "gender", floor=30, n_boot=50)}
    assert out["F"] == [50, None, None, UNSTABLE]  # one class only
    assert out["X"] == [5, None, None, UNSTABLE]  # below the floor
    n, a, se, flag = out["M"]
    assert n == 50 and flag == "" and a == auroc(y[50:100], s[50:100]) and se > 0


def test_identical_groups_overlap_within_noise():
    rng = np.random.default_rng(1)
    overlaps = 0
    for _ in range(10):
        n = 400
        y = rng.integers(0, 2, n)
        s = y * 0.8 + rng.normal(size=n)
        stays = pd.DataFrame({"g": np.where(rng.random(n) < 0.5, "a", "b")})
        (_, _, a1, se1, _), (_, _, a2, se2, _) = eval_subgroups(stays, y, s, "g", n_boot=100)
        overlaps += abs(a1 - a2) <= 2 * se1 + 2 * se2
    assert overlaps >= 8


def test_test_labels_never_reach_training_artifacts(prep):
    s = settings(regimes=[RegimeSpec("prior_year")], representations=["aggregate", "pca"])
    _, art = run_grid(prep, s, keep_artifacts=True)
    rng = np.random.default_rng(4)
    for year in (2004, 2006):
        labels = prep.labels["long_los"].copy()
        in_year = np.flatnonzero(prep.years == year)
        labels[in_year] = labels[rng.permutation(in_year)]
        moved = dataclasses.replace(prep, labels={**prep.labels, "long_los": labels})
        narrowed = settings(regimes=[RegimeSpec("prior_year")], representations=["aggregate", "pca"])
        rows2, art2 = run_grid(moved, narrowed, keep_artifacts=True)
        for key, text in art.items():
            if key[4] == str(year):
                assert art2[key] == text, key
    assert all(text for text in art.values())


def test_year_agnostic_rows_and_no_drop(prep):
    s = settings(regimes=[RegimeSpec("year_agnostic")], models=["lr"])
    rows, _ = run_grid(prep, s)
    assert [r.test_year for r in rows] == ["cv1-1", "cv1-2", "cv2-1", "cv2-2"]
    assert all(r.flag == CV_FLAG for r in rows)
    rep = build_reports(rows)[0]
    assert rep.max_drop is None and len(rep.years) == 4
    for r in range(2):
        assert rows[2 * r].n_test + rows[2 * r + 1].n_test == len(prep.stays)
        assert abs(rows[2 * r].n_test - rows[2 * r + 1].n_test) <= 4


def test_flipped_duplicates_give_chance_auroc(prep):
    # each copy keeps its patient_id, so the pair shares a fold and training data is label-symmetric
    n = len(prep.stays)
    both = np.r_[np.arange(n), np.arange(n)]
    stays = prep.stays.iloc[both].reset_index(drop=True)
    stays["stay_id"] = np.arange(2 * n) + 1
    raw = HourlyTensor(stays["stay_id"].to_numpy(), prep.raw.columns, prep.raw.values[both])
    labels = {k: np.r_[v, 1 - v].astype(np.int8) for k, v in prep.labels.items()}
    dup = dataclasses.replace(prep, stays=stays, raw=raw, demo=prep.demo[both], labels=labels)
    rep = eval_year_agnostic(dup, "long_los", "aggregate", "lr", settings())
    assert abs(rep.average_auroc[0] - 0.5) <= 0.06, rep.aurocs


def test_empty_train_year_is_skipped(prep):
    thin = subset(prep, prep.years != 2004)
    rows, _ = run_grid(thin, settings(regimes=[RegimeSpec("prior_year")], models=["lr"]))
    by_year = {r.test_year: r for r in rows}
    assert by_year["2005"].flag == "skipped:empty_train" and by_year["2005"].auroc is None
    assert by_year["2004"].flag == "skipped:empty_test"
    assert by_year["2006"].flag == "" and by_year["2006"].auroc is not None
    rep = build_reports(rows)[0]
    assert ("2005", "skipped:empty_train") in rep.skipped


def test_deterministic_and_job_count_free(prep):
    s = settings(representations=["aggregate", "demographics"])
    a, _ = run_grid(prep, s)
    b, _ = run_grid(prep, s, jobs=2)
    assert metrics_csv(a) == metrics_csv(b)
    assert summary_csv(build_reports(a)) == summary_csv(build_reports(b))
