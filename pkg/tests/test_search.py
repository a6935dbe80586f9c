import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehrshift.errors import ConfigError, StratificationError
from ehrshift.evaluate.metrics import auroc
from ehrshift.models.forest import bin_features
from ehrshift.models.search import DEFAULT_SPACES, Dist, SearchSpec, fit_model, random_search, stratified_folds


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(120, 5))
    y = (X[:, 0] + 0.8 * X[:, 1] + rng.normal(scale=1.0, size=120) > 0.3).astype(int)
    return X, y


def test_single_draw_returns_that_config(data):
    X, y = data
    spec = SearchSpec(n_draws=1, cv_folds=3, seed=4)
    res = random_search(X, y, spec, "lr")
    assert res.best_index == 0 and res.best_params == spec.draw("lr")[0]
    ref = fit_model("lr", X, y, res.best_params)
    assert res.model.to_text() == ref.to_text()


def test_absurd_c_is_dominated():
    rng = np.random.default_rng(2)
    x = np.r_[rng.uniform(-2, -0.5, 40), rng.uniform(0.5, 2, 40)]
    X = np.c_[x, rng.normal(size=80)]
    y = (x > 0).astype(int)
    spaces = {"lr": {"C": Dist("choice", (1e-8, 1e-8, 1.0, 1e-8)), "penalty": Dist("fixed", ("l1",))}}
    spec = SearchSpec(spaces, n_draws=6, cv_folds=2, seed=1)
    draws = spec.draw("lr")
    assert any(d["C"] == 1.0 for d in draws) and any(d["C"] == 1e-8 for d in draws)
    res = random_search(X, y, spec, "lr")
    assert res.best_params["C"] == 1.0
    assert res.mean_scores[[d["C"] == 1e-8 for d in draws]].max() == 0.5


def oracle_folds(y, k, seed):
    rng = np.random.default_rng(seed)
    fold = {}
    for cls in (0, 1):
        members = [i for i in range(len(y)) if y[i] == cls]
        members = [members[j] for j in rng.permutation(len(members))]
        for pos, i in enumerate(members):
            fold[i] = pos % k
    return np.array([fold[i] for i in range(len(y))])


@pytest.mark.parametrize("family", ["lr", "rf"])
def test_three_draws_two_folds_exhaustive(data, family):
    X, y = data
    spaces = {k: dict(v) for k, v in DEFAULT_SPACES.items()}
    spaces["rf"]["n_estimators"] = Dist("int_uniform", (5, 15))
    spec = SearchSpec(spaces, n_draws=3, cv_folds=2, seed=8)
    res = random_search(X, y, spec, family)
    folds = oracle_folds(y, 2, 8)
    table = np.zeros((3, 2))
    for i, params in enumerate(spec.draw(family)):
        for f in range(2):
            tr, va = folds != f, folds == f
            # RF folds share thresholds computed from all training rows (label-free)
            binned = bin_features(X, 64).take(np.flatnonzero(tr)) if family == "rf" else None
            m = fit_model(family, X[tr], y[tr], params, seed=8, binned=binned)
            table[i, f] = auroc(y[va], m.predict_proba(X[va]))
    np.testing.assert_array_equal(res.fold_scores, table)
    mean = table.mean(axis=1)
    assert res.best_index == min(i for i in range(3) if mean[i] == mean.max())
    assert res.best_params in spec.draw(family)


def test_search_deterministic(data):
    X, y = data
    spec = SearchSpec(n_draws=3, cv_folds=2, seed=5)
    a, b = random_search(X, y, spec, "lr"), random_search(X, y, spec, "lr")
    assert a.model.to_text() == b.model.to_text()
    np.testing.assert_array_equal(a.fold_scores, b.fold_scores)


@given(st.lists(st.integers(0, 1), min_size=10, max_size=80), st.integers(2, 5), st.integers(0, 1000))
@settings(max_examples=80, deadline=None)
def test_folds_partition_and_stratify(y, k, seed):
    y = np.array(y)
    if min((y == 0).sum(), (y == 1).sum()) < k:
        with pytest.raises(StratificationError):
            stratified_folds(y, k, seed)
        return
    folds = stratified_folds(y, k, seed)
    assert set(folds.tolist()) == set(range(k))
    for f in range(k):
        part = y[folds == f]
        assert 0 < part.sum() < len(part)
    counts = np.bincount(folds[y == 1], minlength=k)
    assert counts.max() - counts.min() <= 1


def test_draws_follow_declared_distributions():
    spec = SearchSpec(n_draws=200, seed=3)
    for d in spec.draw("lr"):
        assert 1e-4 <= d["C"] <= 1e2 and d["penalty"] in ("l1", "l2")
    for d in spec.draw("rf"):
        assert 50 <= d["n_estimators"] <= 300 and 3 <= d["max_depth"] <= 20
        assert 2 <= d["min_samples_split"] <= 20 and 1 <= d["min_samples_leaf"] <= 10
    assert spec.draw("rf") == SearchSpec(n_draws=200, seed=3).draw("rf")


@pytest.mark.parametrize("spec", [{"log_uniform": [0, 1]}, {"choice": []}, {"gamma": [1, 2]},
                                  {"uniform": [3, 1]}, {"a": [1], "b": [2]}])
def test_bad_distributions(spec):
    with pytest.raises(ConfigError):
        Dist.parse("C", spec)


def test_unknown_parameter_rejected():
    with pytest.raises(ConfigError):
        SearchSpec({"lr": {"gamma": Dist("fixed", (1,))}})
