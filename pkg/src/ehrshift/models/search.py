"""Random hyperparameter search under stratified k-fold cross-validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ConfigError, StratificationError
from ..evaluate.metrics import auroc
from .forest import RfConfig, RfModel, bin_features, train_rf
from .logistic import LrConfig, LrModel, train_lr

FAMILIES = ("lr", "rf")


@dataclass(frozen=True)
class Dist:
    """A parameter distribution: fixed, choice, log_uniform, uniform or int_uniform."""

    kind: str
    args: tuple

    def sample(self, rng: np.random.Generator):
        if self.kind == "fixed":
            return self.args[0]
        if self.kind == "choice":
            return self.args[int(rng.integers(len(self.args)))]
        lo, hi = self.args
        if self.kind == "log_uniform":
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        if self.kind == "uniform":
            return float(rng.uniform(lo, hi))
        if self.kind == "int_uniform":
            return int(rng.integers(lo, hi + 1))
        raise ConfigError(f"unknown distribution {self.kind!r}")

    @classmethod
    def parse(cls, name: str, spec) -> "Dist":
        """YAML form: a scalar (fixed) or a one-key mapping such as ``{log_uniform: [1e-4, 100]}``."""
        if not isinstance(spec, dict):
            return cls("fixed", (spec,))
        if len(spec) != 1:
            raise ConfigError(f"search parameter {name!r}: expected one distribution key, got {sorted(spec)}")
        (kind, args), = spec.items()
        if kind == "choice":
            if not isinstance(args, list) or not args:
                raise ConfigError(f"search parameter {name!r}: choice needs a non-empty list")
            return cls(kind, tuple(args))
        if kind in ("log_uniform", "uniform", "int_uniform"):
            if not isinstance(args, list) or len(args) != 2 or not args[0] <= args[1]:
                raise ConfigError(f"search parameter {name!r}: {kind} needs [low, high] with low <= high")
            if kind == "log_uniform" and not args[0] > 0:
                raise ConfigError(f"search parameter {name!r}: log_uniform bounds must be > 0")
            return cls(kind, (args[0], args[1]))
        raise ConfigError(f"search parameter {name!r}: unknown distribution {kind!r}")

    def to_yaml(self):
        if self.kind == "fixed":
            return self.args[0]
        return {self.kind: list(self.args)}


DEFAULT_SPACES: dict[str, dict[str, Dist]] = {
    "lr": {
        "C": Dist("log_uniform", (1e-4, 1e2)),
        "penalty": Dist("choice", ("l1", "l2")),
    },
    "rf": {
        "n_estimators": Dist("int_uniform", (50, 300)),
        "max_depth": Dist("int_uniform", (3, 20)),
        "min_samples_split": Dist("int_uniform", (2, 20)),
        "min_samples_leaf": Dist("int_uniform", (1, 10)),
    },
}

PARAMETERS = {
    "lr": {"C", "penalty", "max_iter", "tol"},
    "rf": {"n_estimators", "max_depth", "min_samples_split", "min_samples_leaf", "max_features", "bootstrap",
           "max_bins"},
}


@dataclass
class SearchSpec:
    spaces: dict[str, dict[str, Dist]] = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_SPACES.items()})
    n_draws: int = 20
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_draws < 1:
            raise ConfigError("n_draws must be >= 1")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        for family, space in self.spaces.items():
            if family not in FAMILIES:
                raise ConfigError(f"unknown model family {family!r}")
            unknown = set(space) - PARAMETERS[family]
            if unknown:
                raise ConfigError(f"unknown {family} search parameters: {sorted(unknown)}")

    def draw(self, family: str, seed: int | None = None) -> list[dict[str, Any]]:
        """The n_draws parameter sets, in draw order (parameters sampled in sorted-name order)."""
        rng = np.random.default_rng([self.seed if seed is None else seed, FAMILIES.index(family)])
        space = self.spaces[family]
        return [{name: space[name].sample(rng) for name in sorted(space)} for _ in range(self.n_draws)]


def make_config(family: str, params: dict, seed: int = 0):
    if family == "lr":
        return LrConfig(**params)
    if family == "rf":
        return RfConfig(**params, seed=seed)
    raise ConfigError(f"unknown model family {family!r}")


def stratified_folds(y, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per example; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    folds = np.empty(len(y), dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        if len(members) < k:
            raise StratificationError(
                f"class {cls} has {len(members)} examples, fewer than the {k} folds requested")
        members = members[rng.permutation(len(members))]
        folds[members] = np.arange(len(members)) % k
    if len(np.unique(y)) > 2 or not np.isin(y, (0, 1)).all():
        raise StratificationError("labels must be 0/1")
    return folds


@dataclass
class SearchResult:
    family: str
    draws: list[dict[str, Any]]
    fold_scores: np.ndarray  # (n_draws, cv_folds) validation AUROC
    best_index: int
    model: LrModel | RfModel

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    @property
    def best_params(self) -> dict[str, Any]:
        return self.draws[self.best_index]


def fit_model(family: str, X, y, params: dict, columns=None, seed: int = 0, binned=None, gram=None):
    config = make_config(family, params, seed)
    if family == "lr":
        return train_lr(X, y, config, columns, gram=gram)
    return train_rf(X, y, config, columns, binned=binned)


def random_search(X: np.ndarray, y, spec: SearchSpec, family: str, columns=None, seed: int | None = None,
                  draws: list[dict] | None = None, cache: dict | None = None) -> SearchResult:
    """Pick the draw with the best mean validation AUROC (first one on ties) and refit on all rows.

    RF candidate thresholds are computed once from all training rows and shared
    by the folds, and LR fits share one Gram matrix X X^T. Both depend on feature
    values only, never on labels, so callers may pass the same ``cache`` to
    searches over other label sets on these rows.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}")
    y = np.asarray(y)
    seed = spec.seed if seed is None else seed
    draws = draws if draws is not None else spec.draw(family, seed)
    folds = stratified_folds(y, spec.cv_folds, seed)
    cache = {} if cache is None else cache

    def binned_for(params, rows=None):
        if family != "rf":
            return None
        key = ("bins", make_config(family, params).max_bins)
        if key not in cache:
            cache[key] = bin_features(X, key[1])
        return cache[key] if rows is None else cache[key].take(rows)

    smallest_fit = len(y) - int(np.bincount(folds).max())

    def gram_for(params, rows=None):
        # only L2 fits with at least twice as many columns as rows use it (see train_lr)
        if family != "lr" or params.get("penalty", "l2") != "l2" or X.shape[1] < 2 * smallest_fit:
            return None
        if "gram" not in cache:
            cache["gram"] = X @ X.T
        return cache["gram"] if rows is None else cache["gram"][np.ix_(rows, rows)]

    scores = np.zeros((len(draws), spec.cv_folds))
    for i, params in enumerate(draws):
        for f in range(spec.cv_folds):
            tr, va = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
            X_tr = X[tr] if family == "lr" else None  # RF trains from the shared bin codes
            model = fit_model(family, X_tr, y[tr], params, columns, seed, binned_for(params, tr),
                              gram_for(params, tr))
            scores[i, f] = auroc(y[va], model.predict_proba(X[va]))
    mean = scores.mean(axis=1)
    best = int(np.flatnonzero(mean == mean.max())[0])
    model = fit_model(family, X, y, draws[best], columns, seed, binned_for(draws[best]),
                      gram_for(draws[best]))
    return SearchResult(family, draws, scores, best, model)
