"""Training regimes: which calendar years train a model tested on a given year."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, EmptySplitError

REGIMES = ("year_agnostic", "fixed_window", "prior_year", "full_history")


@dataclass(frozen=True)
class RegimeSpec:
    kind: str
    first_test_year: int | None = None  # default: first data year + 2
    window: tuple[int, int] | None = None  # fixed_window training years (default: the two first years)

    def __post_init__(self):
        if self.kind not in REGIMES:
            raise ConfigError(f"unknown regime {self.kind!r}; expected one of {REGIMES}")
        if self.window is not None:
            if self.kind != "fixed_window":
                raise ConfigError("window applies to fixed_window only")
            if len(self.window) != 2 or self.window[0] > self.window[1]:
                raise ConfigError(f"window must be (first_year, last_year), got {self.window}")
            object.__setattr__(self, "window", (int(self.window[0]), int(self.window[1])))

    @property
    def temporal(self) -> bool:
        return self.kind != "year_agnostic"

    def resolve(self, first_year: int, last_year: int) -> "RegimeSpec":
        """Fill defaults from the data's year range and check consistency."""
        first_test = self.first_test_year if self.first_test_year is not None else first_year + 2
        window = self.window
        if self.kind == "fixed_window":
            window = window or (first_year, first_year + 1)
            if window[1] >= first_test:
                raise ConfigError(f"fixed window {window} must end before the first test year {first_test}")
        return RegimeSpec(self.kind, first_test, window)

    def test_years(self, first_year: int, last_year: int) -> list[int]:
        if not self.temporal:
            return []
        r = self.resolve(first_year, last_year)
        return list(range(r.first_test_year, last_year + 1))

    @property
    def label(self) -> str:
        return self.kind


def split_regime(years, regime: RegimeSpec, test_year: int) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (train, test) for a temporal regime; ``years`` is admit_year per stay."""
    years = np.asarray(years)
    if not regime.temporal:
        raise ConfigError("year_agnostic splits come from cross-validation, not split_regime")
    if regime.kind == "fixed_window":
        lo, hi = regime.window if regime.window else (int(years.min()), int(years.min()) + 1)
        train = (years >= lo) & (years <= hi)
    elif regime.kind == "prior_year":
        train = years == test_year - 1
    else:
        train = years < test_year
    test = years == test_year
    train &= ~test
    if not test.any():
        raise EmptySplitError(test_year, "test")
    if not train.any():
        raise EmptySplitError(test_year, "train")
    return np.flatnonzero(train), np.flatnonzero(test)


def stratified_repeats(strata, n_repeats: int = 5, n_folds: int = 2, seed: int = 0):
    """Yield (repeat, fold, train, test) for repeated stratified k-fold over all rows."""
    strata = np.asarray(strata)
    for r in range(n_repeats):
        rng = np.random.default_rng([seed, r])
        fold = np.empty(len(strata), dtype=np.int64)
        for s in np.unique(strata):
            members = np.flatnonzero(strata == s)
            members = members[rng.permutation(len(members))]
            # random starting fold per stratum so odd remainders do not all land in fold 0
            fold[members] = (np.arange(len(members)) + int(rng.integers(n_folds))) % n_folds
        for f in range(n_folds):
            yield r, f, np.flatnonzero(fold != f), np.flatnonzero(fold == f)
