"""YAML run configuration. Unknown keys anywhere are errors, not warnings.

Example::

    seed: 0
    output_dir: out
    data:
      scenario: {n_stays_per_year: 340, years: [2001, 2012], switch_year: 2008}
      # or: dir: path/to/csv/files
    cohort: {min_stay_hours: 36, censor_hours: 24}
    tasks: [mortality, long_los]
    representations: [raw, pca, concept_span, aggregate]
    models: [lr, rf]
    regimes: [year_agnostic, {kind: fixed_window, window: [2001, 2002]}, prior_year, full_history]
    search:
      n_draws: 20
      cv_folds: 5
      lr: {C: {log_uniform: [1.0e-4, 100]}, penalty: {choice: [l1, l2]}}
    evaluation: {n_boot: 200, subgroup_floor: 30}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .cohort import CohortCriteria
from .datagen import DriftScenario
from .errors import ConfigError
from .evaluate.regimes import RegimeSpec
from .evaluate.runner import EvalSettings
from .models.search import DEFAULT_SPACES, PARAMETERS, Dist, SearchSpec

TOP_KEYS = {"seed", "output_dir", "data", "cohort", "tasks", "representations", "models", "regimes",
            "search", "evaluation"}
EVAL_KEYS = {"n_boot", "subgroup_attributes", "subgroup_floor", "pca_k", "cv_repeats", "cv_folds",
             "first_test_year"}


@dataclass
class RunConfig:
    scenario: DriftScenario | None = field(default_factory=DriftScenario)
    data_dir: Path | None = None
    cohort: CohortCriteria = field(default_factory=CohortCriteria)
    settings: EvalSettings = field(default_factory=EvalSettings)
    output_dir: Path | None = None
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        """Master seed override: drives the generator (if any) and every evaluation substream."""
        scenario = dataclasses.replace(self.scenario, seed=seed) if self.scenario else None
        settings = dataclasses.replace(self.settings, seed=seed,
                                       search=dataclasses.replace(self.settings.search, seed=seed))
        return dataclasses.replace(self, scenario=scenario, settings=settings, seed=seed)


def _check_keys(section: str, d, allowed) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {unknown}; allowed {sorted(allowed)}")
    return d


def _build(section: str, cls, d):
    d = _check_keys(section, d, {f.name for f in dataclasses.fields(cls)})
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from None


def _list(section: str, value, default):
    if value is None:
        return list(default)
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{section}: expected a non-empty list")
    return value


def _regime(entry) -> RegimeSpec:
    if isinstance(entry, str):
        return RegimeSpec(entry)
    d = _check_keys("regimes entry", entry, {"kind", "first_test_year", "window"})
    if "kind" not in d:
        raise ConfigError("regimes entry: 'kind' is required")
    window = tuple(d["window"]) if d.get("window") is not None else None
    return RegimeSpec(d["kind"], d.get("first_test_year"), window)


def _search(d, seed: int) -> SearchSpec:
    d = _check_keys("search", d, {"n_draws", "cv_folds", "lr", "rf"})
    spaces = {k: dict(v) for k, v in DEFAULT_SPACES.items()}
    for family in ("lr", "rf"):
        if family in d:
            fam = _check_keys(f"search.{family}", d[family], PARAMETERS[family])
            spaces[family].update({name: Dist.parse(name, spec) for name, spec in fam.items()})
    return SearchSpec(spaces, int(d.get("n_draws", 20)), int(d.get("cv_folds", 5)), seed)


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    raw = _check_keys("config", raw or {}, TOP_KEYS)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    data = _check_keys("data", raw.get("data"), {"scenario", "dir"})
    if "scenario" in data and "dir" in data:
        raise ConfigError("data: give either 'scenario' or 'dir', not both")
    scenario, data_dir = None, None
    if "dir" in data:
        data_dir = Path(data["dir"])
        if base_dir is not None and not data_dir.is_absolute():
            data_dir = base_dir / data_dir
    else:
        sc = dict(_check_keys("data.scenario", data.get("scenario"),
                              {f.name for f in dataclasses.fields(DriftScenario)}))
        sc.setdefault("seed", seed)
        scenario = _build("data.scenario", DriftScenario, sc)
        scenario.validate()

    cohort = _build("cohort", CohortCriteria, raw.get("cohort"))
    cohort.validate()

    ev = dict(_check_keys("evaluation", raw.get("evaluation"), EVAL_KEYS))
    first_test = ev.pop("first_test_year", None)
    regimes = [_regime(r) for r in _list("regimes", raw.get("regimes"), ["full_history"])]
    if first_test is not None:
        regimes = [dataclasses.replace(r, first_test_year=r.first_test_year or first_test) for r in regimes]
    if "subgroup_attributes" in ev:
        ev["subgroup_attributes"] = tuple(ev["subgroup_attributes"] or ())
    settings = EvalSettings(
        tasks=_list("tasks", raw.get("tasks"), EvalSettings().tasks),
        representations=_list("representations", raw.get("representations"), EvalSettings().representations),
        models=_list("models", raw.get("models"), EvalSettings().models),
        regimes=regimes,
        search=_search(raw.get("search"), seed),
        seed=seed,
        **ev,
    )
    settings.validate()
    out = raw.get("output_dir")
    output_dir = Path(out) if out is not None else None
    if output_dir is not None and base_dir is not None and not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    return RunConfig(scenario, data_dir, cohort, settings, output_dir, seed)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = parse_config(raw or {}, base_dir=path.parent)
    if cfg.data_dir is not None and not cfg.data_dir.is_dir():
        raise ConfigError(f"data.dir {cfg.data_dir} does not exist")
    return cfg


def config_to_yaml(cfg: RunConfig) -> str:
    """Resolved configuration, written next to the outputs."""
    s = cfg.settings
    doc = {
        "seed": cfg.seed,
        "data": {"dir": str(cfg.data_dir)} if cfg.data_dir else {"scenario": cfg.scenario.to_dict()},
        "cohort": dataclasses.asdict(cfg.cohort),
        "tasks": list(s.tasks),
        "representations": list(s.representations),
        "models": list(s.models),
        "regimes": [{k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in dataclasses.asdict(r).items() if v is not None} for r in s.regimes],
        "search": {"n_draws": s.search.n_draws, "cv_folds": s.search.cv_folds,
                   **{fam: {n: d.to_yaml() for n, d in sorted(space.items())}
                      for fam, space in s.search.spaces.items()}},
        "evaluation": {"n_boot": s.n_boot, "subgroup_attributes": list(s.subgroup_attributes),
                       "subgroup_floor": s.subgroup_floor, "pca_k": s.pca_k, "cv_repeats": s.cv_repeats,
                       "cv_folds": s.cv_folds},
    }
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=None)
