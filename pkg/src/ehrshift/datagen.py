"""Synthetic ICU cohorts with a known risk process and scheduled temporal drift.

Each stay has a latent severity ~ N(0, 1). Every latent clinical group carries
an hourly series ``baseline + sd * (loading * severity + AR(1) noise)`` in
canonical units, observed through per-(group, hour) Bernoulli draws and
recorded by one of the group's era-valid items in that item's own unit.
At ``switch_year`` the whole item vocabulary is replaced, mimicking a
record-system migration.
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import optimize, special

from .errors import ConfigError
from .represent.maps import AggregateGroup, AggregationMap, Concept, MiniOntology, tokenize
from .schema import (
    AGG_MAP_COLUMNS,
    EVENT_COLUMNS,
    EVENT_DTYPES,
    ITEM_COLUMNS,
    ITEM_DTYPES,
    ONTOLOGY_COLUMNS,
    STAY_COLUMNS,
    STAY_DTYPES,
    Dataset,
    empty_frame,
)

log = logging.getLogger(__name__)

GENDERS = ("F", "M")
ETHNICITIES = ("WHITE", "BLACK", "HISPANIC", "ASIAN", "OTHER")
INSURANCES = ("Medicare", "Private", "Medicaid", "Government", "Self Pay")

PRE_ITEM_BASE = 100
POST_ITEM_BASE = 220000

# name, abbreviations, canonical unit, typical value, spread
CLINICAL_GROUPS = [
    ("heart rate", ("hr",), "bpm", 85.0, 15.0),
    ("respiratory rate", ("rr", "resp rate"), "insp/min", 18.0, 5.0),
    ("systolic blood pressure", ("sbp", "nbp systolic"), "mmHg", 120.0, 20.0),
    ("diastolic blood pressure", ("dbp", "nbp diastolic"), "mmHg", 65.0, 12.0),
    ("mean arterial blood pressure", ("map", "abp mean"), "mmHg", 80.0, 12.0),
    ("temperature", ("temp",), "degC", 37.0, 0.7),
    ("oxygen saturation", ("spo2", "o2 sat"), "%", 96.0, 3.0),
    ("glucose", ("bg",), "mg/dL", 130.0, 40.0),
    ("white blood cell count", ("wbc",), "K/uL", 11.0, 5.0),
    ("hemoglobin", ("hgb",), "g/dL", 10.5, 2.0),
    ("hematocrit", ("hct",), "%", 31.0, 5.0),
    ("platelet count", ("plt",), "K/uL", 220.0, 90.0),
    ("sodium", ("na",), "mEq/L", 139.0, 4.0),
    ("potassium", ("k",), "mEq/L", 4.1, 0.6),
    ("chloride", ("cl",), "mEq/L", 104.0, 5.0),
    ("bicarbonate", ("hco3",), "mEq/L", 24.0, 4.0),
    ("blood urea nitrogen", ("bun",), "mg/dL", 25.0, 15.0),
    ("creatinine", ("creat", "cr"), "mg/dL", 1.3, 1.0),
    ("calcium", ("ca",), "mg/dL", 8.4, 0.7),
    ("magnesium", ("mg",), "mg/dL", 2.0, 0.3),
    ("phosphate", ("phos",), "mg/dL", 3.6, 1.1),
    ("anion gap", ("ag",), "mEq/L", 13.0, 3.0),
    ("lactate", ("lact",), "mmol/L", 2.2, 1.5),
    ("arterial ph", ("ph",), "units", 7.38, 0.07),
    ("partial pressure of oxygen", ("po2", "pao2"), "mmHg", 130.0, 60.0),
    ("partial pressure of carbon dioxide", ("pco2", "paco2"), "mmHg", 41.0, 8.0),
    ("base excess", ("be",), "mEq/L", 0.0, 4.0),
    ("fraction inspired oxygen", ("fio2",), "%", 50.0, 15.0),
    ("albumin", ("alb",), "g/dL", 3.0, 0.6),
    ("total bilirubin", ("tbili",), "mg/dL", 1.5, 2.0),
    ("alanine aminotransferase", ("alt", "sgpt"), "IU/L", 60.0, 80.0),
    ("aspartate aminotransferase", ("ast", "sgot"), "IU/L", 80.0, 100.0),
    ("alkaline phosphatase", ("alk phos",), "IU/L", 100.0, 60.0),
    ("prothrombin time", ("pt",), "sec", 15.0, 4.0),
    ("partial thromboplastin time", ("ptt",), "sec", 35.0, 12.0),
    ("international normalized ratio", ("inr",), "ratio", 1.4, 0.5),
    ("fibrinogen", ("fib",), "mg/dL", 350.0, 150.0),
    ("troponin", ("trop",), "ng/mL", 0.3, 1.0),
    ("creatine kinase", ("ck", "cpk"), "IU/L", 300.0, 400.0),
    ("lactate dehydrogenase", ("ldh",), "IU/L", 300.0, 200.0),
    ("central venous pressure", ("cvp",), "mmHg", 10.0, 5.0),
    ("cardiac output", ("co",), "L/min", 5.0, 1.5),
    ("pulmonary artery systolic pressure", ("pas", "pap systolic"), "mmHg", 35.0, 10.0),
    ("pulmonary artery diastolic pressure", ("pad", "pap diastolic"), "mmHg", 15.0, 6.0),
    ("glasgow coma scale total", ("gcs",), "points", 12.0, 3.0),
    ("glasgow coma scale eye", ("gcs eye",), "points", 3.0, 1.0),
    ("glasgow coma scale verbal", ("gcs verbal",), "points", 3.5, 1.5),
    ("glasgow coma scale motor", ("gcs motor",), "points", 5.0, 1.2),
    ("tidal volume", ("vt",), "mL", 500.0, 100.0),
    ("peak inspiratory pressure", ("pip",), "cmH2O", 25.0, 6.0),
    ("positive end expiratory pressure", ("peep",), "cmH2O", 6.0, 3.0),
    ("minute volume", ("mv",), "L/min", 9.0, 3.0),
    ("plateau pressure", ("pplat",), "cmH2O", 20.0, 5.0),
    ("weight", ("wt",), "kg", 80.0, 20.0),
    ("red blood cell count", ("rbc",), "m/uL", 3.5, 0.6),
    ("mean corpuscular volume", ("mcv",), "fL", 90.0, 6.0),
    ("mean corpuscular hemoglobin", ("mch",), "pg", 30.0, 2.0),
    ("red cell distribution width", ("rdw",), "%", 15.0, 2.0),
    ("neutrophils", ("neuts", "polys"), "%", 78.0, 10.0),
    ("lymphocytes", ("lymphs",), "%", 12.0, 7.0),
    ("monocytes", ("monos",), "%", 5.0, 2.0),
    ("eosinophils", ("eos",), "%", 1.0, 1.0),
    ("ionized calcium", ("ica",), "mmol/L", 1.12, 0.08),
    ("cholesterol", ("chol",), "mg/dL", 150.0, 40.0),
    ("triglycerides", ("trig",), "mg/dL", 140.0, 80.0),
    ("urine output", ("uo",), "mL", 120.0, 80.0),
    ("venous ph", ("vph",), "units", 7.36, 0.06),
    ("ammonia", ("nh3",), "umol/L", 30.0, 20.0),
]

# description decorations; some are themselves ontology concepts (fan-out)
QUALIFIERS = ("", "", "(serum)", "(whole blood)", "measured", "calc", "arterial", "(manual)")
GENERIC_CONCEPTS = (
    ("blood",),
    ("serum",),
    ("pressure",),
    ("blood pressure",),
    ("arterial blood pressure", "abp"),
    ("rate",),
    ("count",),
    ("arterial",),
    ("glasgow coma scale",),
    ("oxygen",),
    ("whole blood",),
)
UNIT_FACTORS = (1.0, 1.0, 1.0, 10.0, 0.1, 1000.0, 0.001)


@dataclass
class DriftScenario:
    n_stays_per_year: int = 340
    years: tuple[int, int] = (2001, 2012)
    switch_year: int = 2008
    n_groups: int = 68
    items_per_group_pre: int = 2
    items_per_group_post: int = 1
    # False keeps a single item vocabulary (era "both") across all years
    full_switch: bool = True
    # (group index, first year, new per-hour observation probability)
    frequency_shift: list[tuple[int, int, float]] = field(default_factory=lambda: [(4, 2004, 0.9)])
    # (group index, first year, additive offset in canonical units)
    value_shift: list[tuple[int, int, float]] = field(default_factory=lambda: [(7, 2006, 10.0)])
    missing_rate: float = 0.78
    mortality_rate: float = 0.074
    long_los_rate: float = 0.471
    mortality_slope: float = 2.5
    long_los_slope: float = 1.2
    informative_fraction: float = 0.4
    # |loading| of informative groups is uniform in this range (loading < 1)
    loading_range: tuple[float, float] = (0.4, 0.8)
    ar_coefficient: float = 0.7
    ethnicity_probs: tuple[float, ...] = (0.70, 0.10, 0.05, 0.05, 0.10)
    # yearly probability mass moved from the first ethnicity to the last
    ethnicity_drift: float = 0.005
    # direct (severity-independent) log-odds offsets of demographics on labels
    demographic_effect: float = 0.0
    repeat_stay_rate: float = 0.05
    pediatric_rate: float = 0.02
    event_horizon_hours: float = 30.0
    seed: int = 0

    def __post_init__(self):
        self.years = tuple(int(y) for y in self.years)
        self.loading_range = tuple(float(x) for x in self.loading_range)
        self.frequency_shift = [tuple(x) for x in self.frequency_shift]
        self.value_shift = [tuple(x) for x in self.value_shift]
        self.ethnicity_probs = tuple(float(p) for p in self.ethnicity_probs)

    @property
    def year_list(self) -> list[int]:
        return list(range(self.years[0], self.years[1] + 1))

    def validate(self) -> None:
        first, last = self.years
        if first > last:
            raise ConfigError(f"years: start {first} after end {last}")
        if self.full_switch and not first < self.switch_year < last:
            raise ConfigError(f"switch_year {self.switch_year} must lie strictly inside years {first}-{last}")
        if self.n_stays_per_year < 0 or self.n_groups < 1:
            raise ConfigError("n_stays_per_year must be >= 0 and n_groups >= 1")
        if self.items_per_group_pre < 1 or (self.full_switch and self.items_per_group_post < 1):
            raise ConfigError("every group needs at least one item per era")
        n_pre = self.n_groups * self.items_per_group_pre
        if PRE_ITEM_BASE + n_pre > POST_ITEM_BASE:
            raise ConfigError("pre-switch and post-switch item ID ranges overlap")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        for name in ("mortality_rate", "long_los_rate"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {v}")
        for label, schedule in (("frequency_shift", self.frequency_shift), ("value_shift", self.value_shift)):
            for entry in schedule:
                if len(entry) != 3:
                    raise ConfigError(f"{label} entries are (group, year, amount), got {entry}")
                g, year, amount = entry
                if not 0 <= g < self.n_groups:
                    raise ConfigError(f"{label}: group index {g} outside 0..{self.n_groups - 1}")
                if not first <= year <= last:
                    raise ConfigError(f"{label}: year {year} outside {first}-{last}")
                if label == "frequency_shift" and not 0.0 <= amount <= 1.0:
                    raise ConfigError(f"frequency_shift: probability {amount} outside [0, 1]")
        if len(self.ethnicity_probs) != len(ETHNICITIES) or abs(sum(self.ethnicity_probs) - 1) > 1e-9:
            raise ConfigError(f"ethnicity_probs must have {len(ETHNICITIES)} entries summing to 1")
        if min(self.ethnicity_probs) < 0:
            raise ConfigError("ethnicity_probs must be non-negative")
        for name in ("repeat_stay_rate", "pediatric_rate", "informative_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        lo, hi = self.loading_range if len(self.loading_range) == 2 else (1.0, 0.0)
        if not 0.0 <= lo <= hi < 1.0:
            raise ConfigError(f"loading_range must satisfy 0 <= low <= high < 1, got {self.loading_range}")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ConfigError("ar_coefficient must be in [0, 1)")
        if self.event_horizon_hours <= 0:
            raise ConfigError("event_horizon_hours must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["years"] = list(self.years)
        d["loading_range"] = list(self.loading_range)
        d["ethnicity_probs"] = list(self.ethnicity_probs)
        d["frequency_shift"] = [list(x) for x in self.frequency_shift]
        d["value_shift"] = [list(x) for x in self.value_shift]
        return d


@dataclass
class _GroupModel:
    names: list[str]
    abbrevs: list[tuple[str, ...]]
    units: list[str]
    baseline: np.ndarray
    spread: np.ndarray
    loading: np.ndarray
    obs_prob: np.ndarray


def _group_model(scenario: DriftScenario, rng: np.random.Generator) -> _GroupModel:
    n = scenario.n_groups
    names, abbrevs, units, base, spread = [], [], [], [], []
    for g in range(n):
        name, ab, unit, mu, sd = CLINICAL_GROUPS[g % len(CLINICAL_GROUPS)]
        cycle = g // len(CLINICAL_GROUPS)
        if cycle:
            name = f"{name} site {cycle}"
            ab = tuple(f"{a} s{cycle}" for a in ab)
        names.append(name)
        abbrevs.append(ab)
        units.append(unit)
        base.append(mu)
        spread.append(sd)
    loading = np.zeros(n)
    n_inf = int(round(scenario.informative_fraction * n))
    informative = rng.choice(n, size=n_inf, replace=False)
    loading[informative] = rng.uniform(*scenario.loading_range, n_inf) * rng.choice([-1.0, 1.0], n_inf)
    # heterogeneous measurement frequency (vitals often, labs rarely), mean kept at 1 - missing_rate
    mult = rng.gamma(2.0, 0.5, n)
    obs = np.clip((1.0 - scenario.missing_rate) * mult / mult.mean(), 0.01, 0.95)
    return _GroupModel(names, abbrevs, units, np.array(base), np.array(spread), loading, obs)


def _describe(name: str, abbrevs: tuple[str, ...], form: int, qualifier: str, upper: bool) -> str:
    forms = (name,) + abbrevs
    text = forms[form % len(forms)]
    text = text.upper() if upper and form else text.title()
    return f"{text} {qualifier}".strip()


def _build_vocabulary(scenario: DriftScenario, gm: _GroupModel, rng: np.random.Generator):
    """Items, expert aggregation map and mini ontology."""
    items = []
    group_of_item = {}
    members: list[list[tuple[int, float]]] = [[] for _ in range(scenario.n_groups)]
    pre_era = "pre" if scenario.full_switch else "both"
    next_id = {"pre": PRE_ITEM_BASE, "post": POST_ITEM_BASE}
    eras = [("pre", scenario.items_per_group_pre)]
    if scenario.full_switch:
        eras.append(("post", scenario.items_per_group_post))
    for g in range(scenario.n_groups):
        for era, count in eras:
            for k in range(count):
                item_id = next_id[era] + g * count + k
                if era == "pre" and k == 0:
                    factor = 1.0
                else:
                    factor = float(rng.choice(UNIT_FACTORS))
                form = 0 if k == 0 and era == "pre" else int(rng.integers(0, 1 + len(gm.abbrevs[g])))
                qualifier = str(rng.choice(QUALIFIERS))
                desc = _describe(gm.names[g], gm.abbrevs[g], form, qualifier, upper=era == "post")
                unit = gm.units[g] if factor == 1.0 else f"{factor:g} {gm.units[g]}"
                items.append((item_id, desc, unit, factor, pre_era if era == "pre" else "post"))
                members[g].append((item_id, factor))
                group_of_item[item_id] = g
    items_df = pd.DataFrame(items, columns=list(ITEM_COLUMNS)).astype(ITEM_DTYPES)
    items_df = items_df.sort_values("item_id", kind="stable").reset_index(drop=True)

    agg = AggregationMap(
        [
            AggregateGroup(f"G{g + 1:03d}", gm.names[g], tuple(members[g]))
            for g in range(scenario.n_groups)
        ]
    )

    concepts = []
    for g in range(scenario.n_groups):
        # the automatic ontology knows the full name and only some abbreviations
        syns = [tokenize(gm.names[g])]
        syns += [tokenize(a) for a in gm.abbrevs[g] if rng.random() < 0.5]
        concepts.append(Concept(f"C{g + 1:04d}", tuple(dict.fromkeys(syns))))
    for j, generic in enumerate(GENERIC_CONCEPTS):
        concepts.append(Concept(f"CG{j + 1:02d}", tuple(tokenize(s) for s in generic)))
    return items_df, group_of_item, agg, MiniOntology(concepts)


def _calibrate_intercept(target: float, slope: float, offsets: np.ndarray | None = None,
                         weights: np.ndarray | None = None) -> float:
    """Intercept a such that E[sigmoid(a + slope * s + offset)] = target, s ~ N(0, 1)."""
    nodes, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    if offsets is None:
        offsets, weights = np.zeros(1), np.ones(1)

    def prevalence(a):
        p = special.expit(a + slope * nodes[:, None] + offsets[None, :])
        return float((w[:, None] * p * weights[None, :]).sum())

    return optimize.bisect(lambda a: prevalence(a) - target, -40.0, 40.0, xtol=1e-12)


def _ethnicity_probs(scenario: DriftScenario, year: int) -> np.ndarray:
    p = np.array(scenario.ethnicity_probs, dtype=float)
    shift = min(scenario.ethnicity_drift * (year - scenario.years[0]), p[0])
    p[0] -= shift
    p[-1] += shift
    return p / p.sum()


def _schedule(entries, n_groups: int, year: int, base: np.ndarray | None, default: float = 0.0):
    out = np.array(base, dtype=float) if base is not None else np.full(n_groups, default)
    for g, first_year, amount in sorted(entries, key=lambda e: (e[1], e[0])):
        if year >= first_year:
            out[g] = amount if base is not None else out[g] + amount
    return out


_ETH_RISK = np.array([0.0, 0.5, -0.5, 0.25, -0.25])
_MALE_RISK = 0.3


def generate(scenario: DriftScenario) -> Dataset:
    """Generate events, stays, items, aggregation map and ontology for a scenario.

    Every stay draws from its own substream ``[seed, 2, stay_index]`` so the
    output does not depend on generation order.
    """
    scenario.validate()
    seed = int(scenario.seed)
    rng_vocab = np.random.default_rng([seed, 0])
    gm = _group_model(scenario, rng_vocab)
    items_df, group_of_item, agg, ontology = _build_vocabulary(scenario, gm, rng_vocab)

    era_items = {}
    for era in ("pre", "post"):
        valid = items_df["era"].isin([era, "both"]).to_numpy()
        per_group = [[] for _ in range(scenario.n_groups)]
        for item_id, factor in zip(items_df["item_id"][valid], items_df["to_canonical_factor"][valid]):
            per_group[group_of_item[int(item_id)]].append((int(item_id), float(factor)))
        era_items[era] = per_group

    eff = scenario.demographic_effect
    base_eth = np.array(scenario.ethnicity_probs)
    offsets = (eff * (_ETH_RISK[:, None] + _MALE_RISK * np.array([0.0, 1.0])[None, :])).ravel()
    weights = (base_eth[:, None] * np.array([0.44, 0.56])[None, :]).ravel()
    a_mort = _calibrate_intercept(scenario.mortality_rate, scenario.mortality_slope, offsets, weights)
    a_los = _calibrate_intercept(scenario.long_los_rate, scenario.long_los_slope)

    # patient linkage is a single sequential stream
    years = scenario.year_list
    n_total = scenario.n_stays_per_year * len(years)
    rng_link = np.random.default_rng([seed, 1])
    repeat_of = np.full(n_total, -1)
    for i in range(1, n_total):
        if rng_link.random() < scenario.repeat_stay_rate:
            repeat_of[i] = int(rng_link.integers(0, i))

    stay_rows, event_parts, severity = [], [], {}
    patients: dict[int, tuple] = {}
    next_patient = 1
    for i in range(n_total):
        year = years[i // scenario.n_stays_per_year] if scenario.n_stays_per_year else years[0]
        stay_id = 200000 + i
        rng = np.random.default_rng([seed, 2, i])
        if repeat_of[i] >= 0:
            j = repeat_of[i]
            patient_id, gender, eth, birth_year = patients[j]
        else:
            patient_id = next_patient
            next_patient += 1
            gender = GENDERS[int(rng.random() < 0.56)]
            eth = ETHNICITIES[int(rng.choice(len(ETHNICITIES), p=_ethnicity_probs(scenario, year)))]
            if rng.random() < scenario.pediatric_rate:
                age0 = rng.uniform(1.0, 15.0)
            else:
                age0 = float(np.clip(rng.normal(63.0, 17.0), 16.0, 95.0))
            birth_year = year - age0
        patients[i] = (patient_id, gender, eth, birth_year)
        # draws below are consumed in fixed order whether or not the patient is new
        u_age = rng.uniform(0.0, 1.0)
        age = round(max(year + u_age - birth_year, 0.5), 2)
        if age >= 65:
            insurance = "Medicare" if rng.random() < 0.85 else INSURANCES[int(rng.choice([1, 2, 3, 4]))]
        else:
            insurance = INSURANCES[int(rng.choice(5, p=[0.05, 0.55, 0.25, 0.08, 0.07]))]
        s = float(rng.standard_normal())
        off = eff * (_ETH_RISK[ETHNICITIES.index(eth)] + _MALE_RISK * (gender == "M"))
        died = bool(rng.random() < special.expit(a_mort + scenario.mortality_slope * s + off))
        long_los = bool(rng.random() < special.expit(a_los + scenario.long_los_slope * s))
        if long_los:
            los = 3.0 + 1e-3 + float(rng.gamma(1.5, 2.0))
        else:
            los = float(rng.uniform(1.5, 3.0))
        los = round(los, 4)
        severity[stay_id] = s
        stay_rows.append((stay_id, patient_id, year, age, gender, eth, insurance, died, los))
        event_parts.append(_stay_events(scenario, gm, era_items, year, stay_id, s, los, rng))

    stays = pd.DataFrame(stay_rows, columns=list(STAY_COLUMNS)).astype(STAY_DTYPES) if stay_rows \
        else empty_frame(STAY_COLUMNS, STAY_DTYPES)
    if event_parts:
        events = pd.DataFrame(
            {c: np.concatenate([p[k] for p in event_parts]) for k, c in enumerate(EVENT_COLUMNS)}
        ).astype(EVENT_DTYPES)
    else:
        events = empty_frame(EVENT_COLUMNS, EVENT_DTYPES)
    data = Dataset(events, stays, items_df, agg, ontology)
    data.truth = {"severity": severity, "group_of_item": group_of_item, "loading": gm.loading.copy()}
    return data


def _stay_events(scenario, gm, era_items, year, stay_id, s, los_days, rng):
    era = "pre" if (scenario.full_switch and year < scenario.switch_year) else "post"
    if not scenario.full_switch:
        era = "pre"
    pool = era_items[era]
    span = min(los_days * 24.0, scenario.event_horizon_hours)
    n_hours = int(np.ceil(span))
    n_g = scenario.n_groups
    phi = scenario.ar_coefficient

    eps = np.empty((n_g, n_hours))
    eps[:, 0] = rng.standard_normal(n_g)
    innov = rng.standard_normal((n_g, n_hours)) * np.sqrt(1.0 - phi**2)
    for h in range(1, n_hours):
        eps[:, h] = phi * eps[:, h - 1] + innov[:, h]
    load = gm.loading[:, None]
    shift = _schedule(scenario.value_shift, n_g, year, None)
    latent = gm.baseline[:, None] + shift[:, None] + gm.spread[:, None] * (
        load * s + np.sqrt(1.0 - load**2) * eps
    )
    p_obs = _schedule(scenario.frequency_shift, n_g, year, gm.obs_prob)
    observed = rng.random((n_g, n_hours)) < p_obs[:, None]
    # the last partial hour only admits offsets before discharge
    gi, hi = np.nonzero(observed)
    n_cells = len(gi)
    n_meas = 1 + (rng.random(n_cells) < 0.15)
    choice = rng.random(n_cells)
    cell = np.repeat(np.arange(n_cells), n_meas)
    u = rng.random(len(cell))
    noise = rng.standard_normal(len(cell))

    item_ids = np.empty(n_cells, dtype=np.int64)
    factors = np.empty(n_cells)
    for k in range(n_cells):
        options = pool[gi[k]]
        item_ids[k], factors[k] = options[int(choice[k] * len(options))]
    g_rep, h_rep = gi[cell], hi[cell]
    upper = np.minimum(h_rep + 1.0, span)
    offset = h_rep + u * (upper - h_rep)
    keep = offset < span
    canonical = latent[g_rep, h_rep] + 0.05 * gm.spread[g_rep] * noise
    value = canonical / factors[cell]

    order = np.lexsort((item_ids[cell][keep], offset[keep]))
    n = int(keep.sum())
    return (
        np.full(n, stay_id, dtype=np.int64),
        item_ids[cell][keep][order],
        offset[keep][order],
        value[keep][order],
    )


def emit_dataset(data: Dataset, out_dir) -> dict[str, Path]:
    """Write the five delimited-text tables; returns their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    tables = {
        "events": data.events[list(EVENT_COLUMNS)],
        "stays": data.stays[list(STAY_COLUMNS)],
        "items": data.items[list(ITEM_COLUMNS)],
        "agg_map": (data.agg_map.to_frame() if data.agg_map else pd.DataFrame(columns=AGG_MAP_COLUMNS)),
        "ontology": (data.ontology.to_frame() if data.ontology else pd.DataFrame(columns=ONTOLOGY_COLUMNS)),
    }
    paths = {}
    for name, df in tables.items():
        path = out / f"{name}.csv"
        tmp = path.with_suffix(".csv.tmp")
        try:
            df.to_csv(tmp, index=False, lineterminator="\n", encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        paths[name] = path
    return paths


def summarize(data: Dataset) -> pd.DataFrame:
    """Per-year stay counts and label prevalences."""
    s = data.stays
    out = s.groupby("admit_year").agg(
        n_stays=("stay_id", "size"),
        mortality=("icu_mortality", "mean"),
        long_los=("los_days", lambda x: float((x > 3.0).mean())),
    )
    return out
