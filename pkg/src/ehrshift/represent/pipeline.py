"""Fit-on-train / apply-anywhere wrappers for the four representations."""

from __future__ import annotations

import numpy as np
import pandas as pd

from ..errors import ConfigError
from .concepts import build_concept_span, item_concepts
from .impute import simple_impute
from .maps import AggregationMap, MiniOntology
from .normalize import Normalizer, apply_normalizer, fit_normalizer
from .pca import PcaModel, fit_pca, project
from .tensors import DenseSeries, HourlyTensor, build_aggregate

REPRESENTATIONS = ("raw", "pca", "concept_span", "aggregate")
# demographics-only baseline: no hourly features at all
BASELINES = ("demographics",)


class Representation:
    """Hourly feature transform whose statistics are learned from training stays.

    Input tensors are raw item grids over the full vocabulary in recorded units.
    Order of operations: build the representation from unnormalized values,
    z-normalize per column, then impute (PCA consumes the imputed raw triplets).
    """

    def __init__(self, kind: str, items: pd.DataFrame | None = None, agg_map: AggregationMap | None = None,
                 ontology: MiniOntology | None = None, pca_k: int | None = None, censor_hours: int = 24,
                 pca_seed: int = 0):
        if kind not in REPRESENTATIONS + BASELINES:
            raise ConfigError(f"unknown representation {kind!r}")
        if kind == "aggregate" and agg_map is None:
            raise ConfigError("aggregate representation needs an aggregation map")
        if kind == "concept_span" and (ontology is None or items is None):
            raise ConfigError("concept_span representation needs items and an ontology")
        self.kind = kind
        self.items = items
        self.agg_map = agg_map
        self.ontology = ontology
        self.censor_hours = censor_hours
        self.pca_k = pca_k if pca_k is not None else (len(agg_map.groups) if agg_map else None)
        if kind == "pca" and not self.pca_k:
            raise ConfigError("pca representation needs k (or an aggregation map to size it)")
        self.pca_seed = pca_seed
        self._concepts = item_concepts(items, ontology) if kind == "concept_span" else None
        self.item_norm: Normalizer | None = None
        self.norm: Normalizer | None = None
        self.pca: PcaModel | None = None

    def _build(self, raw: HourlyTensor) -> HourlyTensor:
        if self.kind == "aggregate":
            return build_aggregate(raw, self.agg_map)
        if self.kind == "concept_span":
            z = apply_normalizer(self.item_norm, raw)
            return build_concept_span(z, self.items, self.ontology, self._concepts)
        return raw

    def fit(self, raw: HourlyTensor) -> "Representation":
        if self.kind == "demographics":
            return self
        if self.kind == "concept_span":
            self.item_norm = fit_normalizer(raw)
        built = self._build(raw)
        self.norm = fit_normalizer(built)
        if self.kind == "pca":
            imputed = simple_impute(apply_normalizer(self.norm, built), self.censor_hours)
            self.pca = fit_pca(imputed, self.pca_k, seed=self.pca_seed)
        return self

    def transform(self, raw: HourlyTensor) -> DenseSeries:
        if self.kind == "demographics":
            return DenseSeries(raw.stay_ids, [], np.zeros((len(raw.stay_ids), raw.hours, 0)))
        if self.norm is None:
            raise RuntimeError("representation used before fit()")
        imputed = simple_impute(apply_normalizer(self.norm, self._build(raw)), self.censor_hours)
        if self.kind == "pca":
            return project(self.pca, imputed)
        return imputed.dense()

    def artifacts_text(self) -> str:
        """Serialized fitted state (normalizers, PCA) for exact reuse and comparison."""
        parts = [f"# representation {self.kind}\n"]
        for art in (self.item_norm, self.norm, self.pca):
            if art is not None:
                parts.append(art.to_text())
        return "".join(parts)
