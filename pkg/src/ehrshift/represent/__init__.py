"""Hourly feature representations, normalization, imputation and PCA."""

from .concepts import build_concept_span, match_concepts
from .impute import ImputedTensor, simple_impute
from .maps import AggregateGroup, AggregationMap, Concept, MiniOntology, tokenize
from .normalize import Normalizer, apply_normalizer, fit_normalizer
from .pca import PcaModel, fit_pca, project
from .pipeline import REPRESENTATIONS, Representation
from .tensors import DenseSeries, HourlyTensor, build_aggregate, build_raw

__all__ = [
    "AggregateGroup", "AggregationMap", "Concept", "DenseSeries", "HourlyTensor", "ImputedTensor",
    "MiniOntology", "Normalizer", "PcaModel", "REPRESENTATIONS", "Representation", "apply_normalizer",
    "build_aggregate", "build_concept_span", "build_raw", "fit_normalizer", "fit_pca", "match_concepts",
    "project", "simple_impute", "tokenize",
]
