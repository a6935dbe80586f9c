"""Automatic concept grouping from free-text item descriptions."""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import pandas as pd

from ..schema import item_column
from .maps import MiniOntology, tokenize
from .tensors import HourlyTensor


def find_spans(tokens: tuple[str, ...], ontology: MiniOntology) -> list[tuple[int, int, str]]:
    """All (start, end, concept_id) synonym occurrences; end is exclusive."""
    by_first = defaultdict(list)
    for c in ontology.concepts:
        for syn in c.synonyms:
            by_first[syn[0]].append((syn, c.concept_id))
    spans = []
    for i, tok in enumerate(tokens):
        for syn, cid in by_first.get(tok, ()):
            if tokens[i:i + len(syn)] == syn:
                spans.append((i, i + len(syn), cid))
    return sorted(set(spans))


def match_concepts(description: str, ontology: MiniOntology) -> set[str]:
    """Concepts found in ``description`` after spanning pruning.

    A match is dropped when its token span lies strictly inside the span of
    another match, leaving the most specific concepts.
    """
    spans = find_spans(tokenize(description), ontology)
    keep = set()
    for s, e, cid in spans:
        inside = any(s2 <= s and e <= e2 and (s2, e2) != (s, e) for s2, e2, _ in spans)
        if not inside:
            keep.add(cid)
    return keep


def item_concepts(items: pd.DataFrame, ontology: MiniOntology) -> dict[int, set[str]]:
    return {int(i): match_concepts(d, ontology) for i, d in zip(items["item_id"], items["description"])}


def build_concept_span(tensor: HourlyTensor, items: pd.DataFrame, ontology: MiniOntology,
                       mapping: dict[int, set[str]] | None = None) -> HourlyTensor:
    """One column per matched concept: the hourly mean of its member items.

    ``tensor`` must already hold per-item z-scored values, since descriptions
    carry no unit information. An item feeds every concept it maps to; items
    without concepts are dropped.
    """
    if mapping is None:
        mapping = item_concepts(items, ontology)
    pos = {c: j for j, c in enumerate(tensor.columns)}
    members: dict[str, list[int]] = defaultdict(list)
    for item_id, cids in sorted(mapping.items()):
        col = item_column(item_id)
        if col in pos:
            for cid in cids:
                members[cid].append(pos[col])
    concepts = sorted(members)
    n, hours, _ = tensor.values.shape
    out = np.full((n, hours, len(concepts)), np.nan)
    for k, cid in enumerate(concepts):
        block = tensor.values[:, :, members[cid]]
        seen = ~np.isnan(block)
        total = np.where(seen, block, 0.0).sum(axis=2)
        count = seen.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, :, k] = np.where(count > 0, total / count, np.nan)
    return HourlyTensor(tensor.stay_ids, concepts, out)
