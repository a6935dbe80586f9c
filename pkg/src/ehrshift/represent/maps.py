"""Mapping artifacts that define the aggregate and concept representations."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import pandas as pd

from ..errors import ConfigError

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return tuple(t for t in _TOKEN_SPLIT.split(text.lower()) if t)


@dataclass(frozen=True)
class AggregateGroup:
    group_id: str
    group_name: str
    members: tuple[tuple[int, float], ...]  # (item_id, to_canonical_factor)


@dataclass
class AggregationMap:
    groups: list[AggregateGroup] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[int, str] = {}
        ids = set()
        for g in self.groups:
            if g.group_id in ids:
                raise ConfigError(f"duplicate group_id {g.group_id!r} in aggregation map")
            ids.add(g.group_id)
            for item_id, factor in g.members:
                if item_id in seen:
                    raise ConfigError(
                        f"item {item_id} belongs to groups {seen[item_id]!r} and {g.group_id!r}"
                    )
                if not factor > 0:
                    raise ConfigError(f"item {item_id}: to_canonical_factor must be > 0, got {factor}")
                seen[item_id] = g.group_id

    @property
    def group_ids(self) -> list[str]:
        return sorted(g.group_id for g in self.groups)

    def item_to_group(self) -> dict[int, tuple[str, float]]:
        return {i: (g.group_id, f) for g in self.groups for i, f in g.members}

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (g.group_id, g.group_name, item_id, factor)
            for g in sorted(self.groups, key=lambda g: g.group_id)
            for item_id, factor in g.members
        ]
        return pd.DataFrame(rows, columns=["group_id", "group_name", "item_id", "to_canonical_factor"]).astype(
            {"item_id": "int64", "to_canonical_factor": "float64"}
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "AggregationMap":
        groups = []
        for gid, sub in df.groupby("group_id", sort=True):
            names = sub["group_name"].unique()
            if len(names) != 1:
                raise ConfigError(f"group {gid!r} has several names: {list(names)}")
            members = tuple((int(i), float(f)) for i, f in zip(sub["item_id"], sub["to_canonical_factor"]))
            groups.append(AggregateGroup(str(gid), str(names[0]), members))
        return cls(groups)


@dataclass(frozen=True)
class Concept:
    concept_id: str
    synonyms: tuple[tuple[str, ...], ...]


@dataclass
class MiniOntology:
    concepts: list[Concept] = field(default_factory=list)

    def __post_init__(self):
        ids = set()
        for c in self.concepts:
            if c.concept_id in ids:
                raise ConfigError(f"duplicate concept_id {c.concept_id!r}")
            ids.add(c.concept_id)
            if not c.synonyms:
                raise ConfigError(f"concept {c.concept_id!r} has no synonyms")
            for syn in c.synonyms:
                if not syn or any(not t or t != t.lower() or tokenize(t) != (t,) for t in syn):
                    raise ConfigError(f"concept {c.concept_id!r}: synonym {syn!r} is not lowercase tokens")

    def to_frame(self) -> pd.DataFrame:
        rows = [(c.concept_id, " ".join(s)) for c in self.concepts for s in c.synonyms]
        return pd.DataFrame(rows, columns=["concept_id", "synonym"])

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "MiniOntology":
        synonyms: dict[str, list[tuple[str, ...]]] = {}
        for cid, syn in zip(df["concept_id"], df["synonym"]):
            synonyms.setdefault(str(cid), []).append(tuple(str(syn).split(" ")))
        return cls([Concept(cid, tuple(s)) for cid, s in synonyms.items()])
