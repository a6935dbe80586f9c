from __future__ import annotations

import numpy as np
import pytest

from ehrshift.datagen import DriftScenario, generate


def pair_auroc(y, s) -> float:
    """O(n^2) pair counting: wins plus half the ties over all positive-negative pairs."""
    pos = [v for v, t in zip(s, y) if t == 1]
    neg = [v for v, t in zip(s, y) if t != 1]
    credit = 0.0
    for a in pos:
        for b in neg:
            credit += 1.0 if a > b else (0.5 if a == b else 0.0)
    return credit / (len(pos) * len(neg))


def scan_oracle(col, censor):
    """Simple imputation of one feature by a per-hour scan straight from the definition."""
    value, mask, delta = [], [], []
    last, d = 0.0, 0.0
    for v in col:
        if np.isnan(v):
            d = d + 1.0 / censor
            mask.append(0.0)
        else:
            last, d = v, 0.0
            mask.append(1.0)
        value.append(last)
        delta.append(d)
    return np.array(value), np.array(mask), np.array(delta)


def dense_oracle(x):
    """Eigenvalues and eigenvectors of the sample covariance, largest first."""
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (len(x) - 1)
    vals, vecs = np.linalg.eigh(cov)
    return vals[::-1], vecs[:, ::-1]


def small_scenario(**kw) -> DriftScenario:
    base = dict(n_stays_per_year=60, years=(2001, 2006), switch_year=2004, n_groups=8,
                frequency_shift=[], value_shift=[], missing_rate=0.5, seed=3)
    base.update(kw)
    return DriftScenario(**base)


@pytest.fixture(scope="session")
def small_data():
    return generate(small_scenario())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def span_oracle(description: str, ontology) -> set[str]:
    """Enumerate every token span, keep synonym hits, drop hits strictly inside another hit."""
    import re

    tokens = [t for t in re.split(r"[^a-z0-9]+", description.lower()) if t]
    syn = {}
    for c in ontology.concepts:
        for s in c.synonyms:
            syn.setdefault(tuple(s), set()).add(c.concept_id)
    hits = []
    for i in range(len(tokens)):
        for j in range(i + 1, len(tokens) + 1):
            for cid in syn.get(tuple(tokens[i:j]), ()):
                hits.append((i, j, cid))
    out = set()
    for i, j, cid in hits:
        if not any(a <= i and j <= b and (a, b) != (i, j) for a, b, _ in hits):
            out.add(cid)
    return out


def concept_fixture(n_items: int = 50, seed: int = 0):
    """Item descriptions over a small vocabulary and a nested 10-concept ontology."""
    import pandas as pd

    from ehrshift.represent.maps import Concept, MiniOntology

    ontology = MiniOntology([
        Concept("C1", (("blood", "pressure"), ("bp",))),
        Concept("C2", (("arterial", "blood", "pressure"), ("abp",))),
        Concept("C3", (("blood",),)),
        Concept("C4", (("pressure",),)),
        Concept("C5", (("heart", "rate"), ("hr",))),
        Concept("C6", (("rate",),)),
        Concept("C7", (("white", "blood", "cell", "count"), ("wbc",))),
        Concept("C8", (("cell", "count"),)),
        Concept("C9", (("mean", "arterial", "blood", "pressure"), ("map",))),
        Concept("C10", (("count",), ("arterial",))),
    ])
    vocab = ["blood", "pressure", "arterial", "mean", "heart", "rate", "white", "cell", "count", "bp", "abp",
             "hr", "wbc", "map", "serum", "manual", "calc", "(site)", "NBP", "Temp"]
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_items):
        words = [vocab[k] for k in rng.integers(0, len(vocab), rng.integers(1, 7))]
        sep = [" ", "-", "/", " "][int(rng.integers(0, 4))]
        text = sep.join(words)
        rows.append((100 + i, text.upper() if rng.random() < 0.3 else text))
    items = pd.DataFrame(rows, columns=["item_id", "description"])
    return items, ontology


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def criterion(request):
    """record(number, ok, detail): print one PASS/FAIL line now and again in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
