"""Random forest of Gini trees on pre-binned features.

Each column is reduced to a sorted list of candidate thresholds once per
training set (every midpoint between distinct values when there are at most
``max_bins`` of them, quantile-spaced midpoints otherwise); a sample goes left
when ``x <= threshold``. Trees are grown depth-first on bootstrap counts.

Per-split feature subsets are sampled (seeded per tree) from the columns
arranged by a hash of the column *name*, and equal-gain ties go to the smaller
name, so reordering the columns of X (consistently for train and test) leaves
every tree, and thus every score, bit-identical.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import DegenerateLabelError, DimensionMismatchError

FORMAT = "ehrshift-rf v1"


@dataclass(frozen=True)
class RfConfig:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: float | str = "sqrt"  # fraction of columns per split, or "sqrt"
    bootstrap: bool = True
    max_bins: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split must be >= 2 and min_samples_leaf >= 1")
        if self.max_features != "sqrt" and not (isinstance(self.max_features, (int, float))
                                                 and 0 < self.max_features <= 1):
            raise ValueError(f"max_features must be 'sqrt' or a fraction in (0, 1], got {self.max_features!r}")
        if not 2 <= self.max_bins <= 65535:
            raise ValueError("max_bins must be in 2..65535")

    def n_split_features(self, p: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.isqrt(p)))
        return max(1, min(p, int(round(self.max_features * p))))

    def tree_seeds(self) -> list[int]:
        """One 64-bit seed per tree, derived from (seed, tree index)."""
        return [int(np.random.default_rng([self.seed, t]).integers(0, 2**63)) for t in range(self.n_estimators)]


@dataclass
class Tree:
    """Node table in depth-first preorder; ``feature == -1`` marks a leaf."""

    feature: np.ndarray  # int32, column index into the model's columns
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, positive-class frequency of the node's training samples
    weight: np.ndarray  # float64, bootstrap-weighted training samples in the node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # preorder: parents precede children
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


@dataclass
class RfModel:
    columns: list[str]
    trees: list[Tree]
    config: RfConfig = field(default_factory=RfConfig)
    tree_seeds: list[int] = field(default_factory=list)

    def _check(self, X):
        if X.shape[1] != len(self.columns):
            raise DimensionMismatchError(f"expected {len(self.columns)} features, got {X.shape[1]}")

    def tree_scores(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n) leaf frequencies."""
        self._check(X)
        X = np.ascontiguousarray(X)
        return np.stack([_predict_tree(X, t.feature, t.threshold, t.left, t.right, t.value) for t in self.trees])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        self._check(X)
        X = np.ascontiguousarray(X)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += _predict_tree(X, t.feature, t.threshold, t.left, t.right, t.value)
        return total / len(self.trees)

    def to_text(self) -> str:
        buf = io.StringIO()
        c = self.config
        buf.write(f"# {FORMAT}\n")
        buf.write(f"config,n_estimators={c.n_estimators},max_depth={c.max_depth},"
                  f"min_samples_split={c.min_samples_split},min_samples_leaf={c.min_samples_leaf},"
                  f"max_features={c.max_features},bootstrap={c.bootstrap},max_bins={c.max_bins},seed={c.seed}\n")
        buf.write("columns," + ",".join(self.columns) + "\n")
        for i, (tree, seed) in enumerate(zip(self.trees, self.tree_seeds)):
            buf.write(f"tree,{i},{seed},{tree.n_nodes}\n")
            for j in range(tree.n_nodes):
                buf.write(f"{int(tree.feature[j])},{float(tree.threshold[j])!r},{int(tree.left[j])},"
                          f"{int(tree.right[j])},{float(tree.value[j])!r},{float(tree.weight[j])!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RfModel":
        lines = text.splitlines()
        if not lines or lines[0] != f"# {FORMAT}":
            raise ValueError(f"not a {FORMAT} document")
        kv = dict(part.split("=", 1) for part in lines[1].split(",")[1:])
        mf = kv["max_features"]
        config = RfConfig(
            n_estimators=int(kv["n_estimators"]),
            max_depth=None if kv["max_depth"] == "None" else int(kv["max_depth"]),
            min_samples_split=int(kv["min_samples_split"]),
            min_samples_leaf=int(kv["min_samples_leaf"]),
            max_features=mf if mf == "sqrt" else float(mf),
            bootstrap=kv["bootstrap"] == "True",
            max_bins=int(kv["max_bins"]),
            seed=int(kv["seed"]),
        )
        columns = lines[2].split(",")[1:]
        trees, seeds = [], []
        pos = 3
        while pos < len(lines):
            _, _, seed, n_nodes = lines[pos].split(",")
            rows = [ln.split(",") for ln in lines[pos + 1:pos + 1 + int(n_nodes)]]
            cols = list(zip(*rows))
            trees.append(Tree(
                np.array(cols[0], dtype=np.int32), np.array(cols[1], dtype=np.float64),
                np.array(cols[2], dtype=np.int32), np.array(cols[3], dtype=np.int32),
                np.array(cols[4], dtype=np.float64), np.array(cols[5], dtype=np.float64),
            ))
            seeds.append(int(seed))
            pos += 1 + int(n_nodes)
        return cls(columns, trees, config, seeds)


# ---------------------------------------------------------------- binning


@dataclass
class Binned:
    """Threshold tables and bin codes for one training matrix."""

    codes: np.ndarray  # (p, n) uint16; code = number of thresholds strictly below x
    thresholds: np.ndarray  # concatenated per-column thresholds
    offsets: np.ndarray  # (p + 1,) int64 into ``thresholds``
    max_bins: int

    @property
    def n_bins(self) -> np.ndarray:
        return (np.diff(self.offsets) + 1).astype(np.int32)

    def take(self, rows) -> "Binned":
        return Binned(np.ascontiguousarray(self.codes[:, rows]), self.thresholds, self.offsets, self.max_bins)


def column_thresholds(x: np.ndarray, max_bins: int) -> np.ndarray:
    u = np.unique(x)
    if len(u) <= max_bins:
        return (u[:-1] + u[1:]) / 2
    q = np.quantile(x, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
    idx = np.unique(np.searchsorted(u, q))
    idx = idx[idx < len(u) - 1]
    return (u[idx] + u[idx + 1]) / 2


def bin_features(X: np.ndarray, max_bins: int = 64) -> Binned:
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    codes = np.empty((p, n), dtype=np.uint16)
    tables = []
    offsets = np.zeros(p + 1, dtype=np.int64)
    for j in range(p):
        thr = column_thresholds(X[:, j], max_bins)
        codes[j] = np.searchsorted(thr, X[:, j], side="left")
        tables.append(thr)
        offsets[j + 1] = offsets[j] + len(thr)
    thresholds = np.concatenate(tables) if tables else np.zeros(0)
    return Binned(codes, thresholds, offsets, max_bins)


# ---------------------------------------------------------------- column keys


def _name_hash(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


def column_order(columns: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """(order, rank): columns sorted by (name hash, name), and each column's rank by name."""
    hashes = np.array([_name_hash(c) for c in columns], dtype=np.uint64)
    rank = np.empty(len(columns), dtype=np.int32)
    rank[np.argsort(np.array(columns, dtype=object), kind="stable")] = np.arange(len(columns), dtype=np.int32)
    return np.lexsort((rank, hashes)).astype(np.int32), rank


@numba.njit(cache=True)
def _next(state):
    """splitmix64 step: returns (new state, output)."""
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


# ---------------------------------------------------------------- tree growth


@numba.njit(cache=True)
def _grow_tree(codes, n_bins, y, w, order, rank, m, max_depth, min_split, min_leaf, seed):
    p = codes.shape[0]
    idx = np.flatnonzero(w > 0)
    n_in = idx.shape[0]
    cap = 2 * n_in + 1
    feature = np.full(cap, -1, np.int32)
    split_bin = np.zeros(cap, np.int32)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    pool = order.copy()
    state = np.uint64(seed)
    max_b = 1
    for j in range(p):
        if n_bins[j] > max_b:
            max_b = n_bins[j]
    hist_w = np.zeros(max_b)
    hist_pos = np.zeros(max_b)

    # stack entries: start, end, depth, parent, is_right
    stack = np.zeros((cap, 5), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n_in
    stack[0, 2] = 0
    stack[0, 3] = -1
    top = 1
    n_nodes = 0
    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if stack[top, 4] == 1:
                right[parent] = node
            else:
                left[parent] = node

        tot = 0.0
        pos = 0.0
        for i in range(start, end):
            s = idx[i]
            tot += w[s]
            pos += w[s] * y[s]
        value[node] = pos / tot
        weight[node] = tot
        if depth >= max_depth or tot < min_split or pos == 0.0 or pos == tot:
            continue

        parent_imp = tot - (pos * pos + (tot - pos) * (tot - pos)) / tot
        best_gain = 1e-12 * tot
        best_f = -1
        best_b = -1
        best_rank = p
        for jj in range(m):
            # partial Fisher-Yates over the hash-ordered columns
            state, r = _next(state)
            k = jj + np.int64(r % np.uint64(p - jj))
            f = pool[k]
            pool[k] = pool[jj]
            pool[jj] = f
            nb = n_bins[f]
            if nb < 2:
                continue
            for b in range(nb):
                hist_w[b] = 0.0
                hist_pos[b] = 0.0
            row = codes[f]
            for i in range(start, end):
                s = idx[i]
                c = row[s]
                hist_w[c] += w[s]
                hist_pos[c] += w[s] * y[s]
            lw = 0.0
            lp = 0.0
            for b in range(nb - 1):
                lw += hist_w[b]
                lp += hist_pos[b]
                rw = tot - lw
                if lw < min_leaf or rw < min_leaf:
                    continue
                rp = pos - lp
                imp_l = lw - (lp * lp + (lw - lp) * (lw - lp)) / lw
                imp_r = rw - (rp * rp + (rw - rp) * (rw - rp)) / rw
                gain = parent_imp - imp_l - imp_r
                if gain > best_gain or (gain == best_gain and best_f >= 0 and rank[f] < best_rank):
                    best_gain = gain
                    best_f = f
                    best_b = b
                    best_rank = rank[f]
        if best_f < 0:
            continue

        row = codes[best_f]
        i = start
        j = end - 1
        while i <= j:
            if row[idx[i]] <= best_b:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feature[node] = best_f
        split_bin[node] = best_b
        # right pushed first so the left subtree is numbered next (preorder)
        stack[top, 0] = i
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        top += 1
        stack[top, 0] = start
        stack[top, 1] = i
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 0
        top += 1

    return (feature[:n_nodes], split_bin[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], weight[:n_nodes])


@numba.njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _check_labels(y: np.ndarray) -> None:
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateLabelError("training labels must contain both classes (and >= 2 examples)")


def train_rf(X: np.ndarray | None, y, config: RfConfig = RfConfig(), columns=None,
             binned: Binned | None = None) -> RfModel:
    """Fit a forest. ``binned`` (from :func:`bin_features` on the same rows) skips re-binning."""
    y = np.asarray(y)
    _check_labels(y)
    if binned is None:
        binned = bin_features(X, config.max_bins)
    p, n = binned.codes.shape
    if len(y) != n:
        raise DimensionMismatchError(f"{len(y)} labels for {n} rows")
    columns = list(columns) if columns is not None else [f"x{j}" for j in range(p)]
    if len(columns) != p:
        raise DimensionMismatchError(f"expected {p} column names, got {len(columns)}")
    order, rank = column_order(columns)
    y8 = (y > 0).astype(np.float64)
    n_bins = binned.n_bins
    m = config.n_split_features(p)
    max_depth = config.max_depth if config.max_depth is not None else 1 << 30
    trees, seeds = [], config.tree_seeds()
    for seed in seeds:
        if config.bootstrap:
            draw = np.random.default_rng(seed).integers(0, n, size=n)
            w = np.bincount(draw, minlength=n).astype(np.float64)
        else:
            w = np.ones(n)
        f, b, lft, rgt, val, wt = _grow_tree(binned.codes, n_bins, y8, w, order, rank, m, max_depth,
                                             float(config.min_samples_split), float(config.min_samples_leaf),
                                             np.uint64(seed))
        thr = np.zeros(len(f))
        inner = f >= 0
        thr[inner] = binned.thresholds[binned.offsets[f[inner]] + b[inner]]
        trees.append(Tree(f.copy(), thr, lft.copy(), rgt.copy(), val.copy(), wt.copy()))
    return RfModel(columns, trees, config, seeds)
