"""PCA over pooled hourly imputed vectors via block subspace iteration."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .impute import ImputedTensor
from .tensors import DenseSeries

log = logging.getLogger(__name__)

FORMAT = "ehrshift-pca v1"


@dataclass
class PcaModel:
    columns: list[str]  # input dimension names
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing
    n_iter: int = 0
    converged: bool = True

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {FORMAT}\n")
        buf.write(f"dims,{len(self.columns)},{self.k}\n")
        buf.write("columns," + ",".join(self.columns) + "\n")
        buf.write("mean," + ",".join(repr(float(x)) for x in self.mean) + "\n")
        buf.write("explained_variance," + ",".join(repr(float(x)) for x in self.explained_variance) + "\n")
        for i, row in enumerate(self.components):
            buf.write(f"pc{i + 1:03d}," + ",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "PcaModel":
        lines = text.splitlines()
        if not lines or lines[0] != f"# {FORMAT}":
            raise ValueError(f"not a {FORMAT} document")
        _, d, k = lines[1].split(",")
        columns = lines[2].split(",")[1:]
        mean = np.array([float(x) for x in lines[3].split(",")[1:]])
        ev = np.array([float(x) for x in lines[4].split(",")[1:]])
        comps = np.array([[float(x) for x in ln.split(",")[1:]] for ln in lines[5:5 + int(k)]])
        return cls(columns, mean, comps.reshape(int(k), int(d)), ev)


def top_eigenpairs(cov: np.ndarray, k: int, seed: int = 0, tol: float = 1e-9, max_iter: int = 5000,
                   oversample: int = 10):
    """Leading k eigenpairs of a symmetric PSD matrix by subspace iteration.

    Stops when every residual ||C v - lambda v|| falls below tol * lambda_max.
    Returns (values, vectors[:, :k], n_iter, converged).
    """
    d = cov.shape[0]
    b = min(d, k + oversample)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, b)))
    theta = np.zeros(b)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = cov @ q
        t = q.T @ z
        theta, v = np.linalg.eigh((t + t.T) / 2)
        order = np.argsort(theta)[::-1]
        theta, v = theta[order], v[:, order]
        q_rot = q @ v
        resid = np.linalg.norm(z @ v - q_rot * theta, axis=0)[:k]
        scale = max(abs(theta[0]), np.finfo(float).tiny)
        if np.all(resid <= tol * scale):
            q = q_rot
            converged = True
            break
        q, _ = np.linalg.qr(z @ v)
    vecs = q[:, :k].copy()
    # deterministic sign: largest-magnitude entry positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(k)])
    vecs *= np.where(signs == 0, 1.0, signs)
    return np.maximum(theta[:k], 0.0), vecs, it, converged


def _pool(data) -> tuple[np.ndarray, list[str]]:
    if isinstance(data, ImputedTensor):
        dense = data.dense()
    elif isinstance(data, DenseSeries):
        dense = data
    else:
        raise TypeError("expected ImputedTensor or DenseSeries")
    return dense.values.reshape(-1, dense.values.shape[2]), dense.columns


def fit_pca(data, k: int, seed: int = 0, tol: float = 1e-9, max_iter: int = 5000) -> PcaModel:
    """Fit on every hour-vector of every training stay (rows pooled)."""
    x, columns = _pool(data)
    d = x.shape[1]
    if not 1 <= k <= d:
        raise ConfigError(f"PCA k={k} must be in 1..{d} (input dimension)")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / max(x.shape[0] - 1, 1)
    values, vectors, n_iter, converged = top_eigenpairs(cov, k, seed=seed, tol=tol, max_iter=max_iter)
    if not converged:
        log.warning("PCA subspace iteration stopped after %d iterations without reaching tol=%g", n_iter, tol)
    return PcaModel(list(columns), mean, vectors.T.copy(), values, n_iter, converged)


def project(model: PcaModel, data) -> DenseSeries:
    if isinstance(data, ImputedTensor):
        dense = data.dense()
    else:
        dense = data
    if list(dense.columns) != model.columns:
        raise ValueError("input columns differ from the fitted PCA columns")
    n, h, _ = dense.values.shape
    z = (dense.values.reshape(n * h, -1) - model.mean) @ model.components.T
    cols = [f"pc{i + 1:03d}" for i in range(model.k)]
    return DenseSeries(dense.stay_ids, cols, z.reshape(n, h, model.k))
