"""L1 / L2 regularized logistic regression.

Objective: mean log-loss + ||w||^2 / (2 C n) (L2) or ||w||_1 / (C n) (L1);
the intercept is not penalized, so C has the same meaning as in liblinear.
Optimized full-batch with L-BFGS-B (L1 through the w = w+ - w- split under
non-negativity bounds). Columns that are constant over the training rows
carry no signal beyond the intercept; their weight is fixed at 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

from ..errors import DegenerateLabelError, DimensionMismatchError

FORMAT = "ehrshift-lr v1"


@dataclass(frozen=True)
class LrConfig:
    C: float = 1.0
    penalty: str = "l2"
    max_iter: int = 1000
    tol: float = 1e-7

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.penalty not in ("l1", "l2"):
            raise ValueError(f"penalty must be 'l1' or 'l2', got {self.penalty!r}")


@dataclass
class LrModel:
    columns: list[str]
    weights: np.ndarray
    intercept: float
    config: LrConfig = field(default_factory=LrConfig)
    converged: bool = False
    n_iter: int = 0
    loss_history: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != len(self.weights):
            raise DimensionMismatchError(f"expected {len(self.weights)} features, got {X.shape[1]}")
        return X @ self.weights.astype(X.dtype, copy=False) + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return special.expit(np.asarray(self.decision_function(X), dtype=np.float64))

    def to_text(self) -> str:
        buf = io.StringIO()
        c = self.config
        buf.write(f"# {FORMAT}\n")
        buf.write(f"config,C={c.C!r},penalty={c.penalty},max_iter={c.max_iter},tol={c.tol!r}\n")
        buf.write(f"intercept,{float(self.intercept)!r}\n")
        for name, w in zip(self.columns, self.weights):
            buf.write(f"{name},{float(w)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "LrModel":
        lines = text.splitlines()
        if not lines or lines[0] != f"# {FORMAT}":
            raise ValueError(f"not a {FORMAT} document")
        kv = dict(part.split("=", 1) for part in lines[1].split(",")[1:])
        config = LrConfig(float(kv["C"]), kv["penalty"], int(kv["max_iter"]), float(kv["tol"]))
        intercept = float(lines[2].split(",")[1])
        rows = [ln.rsplit(",", 1) for ln in lines[3:] if ln]
        return cls([r[0] for r in rows], np.array([float(r[1]) for r in rows]), intercept, config, True)


def _check_labels(y: np.ndarray) -> None:
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateLabelError("training labels must contain both classes (and >= 2 examples)")


# L1 fits start from this many columns and at least double the working set per round
WORKING_SET_MIN = 128
# iteration cap for rounds that still have violating columns outside the working set
ROUND_ITERS = 50


def _loss_grad(Xs, y, w, b):
    z = Xs @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    r = (special.expit(z) - y) / len(y)
    return loss, Xs.T @ r, float(r.sum())


def _l2_objective(Xs, y, lam):
    q = Xs.shape[1]

    def fun(theta):
        w, b = theta[:q], theta[q]
        loss, g, gb = _loss_grad(Xs, y, w, b)
        return loss + 0.5 * lam * float(w @ w), np.concatenate([g + lam * w, [gb]])
    return fun


def _l1_objective(Xs, y, lam):
    # w = wp - wm with wp, wm >= 0 turns the L1 term into a smooth bound-constrained one
    q = Xs.shape[1]

    def fun(theta):
        wp, wm, b = theta[:q], theta[q:2 * q], theta[2 * q]
        loss, g, gb = _loss_grad(Xs, y, wp - wm, b)
        return loss + lam * float(wp.sum() + wm.sum()), np.concatenate([g + lam, -g + lam, [gb]])
    return fun


def _minimize(fun, x0, bounds, max_iter: int, tol: float, history: list):
    """L-BFGS-B from x0, appending the objective after every accepted step to ``history``."""
    last = {}

    def cached(theta):
        f, g = fun(theta)
        last["x"], last["f"] = theta.copy(), f
        return f, g

    def callback(theta):
        # L-BFGS-B reports the point it evaluated last
        f = last["f"] if np.array_equal(theta, last.get("x")) else fun(theta)[0]
        history.append(float(f))

    res = optimize.minimize(
        cached, x0, jac=True, method="L-BFGS-B", bounds=bounds, callback=callback,
        options={"maxiter": int(max_iter), "gtol": tol, "ftol": 1e-13, "maxcor": 20},
    )
    return res.x, int(res.nit)


def _projected_gnorm(theta, grad) -> float:
    # gradient of the bound-constrained split, ignoring components pushing into a bound at zero
    pg = np.where((theta[:-1] <= 0) & (grad[:-1] > 0), 0.0, grad[:-1])
    return float(max(np.max(np.abs(pg)) if len(pg) else 0.0, abs(grad[-1])))


def _fit_l1(Xv, y, lam, config: LrConfig, rank: np.ndarray, history: list):
    """Working-set solve: optimize over a subset of columns, add columns violating optimality, repeat.

    Columns outside the set stay at zero, which is optimal for them once |gradient| <= lam, so the
    final check over all columns certifies the full problem.
    """
    q = Xv.shape[1]
    w, b = np.zeros(q), 0.0
    active = np.zeros(q, dtype=bool)
    used, settled = 0, False
    while used < config.max_iter:
        _, g, _ = _loss_grad(Xv, y, w, b)
        cand = np.flatnonzero(~active & (np.abs(g) - lam > config.tol))
        if settled and not len(cand):
            break
        if len(cand):
            # strongest violators first; name rank breaks ties so column order never matters
            order = cand[np.lexsort((rank[cand], -np.abs(g[cand])))]
            active[order[:max(WORKING_SET_MIN, int(active.sum()))]] = True
        idx = np.flatnonzero(active)
        k = len(idx)
        x0 = np.concatenate([np.maximum(w[idx], 0.0), np.maximum(-w[idx], 0.0), [b]])
        budget = config.max_iter - used
        fun = _l1_objective(Xv[:, idx], y, lam)
        theta, nit = _minimize(fun, x0, [(0.0, None)] * (2 * k) + [(None, None)],
                               min(ROUND_ITERS, budget) if len(cand) else budget, config.tol, history)
        used += max(nit, 1)
        settled = nit == 0 or _projected_gnorm(theta, fun(theta)[1]) <= config.tol
        w = np.zeros(q)
        w[idx] = theta[:k] - theta[k:2 * k]
        b = float(theta[-1])
    return w, b, used


def _row_space_factor(X: np.ndarray, gram: np.ndarray | None = None):
    """Cholesky factor of X X^T for wide, well-conditioned X; None means fit in the primal."""
    n, p = X.shape
    if n == 0 or p < 2 * n:
        return None
    K = X @ X.T if gram is None else gram
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        return None
    if L.diagonal().min() < 1e-6 * np.sqrt(K.diagonal().max()):
        return None
    return L


def train_lr(X: np.ndarray, y, config: LrConfig = LrConfig(), columns=None, gram=None) -> LrModel:
    """Fit by L-BFGS(-B). ``gram`` may carry a precomputed X @ X.T for wide L2 fits."""
    y = np.asarray(y, dtype=np.float64)
    _check_labels(y)
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    columns = list(columns) if columns is not None else [f"x{j}" for j in range(p)]
    varying = np.flatnonzero(np.ptp(X, axis=0) > 0) if n else np.arange(p)
    Xv = X[:, varying] if len(varying) < p else X
    q = Xv.shape[1]
    lam = 1.0 / (config.C * n)
    history = [float(np.log(2.0))]  # objective at w = 0, b = 0

    if config.penalty == "l2":
        L = _row_space_factor(X, gram)
        if L is None:
            theta, nit = _minimize(_l2_objective(Xv, y, lam), np.zeros(q + 1), None, config.max_iter,
                                   config.tol, history)
            w_v, intercept = theta[:q], float(theta[-1])
        else:
            # w = X^T L^-T c is an isometry onto the row space, where the L2 optimum lies
            theta, nit = _minimize(_l2_objective(L, y, lam), np.zeros(n + 1), None, config.max_iter,
                                   config.tol, history)
            w = X.T @ linalg.solve_triangular(L, theta[:n], lower=True, trans="T")
            # constant columns have zero weight at the optimum; move their residue into the intercept
            const = np.setdiff1d(np.arange(p), varying)
            w_v, intercept = w[varying], float(theta[-1] + w[const] @ X[0, const])
        _, grad = _l2_objective(Xv, y, lam)(np.append(w_v, intercept))
        gnorm = float(np.max(np.abs(grad)))
    else:
        names = [columns[j] for j in varying]
        rank = np.empty(q, dtype=np.int64)
        rank[sorted(range(q), key=names.__getitem__)] = np.arange(q)
        w_v, intercept, nit = _fit_l1(Xv, y, lam, config, rank, history)
        theta = np.concatenate([np.maximum(w_v, 0.0), np.maximum(-w_v, 0.0), [intercept]])
        gnorm = _projected_gnorm(theta, _l1_objective(Xv, y, lam)(theta)[1])
    weights = np.zeros(p)
    weights[varying] = w_v
    return LrModel(columns, weights, intercept, config, bool(gnorm <= config.tol), nit, history)
