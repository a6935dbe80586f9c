import numpy as np
import pytest
from scipy import stats

from ehrshift.errors import DegenerateLabelError, DimensionMismatchError
from ehrshift.evaluate.metrics import auroc
import ehrshift.models.logistic as L
from ehrshift.models.logistic import LrConfig, LrModel, train_lr


def test_separable_1d():
    X = np.r_[-np.ones(50), np.ones(50)].reshape(-1, 1)
    y = np.r_[np.zeros(50), np.ones(50)]
    m = train_lr(X, y, LrConfig(C=100.0))
    assert auroc(y, m.predict_proba(X)) == 1.0
    assert m.weights[0] > 0


def test_identical_features():
    X = np.ones((40, 3))
    y = np.r_[np.zeros(20), np.ones(20)]
    m = train_lr(X, y)
    np.testing.assert_allclose(m.predict_proba(X), 0.5, atol=1e-6)
    assert np.abs(m.weights).max() < 1e-9


def test_gaussian_fixture_near_bayes():
    rng = np.random.default_rng(0)
    mu0, mu1 = np.array([0.0, 0.0]), np.array([1.0, 0.5])
    cov = np.array([[1.0, 0.3], [0.3, 1.0]])

    def sample(n):
        y = rng.random(n) < 0.4
        X = np.where(y[:, None], rng.multivariate_normal(mu1, cov, n), rng.multivariate_normal(mu0, cov, n))
        return X, y.astype(int)

    X, y = sample(4000)
    Xt, yt = sample(20000)
    m = train_lr(X, y, LrConfig(C=1.0))
    # shared covariance: the Bayes score is linear, its AUROC is Phi(Mahalanobis / sqrt 2)
    diff = mu1 - mu0
    bayes = stats.norm.cdf(np.sqrt(diff @ np.linalg.solve(cov, diff)) / np.sqrt(2))
    assert abs(auroc(yt, m.predict_proba(Xt)) - bayes) <= 0.02


def test_zero_weights_give_half():
    m = LrModel(["a", "b"], np.zeros(2), 0.0)
    np.testing.assert_array_equal(m.predict_proba(np.random.default_rng(0).normal(size=(5, 2))), 0.5)


def test_dimension_mismatch_names_lengths():
    m = LrModel(["a", "b"], np.zeros(2), 0.0)
    with pytest.raises(DimensionMismatchError, match="expected 2 features, got 3"):
        m.predict_proba(np.zeros((1, 3)))


def test_single_class_rejected():
    with pytest.raises(DegenerateLabelError):
        train_lr(np.zeros((5, 2)), np.ones(5))


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(300, 8))
    y = (X[:, 0] - 0.5 * X[:, 1] + rng.normal(size=300) > 0).astype(int)
    return X, y


@pytest.mark.parametrize("penalty", ["l1", "l2"])
def test_loss_non_increasing_and_converged(data, penalty):
    X, y = data
    m = train_lr(X, y, LrConfig(C=0.5, penalty=penalty))
    assert m.converged
    h = np.array(m.loss_history)
    assert np.all(np.diff(h) <= 1e-12)


def test_l1_produces_exact_zeros(data):
    X, y = data
    m = train_lr(X, y, LrConfig(C=0.02, penalty="l1"))
    assert (m.weights == 0).sum() >= 3
    assert m.weights[0] > 0


@pytest.mark.parametrize("penalty", ["l1", "l2"])
def test_norm_non_increasing_as_c_decreases(data, penalty):
    X, y = data
    norms = [np.linalg.norm(train_lr(X, y, LrConfig(C=c, penalty=penalty)).weights)
             for c in (100.0, 10.0, 1.0, 0.1, 0.01, 0.001)]
    assert np.all(np.diff(norms) <= 1e-6), norms


def test_deterministic(data):
    X, y = data
    assert train_lr(X, y).to_text() == train_lr(X, y).to_text()


def test_column_permutation_invariance(data):
    X, y = data
    perm = np.random.default_rng(1).permutation(X.shape[1])
    a = train_lr(X, y, LrConfig(C=0.3)).predict_proba(X)
    b = train_lr(X[:, perm], y, LrConfig(C=0.3)).predict_proba(X[:, perm])
    np.testing.assert_allclose(a, b, atol=1e-9, rtol=0)


def test_constant_columns_get_zero_weight(data):
    X, y = data
    Xc = np.c_[X, np.full(len(X), 3.0)]
    m = train_lr(Xc, y)
    assert m.weights[-1] == 0.0


def test_text_round_trip(data):
    X, y = data
    m = train_lr(X, y, LrConfig(C=0.7, penalty="l1"), columns=[f"h{j}|x" for j in range(8)])
    back = LrModel.from_text(m.to_text())
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))
    assert back.config == m.config and back.columns == m.columns


@pytest.fixture(scope="module")
def wide():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 200))
    y = (X[:, 0] - X[:, 1] + rng.normal(scale=0.5, size=40) > 0).astype(int)
    return X, y


def objective(m, X, y):
    z = X @ m.weights + m.intercept
    lam = 1.0 / (m.config.C * len(y))
    pen = 0.5 * lam * m.weights @ m.weights if m.config.penalty == "l2" else lam * np.abs(m.weights).sum()
    return np.mean(np.logaddexp(0, z) - y * z) + pen


def test_wide_l2_row_space_matches_primal(wide, monkeypatch):
    X, y = wide
    fast = train_lr(X, y, LrConfig(C=0.5))
    monkeypatch.setattr(L, "_row_space_factor", lambda X, gram=None: None)
    slow = train_lr(X, y, LrConfig(C=0.5))
    assert fast.converged and slow.converged
    assert abs(objective(fast, X, y) - objective(slow, X, y)) < 1e-10
    np.testing.assert_allclose(fast.predict_proba(X), slow.predict_proba(X), atol=1e-6)


@pytest.mark.parametrize("C", [0.3, 3.0])
def test_l1_working_set_matches_full_solve(wide, monkeypatch, C):
    X, y = wide
    monkeypatch.setattr(L, "WORKING_SET_MIN", 4)
    small = train_lr(X, y, LrConfig(C=C, penalty="l1"))
    monkeypatch.setattr(L, "WORKING_SET_MIN", 10**6)
    full = train_lr(X, y, LrConfig(C=C, penalty="l1"))
    assert small.converged and full.converged
    assert abs(objective(small, X, y) - objective(full, X, y)) < 1e-8
    assert np.all(np.diff(small.loss_history) <= 1e-12)


def test_shared_gram_and_constant_columns(wide):
    X, y = wide
    Xc = np.c_[X, np.full(len(X), 2.0)]
    base = train_lr(X, y, LrConfig(C=0.5))
    shared = train_lr(Xc, y, LrConfig(C=0.5), gram=Xc @ Xc.T)
    assert shared.converged and shared.weights[-1] == 0.0
    np.testing.assert_allclose(shared.predict_proba(Xc), base.predict_proba(X), atol=1e-6)
