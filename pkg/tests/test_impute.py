import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import scan_oracle
from ehrshift.represent.impute import simple_impute
from ehrshift.represent.tensors import HourlyTensor

H = 24


def one_feature(col):
    return HourlyTensor([1], ["f"], np.asarray(col, dtype=float).reshape(1, -1, 1))


def test_single_observation_at_hour_zero():
    col = np.full(H, np.nan)
    col[0] = 1.7
    imp = simple_impute(one_feature(col), H)
    np.testing.assert_array_equal(imp.value[0, :, 0], np.full(H, 1.7))
    np.testing.assert_array_equal(imp.mask[0, :, 0], np.r_[1.0, np.zeros(H - 1)])
    expected = np.zeros(H)
    for h in range(1, H):
        expected[h] = expected[h - 1] + 1 / H
    np.testing.assert_array_equal(imp.delta[0, :, 0], expected)
    np.testing.assert_allclose(imp.delta[0, :, 0], np.arange(H) / H, atol=1e-12)


def test_fully_observed():
    col = np.linspace(-1, 1, H)
    imp = simple_impute(one_feature(col), H)
    np.testing.assert_array_equal(imp.value[0, :, 0], col)
    assert (imp.mask == 1).all() and (imp.delta == 0).all()


def test_never_observed():
    imp = simple_impute(one_feature(np.full(H, np.nan)), H)
    assert (imp.value == 0).all() and (imp.mask == 0).all()
    np.testing.assert_allclose(imp.delta[0, :, 0], np.arange(1, H + 1) / H, atol=1e-12)
    assert imp.delta[0, -1, 0] == scan_oracle(np.full(H, np.nan), H)[2][-1]


def test_fifty_random_fixtures_match_scan():
    rng = np.random.default_rng(50)
    for _ in range(50):
        n, d = rng.integers(1, 5), rng.integers(1, 6)
        vals = rng.normal(size=(n, H, d))
        vals[rng.random((n, H, d)) < rng.uniform(0.2, 0.95)] = np.nan
        imp = simple_impute(HourlyTensor(np.arange(n), [f"c{j}" for j in range(d)], vals), H)
        for i in range(n):
            for j in range(d):
                v, m, dl = scan_oracle(vals[i, :, j], H)
                np.testing.assert_array_equal(imp.value[i, :, j], v)
                np.testing.assert_array_equal(imp.mask[i, :, j], m)
                np.testing.assert_array_equal(imp.delta[i, :, j], dl)


@given(arrays(np.float64, (2, 12, 3), elements=st.one_of(st.just(np.nan), st.floats(-3, 3))))
@settings(max_examples=60, deadline=None)
def test_invariants(vals):
    imp = simple_impute(HourlyTensor([1, 2], ["a", "b", "c"], vals), 12)
    assert set(np.unique(imp.mask)) <= {0.0, 1.0}
    assert not np.isnan(imp.value).any()
    assert (imp.delta[imp.mask == 1] == 0).all()
    # between observations delta grows by one step per hour
    gaps = (imp.mask[:, 1:] == 0)
    np.testing.assert_allclose((imp.delta[:, 1:] - imp.delta[:, :-1])[gaps], 1 / 12, atol=1e-12)


def test_mask_and_delta_come_from_observation_pattern():
    a = np.full(H, np.nan)
    a[0] = 2.0
    b = np.full(H, 2.0)  # same forward-filled value channel
    ia, ib = simple_impute(one_feature(a), H), simple_impute(one_feature(b), H)
    np.testing.assert_array_equal(ia.value, ib.value)
    assert not np.array_equal(ia.mask, ib.mask)
    assert not np.array_equal(ia.delta, ib.delta)


def test_dense_channel_layout():
    vals = np.full((1, H, 2), np.nan)
    vals[0, 3, 1] = 5.0
    dense = simple_impute(HourlyTensor([9], ["a", "b"], vals), H).dense()
    assert dense.columns == ["a:value", "a:mask", "a:delta", "b:value", "b:mask", "b:delta"]
    assert dense.values[0, 3, 3] == 5.0 and dense.values[0, 3, 4] == 1.0 and dense.values[0, 3, 5] == 0.0
    assert dense.flatten().shape == (1, H * 6)
