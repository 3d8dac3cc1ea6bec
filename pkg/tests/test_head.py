import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pemm import autodiff as ad
from pemm.autodiff import ParamSet, finite_diff_check, forward_backward
from pemm.head import (HeadConfig, kernel_distances, kernel_distances_op, normalize_features,
                       posterior, posterior_from_features, posterior_op, predict, sq_distances)


def test_normalize_rows(caplog):
    np.testing.assert_allclose(normalize_features([[3.0, 4.0]]), [[0.6, 0.8]], atol=1e-12)
    u = np.array([[0.0, 1.0, 0.0]])
    np.testing.assert_allclose(normalize_features(u), u, atol=1e-12)
    with caplog.at_level(logging.WARNING):
        out = normalize_features(np.zeros((2, 3)))
    assert not out.any()
    assert any("zero row" in r.message for r in caplog.records)


def test_kernel_values():
    C = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.5]])
    d = kernel_distances(np.array([[0.0, 0.0]]), C)
    assert d[0, 0] == 1.0
    assert d[0, 1] == pytest.approx(math.exp(-1), abs=1e-15)
    assert d[0, 1] == pytest.approx(0.367879, abs=1e-6)
    assert d[0, 2] == pytest.approx(math.exp(-0.25), abs=1e-15)
    with pytest.raises(ValueError):
        kernel_distances(np.zeros((1, 3)), C)


def test_posterior_values():
    np.testing.assert_allclose(posterior(np.full((1, 4), 0.3)), [[0.25] * 4], atol=1e-15)
    np.testing.assert_allclose(posterior(np.array([[1.0, 0.25]])), [[0.8, 0.2]], atol=1e-15)


def test_predict_exact_hit():
    C = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    assert predict(C[2:3], C)[0] == 2


def test_predict_tie_lowest_index():
    # origin is equidistant from classes 1 and 3, farther from 0 and 2
    C = np.array([[3.0, 0.0], [0.0, 1.0], [5.0, 5.0], [0.0, -1.0]])
    assert predict(np.zeros((1, 2)), C)[0] == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_posterior_rows_and_brute_force_predict(seed):
    rng = np.random.default_rng(seed)
    z, C = rng.normal(size=(200, 5)), rng.normal(size=(6, 5))
    p = posterior_from_features(z, C)
    assert np.all(p > 0)
    assert np.max(np.abs(p.sum(axis=1) - 1)) < 1e-12
    brute = [min(range(6), key=lambda k: float(np.sum((row - C[k]) ** 2))) for row in z]
    np.testing.assert_array_equal(predict(z, C), brute)
    # agrees with the direct ratio where nothing underflows
    np.testing.assert_allclose(p, posterior(kernel_distances(z, C)), atol=1e-12)


def test_posterior_shift_invariance(rng):
    z, C = rng.normal(size=(50, 4)), rng.normal(size=(5, 4))
    D = sq_distances(z, C)
    shift = rng.normal(size=(50, 1))
    p1 = posterior(np.exp(-D))
    p2 = posterior(np.exp(-(D + shift)))
    assert np.max(np.abs(p1 - p2)) < 1e-12


def test_predict_invariant_to_monotone_transform(rng):
    z, C = rng.normal(size=(300, 4)), rng.normal(size=(5, 4))
    d = kernel_distances(z, C)
    pred = predict(z, C)
    for f in (np.log, np.sqrt, lambda x: x ** 3 + 2 * x):
        np.testing.assert_array_equal(np.argmax(f(d), axis=1), pred)


def test_posterior_gradients(rng):
    w = rng.normal(size=(3,))
    f = lambda L: ad.sum(ad.matmul(posterior_op(kernel_distances_op(L["z"], L["C"])), ad.Tensor(w[:, None])))
    for _ in range(10):
        P = ParamSet({"z": rng.normal(size=(4, 2)), "C": rng.normal(size=(3, 2))})
        _, g = forward_backward(f, P)
        rep = finite_diff_check(lambda ps: float(f({k: ad.Tensor(v) for k, v in ps.values.items()}).data),
                                P, g, h=1e-5, tol=1e-6)
        assert rep.passed, rep


def test_sigma_enters_squared():
    C = np.array([[1.0, 0.0]])
    d = kernel_distances(np.zeros((1, 2)), C, HeadConfig(sigma=2.0))
    assert d[0, 0] == pytest.approx(math.exp(-0.25), abs=1e-15)
    with pytest.raises(ValueError):
        HeadConfig(sigma=0.0)
