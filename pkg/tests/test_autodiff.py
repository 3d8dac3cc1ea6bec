import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pemm import autodiff as ad
from pemm.autodiff import NonFiniteError, ParamSet, ShapeError, finite_diff_check, forward_backward


def test_square_value_and_gradient():
    out, g = forward_backward(lambda P: ad.power(P["w"], 2), ParamSet({"w": 3.0}))
    assert float(out.data) == 9.0
    assert float(g.grads["w"]) == 6.0


def test_l2_normalize_value():
    out = ad.l2_normalize(ad.Tensor([3.0, 4.0]))
    np.testing.assert_allclose(out.data, [0.6, 0.8], atol=1e-12)


def test_l2_normalize_jvp_matches_central_differences(rng):
    v = np.array([3.0, 4.0])
    h = 1e-5
    for _ in range(10):
        direction = rng.normal(size=2)
        num = (ad.l2_normalize(ad.Tensor(v + h * direction)).data
               - ad.l2_normalize(ad.Tensor(v - h * direction)).data) / (2 * h)
        # J is symmetric for this map, so J d = J^T d
        leaf = ad.Tensor(v, requires_grad=True)
        ad.sum(ad.mul(ad.l2_normalize(leaf), ad.Tensor(direction))).backward()
        rel = np.abs(leaf.grad - num) / np.maximum(1.0, np.abs(num))
        assert rel.max() < 1e-6


def test_relu_at_zero_has_zero_subgradient():
    leaf = ad.Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
    out = ad.relu(leaf)
    ad.sum(out).backward()
    np.testing.assert_array_equal(out.data, [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(leaf.grad, [0.0, 1.0, 0.0])


def test_finite_diff_cubic():
    rep = finite_diff_check(lambda P: float(P["w"] ** 3), ParamSet({"w": 2.0}),
                            {"w": np.array(12.0)}, h=1e-5, tol=1e-8)
    assert rep.passed and rep.max_rel_err < 1e-8


def test_finite_diff_flags_kink():
    rep = finite_diff_check(lambda P: float(abs(P["w"])), ParamSet({"w": 0.0}),
                            {"w": np.array(0.0)}, h=1e-5, tol=1e-6)
    assert not rep.passed
    assert "non-differentiable" in rep.failure


def test_finite_diff_flags_non_finite():
    rep = finite_diff_check(lambda P: float(P["w"]), ParamSet({"w": 1.0}),
                            {"w": np.array(np.nan)}, h=1e-5, tol=1e-6)
    assert not rep.passed and "non-finite" in rep.failure


def test_finite_diff_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_check(lambda P: 0.0, ParamSet({"w": 1.0}), {"w": np.zeros(())}, h=1.0)


def test_shape_errors_name_the_op():
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError, match="add_bias"):
        ad.add_bias(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ShapeError, match="sq_distances"):
        ad.sq_distances(np.ones((2, 3)), np.ones((4, 2)))


def test_non_finite_forward_is_an_error():
    with pytest.raises(NonFiniteError, match="exp"), np.errstate(over="ignore"):
        ad.exp(np.array([1000.0]))
    with pytest.raises(NonFiniteError, match="log"):
        ad.log(np.array([0.0]))


PRIMITIVES = {
    "matmul": lambda P: ad.sum(ad.matmul(P["a"], P["b"])),
    "add_bias": lambda P: ad.sum(ad.power(ad.add_bias(P["a"], P["v"]), 2)),
    "exp": lambda P: ad.sum(ad.exp(P["a"])),
    "log": lambda P: ad.sum(ad.log(ad.exp(P["a"]))),
    "power": lambda P: ad.sum(ad.power(ad.exp(P["a"]), -1.5)),
    "l2_normalize": lambda P: ad.sum(ad.power(ad.l2_normalize(P["a"]), 3)),
    "sum_axis": lambda P: ad.sum(ad.power(ad.sum(P["a"], axis=1), 2)),
    "mean": lambda P: ad.power(ad.mean(P["a"]), 3),
    "sq_distances": lambda P: ad.sum(ad.exp(ad.scale(ad.sq_distances(P["a"], P["c"]), -0.5))),
    "divide_rows": lambda P: ad.sum(ad.power(ad.divide_rows(P["a"], ad.sum(ad.exp(P["a"]), axis=1)), 2)),
    "pick": lambda P: ad.sum(ad.exp(ad.pick(P["a"], np.array([0, 3, 1])))),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_at_random_points(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    build = PRIMITIVES[name]
    worst = 0.0
    for _ in range(100):
        P = ParamSet({"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2)),
                      "v": rng.normal(size=4), "c": rng.normal(size=(5, 4))})
        _, g = forward_backward(lambda L: build(L), P)
        rep = finite_diff_check(lambda ps: float(build({k: ad.Tensor(v) for k, v in ps.values.items()}).data),
                                P, g, h=1e-5, tol=1e-6, n_coords=6, rng=rng)
        assert rep.failure == ""
        worst = max(worst, rep.max_rel_err)
    assert worst < 1e-6


def test_relu_gradient_away_from_kink(rng):
    a = rng.normal(size=(4, 5))
    a[np.abs(a) < 0.05] = 0.3
    P = ParamSet({"a": a})
    f = lambda L: ad.sum(ad.mul(ad.relu(L["a"]), L["a"]))
    _, g = forward_backward(f, P)
    rep = finite_diff_check(lambda ps: float(f({"a": ad.Tensor(ps["a"])}).data), P, g, tol=1e-6)
    assert rep.passed


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gradient_of_sum_is_sum_of_gradients(seed):
    rng = np.random.default_rng(seed)
    P = ParamSet({"a": rng.normal(size=(3, 3))})
    f1 = lambda L: ad.sum(ad.exp(L["a"]))
    f2 = lambda L: ad.sum(ad.power(L["a"], 2))
    _, g1 = forward_backward(f1, P)
    _, g2 = forward_backward(f2, P)
    _, g12 = forward_backward(lambda L: f1(L) + f2(L), P)
    np.testing.assert_allclose(g12.grads["a"], g1.grads["a"] + g2.grads["a"], rtol=0, atol=1e-12)


def test_forward_backward_is_bitwise_deterministic(rng):
    P = ParamSet({"a": rng.normal(size=(5, 4)), "c": rng.normal(size=(3, 4))})
    f = lambda L: ad.sum(ad.exp(ad.scale(ad.sq_distances(ad.l2_normalize(L["a"]), L["c"]), -1.0)))
    o1, g1 = forward_backward(f, P)
    o2, g2 = forward_backward(f, P)
    assert o1.data.tobytes() == o2.data.tobytes()
    for k in P:
        assert g1.grads[k].tobytes() == g2.grads[k].tobytes()


def test_paramset_shapes_and_zeroing():
    P = ParamSet({"w": np.ones((2, 3)), "b": np.ones(3)})
    assert all(P.grads[k].shape == P[k].shape for k in P)
    P.grads["w"] += 1.0
    P.zero_grad()
    assert not P.grads["w"].any()
    with pytest.raises(ShapeError):
        ParamSet({"w": np.ones(2)}, {"w": np.ones(3)})
