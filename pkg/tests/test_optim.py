import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unmt import autodiff as ad
from unmt.errors import ContractError, DimensionError
from unmt.optim import OptimizerState, adam_step, clip_grad_norm, rmsprop_step


def test_zero_gradient_leaves_params_and_counts_step():
    p = ad.parameter([1.0, -2.0])
    for make, step in ((OptimizerState.adam, adam_step), (OptimizerState.rmsprop, rmsprop_step)):
        st_ = make([p])
        step([p], [np.zeros(2, dtype=np.float32)], st_)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert st_.step == 1


def test_adam_first_step_is_lr_times_sign():
    p = ad.parameter([0.0, 0.0, 0.0])
    s = OptimizerState.adam([p], lr=1e-3)
    adam_step([p], [np.array([3.0, -0.02, 40.0], dtype=np.float32)], s)
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3, -1e-3], rtol=1e-4)


def test_rmsprop_constant_gradient_fixed_point():
    p = ad.parameter([0.0])
    s = OptimizerState.rmsprop([p], lr=5e-4)
    g = np.array([0.7], dtype=np.float32)
    for _ in range(3000):
        before = p.data.copy()
        rmsprop_step([p], [g], s)
    assert float((before - p.data)[0]) == pytest.approx(5e-4, rel=1e-3)


def test_defaults():
    p = ad.parameter([0.0])
    a = OptimizerState.adam([p])
    r = OptimizerState.rmsprop([p])
    assert (a.lr, a.beta1) == (3e-4, 0.5)
    assert r.lr == 5e-4


def test_kind_and_shape_checks():
    p = ad.parameter(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        rmsprop_step([p], [np.zeros((2, 2))], OptimizerState.adam([p]))
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(3)], OptimizerState.adam([p]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20))
def test_step_counter_increments_by_one(n):
    p = ad.parameter([1.0])
    s = OptimizerState.adam([p])
    for i in range(n):
        adam_step([p], [np.ones(1, dtype=np.float32)], s)
        assert s.step == i + 1


def test_clip_does_not_scale_aliases_twice():
    g = np.array([3.0, 4.0])
    out, norm = clip_grad_norm([g, g], 5.0)
    assert norm == pytest.approx(np.sqrt(50))
    np.testing.assert_allclose(g, [3.0, 4.0])
    total = np.sqrt(sum((x ** 2).sum() for x in out))
    assert total == pytest.approx(5.0, rel=1e-5)


def test_clip_below_threshold_is_identity():
    g = [np.array([0.1, 0.2])]
    out, _ = clip_grad_norm(g, 5.0)
    assert out[0] is g[0]
