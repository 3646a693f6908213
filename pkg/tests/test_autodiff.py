import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from unmt import autodiff as ad
from unmt.errors import ContractError, DimensionError, NumericError

finite = st.floats(-3, 3, allow_nan=False, width=64)


def P(x):
    return ad.parameter(np.asarray(x, dtype=np.float64))


# -- forward values -------------------------------------------------------------
def test_matmul_identity(f64):
    a = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(ad.matmul(ad.Tensor(np.eye(3)), ad.Tensor(a)).data, a)


def test_softmax_symmetric():
    np.testing.assert_allclose(ad.softmax(ad.Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_cross_entropy_uniform():
    ce = ad.cross_entropy(ad.Tensor([[0.0, 0.0]]), np.array([0]))
    assert ce.item() == pytest.approx(np.log(2), abs=1e-6)


def test_masked_softmax_zero_weight():
    p = ad.softmax(ad.Tensor([[1.0, 2.0, 3.0]]), mask=np.array([[True, True, False]])).data
    assert p[0, 2] == 0
    assert p.sum() == pytest.approx(1.0)


def test_leaky_relu_slope():
    out = ad.leaky_relu(ad.Tensor([-1.0, 2.0]), 0.2).data
    np.testing.assert_allclose(out, [-0.2, 2.0])


def test_default_dtype_is_float32():
    assert ad.Tensor([1.0]).data.dtype == np.float32
    with ad.precision(np.float64):
        assert ad.Tensor([1.0]).data.dtype == np.float64


def test_shape_mismatch_names_op_and_shapes():
    with pytest.raises(DimensionError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError, match="add"):
        ad.add(ad.Tensor(np.ones(3)), ad.Tensor(np.ones(4)))


def test_no_grad_records_nothing():
    x = ad.parameter([1.0])
    with ad.no_grad():
        y = x * x
    assert y._parents == () and not y.requires_grad


# -- backward -------------------------------------------------------------------
def test_square_derivative():
    x = ad.parameter(3.0)
    ad.backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_sigmoid_derivative_at_zero():
    x = ad.parameter(np.zeros(4))
    ad.backward(ad.sigmoid(x).sum())
    np.testing.assert_allclose(x.grad, 0.25)


def test_backward_requires_scalar():
    x = ad.parameter(np.ones(3))
    with pytest.raises(ContractError):
        ad.backward(x * 2.0)


def test_gradients_accumulate_over_uses():
    x = ad.parameter(2.0)
    y = x * x + x * 3.0 + x
    ad.backward(y)
    assert x.grad == pytest.approx(2 * 2.0 + 3.0 + 1.0)


def test_backward_returns_leaf_map():
    a, b = ad.parameter([1.0, 2.0]), ad.parameter([3.0, 4.0])
    grads = ad.backward((a * b).sum())
    np.testing.assert_allclose(grads[a], [3.0, 4.0])
    np.testing.assert_allclose(grads[b], [1.0, 2.0])


def test_deep_chain_does_not_recurse():
    x = ad.parameter(1.0)
    y = x
    for _ in range(5000):
        y = y * 1.0
    ad.backward(y)
    assert x.grad == pytest.approx(1.0)


# -- gradient checks on every primitive (double precision) ----------------------
rng = np.random.default_rng(0)
A = rng.normal(size=(3, 4))
B = rng.normal(size=(4, 5))
ids = np.array([[0, 2, 1], [3, 3, 0]])
mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)

PRIMITIVES = {
    "add": (lambda a, b: (a + b).sum(), [A, A[0]]),
    "sub": (lambda a, b: (a - b * b).sum(), [A, A]),
    "mul": (lambda a, b: (a * b).sum(), [A, A[:, :1]]),
    "sigmoid": (lambda a: ad.sigmoid(a).sum(), [A]),
    "tanh": (lambda a: (ad.tanh(a) * ad.tanh(a)).sum(), [A]),
    "relu": (lambda a: ad.relu(a).sum(), [A + 0.05]),
    "leaky_relu": (lambda a: ad.leaky_relu(a, 0.2).sum(), [A + 0.05]),
    "matmul": (lambda a, b: ad.tanh(a @ b).sum(), [A, B]),
    "batched_matmul": (lambda a, b: ad.tanh(ad.matmul(a, ad.transpose(b))).sum(),
                       [rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 5, 4))]),
    "concat": (lambda a, b: ad.tanh(ad.concat([a, b], axis=-1)).sum(),
               [A, rng.normal(size=(3, 2))]),
    "slice": (lambda a: ad.tanh(a[1:, ::2]).sum(), [A]),
    "fancy_index": (lambda a: ad.tanh(a[np.array([0, 2, 0])]).sum(), [A]),
    "embedding": (lambda t: ad.tanh(ad.embedding(t, ids)).sum(), [rng.normal(size=(4, 3))]),
    "sum_axis": (lambda a: ad.tanh(a.sum(axis=0)).sum(), [A]),
    "mean": (lambda a: ad.tanh(a.mean(axis=1, keepdims=True) * a).sum(), [A]),
    "reshape": (lambda a: ad.tanh(a.reshape(6, 2) @ ad.Tensor(np.ones((2, 1)))).sum(), [A]),
    "softmax": (lambda a: (ad.softmax(a) * ad.Tensor(np.arange(4.0))).sum(), [A]),
    "masked_softmax": (lambda a: (ad.softmax(a, mask) * ad.Tensor(np.arange(3.0))).sum(), [A[:2, :3]]),
    "log_softmax": (lambda a: (ad.log_softmax(a) * ad.Tensor(np.arange(4.0))).sum(), [A]),
    "cross_entropy": (lambda a: ad.cross_entropy(a, ids, mask), [rng.normal(size=(2, 3, 4))]),
    "cross_entropy_mean": (lambda a: ad.cross_entropy(a, ids, mask, reduction="mean"), [rng.normal(size=(2, 3, 4))]),
    "bce_with_logits": (lambda a: ad.bce_with_logits(a, np.full(A.shape, 0.9)).sum(), [A]),
    "lstm_scan": (lambda gx, w, h0: ad.tanh(ad.lstm_scan(gx, w, h0, mask)).sum(),
                  [rng.normal(size=(2, 3, 8)), rng.normal(size=(2, 8)) * 0.5, rng.normal(size=(2, 2))]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradient(name, f64):
    fn, inputs = PRIMITIVES[name]
    params = [P(x.copy()) for x in inputs]
    err = ad.grad_check(lambda: fn(*params), params, eps=1e-5, n_samples=30)
    assert err <= 1e-6, f"{name}: {err}"


def test_grad_check_reports_nonfinite(f64):
    x = P([1.0])
    with pytest.raises(NumericError, match="x"):
        x.name = "x"
        ad.grad_check(lambda: (x * np.inf).sum(), [x])


def test_grad_check_detects_wrong_gradient(f64):
    x = P([0.3, -0.7])

    def bad():
        y = ad.tanh(x)
        orig = y._backward
        y._backward = lambda g: tuple(2 * t for t in orig(g))
        return y.sum()

    assert ad.grad_check(bad, [x]) > 0.1


# -- properties -----------------------------------------------------------------
@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    p = ad.softmax(ad.Tensor(x.astype(np.float32))).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, rtol=1e-5)
    assert (p >= 0).all()


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=finite))
def test_cross_entropy_matches_log_softmax(x):
    with ad.precision(np.float64):
        t = np.zeros(x.shape[0], dtype=int)
        ce = ad.cross_entropy(ad.Tensor(x), t).item()
        ref = -ad.log_softmax(ad.Tensor(x)).data[:, 0].sum()
    assert ce == pytest.approx(ref, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite), arrays(np.float64, st.integers(1, 8), elements=finite))
def test_gradient_shapes_match_data(a, b):
    with ad.precision(np.float64):
        x, y = ad.parameter(a), ad.parameter(b[:1])
        ad.backward(ad.tanh(x * y + x).sum())
    assert x.grad.shape == x.data.shape and y.grad.shape == y.data.shape


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4))
def test_lstm_scan_carries_state_past_length(lengths):
    r = np.random.default_rng(len(lengths))
    B, T, H = len(lengths), max(lengths), 3
    m = np.arange(T)[None, :] < np.array(lengths)[:, None]
    with ad.precision(np.float64):
        hs = ad.lstm_scan(ad.Tensor(r.normal(size=(B, T, 4 * H))), ad.Tensor(r.normal(size=(H, 4 * H))),
                          ad.Tensor(np.zeros((B, H))), m).data
    for b, n in enumerate(lengths):
        np.testing.assert_array_equal(hs[b, n - 1], hs[b, -1])
