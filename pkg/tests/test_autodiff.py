import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdln import autodiff as ad
from cdln.errors import ConfigError, ContractError, DimensionError, HarnessError


def T(x):
    return ad.Tensor(np.asarray(x, dtype=float))


def P(name, x):
    return ad.Parameter(name, np.asarray(x, dtype=float))


# -- linear -----------------------------------------------------------------

def test_linear_identity():
    out = ad.linear_forward(T(np.eye(2)), T([3, -1]), T([0, 0]))
    np.testing.assert_array_equal(out.data, [3, -1])


def test_linear_hand_example():
    out = ad.linear_forward(T([[1, 2], [3, 4]]), T([1, 1]), T([1, 1]))
    np.testing.assert_array_equal(out.data, [4, 8])


def test_linear_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2,\)"):
        ad.linear_forward(T(np.ones((2, 3))), T([1, 1]), T([0, 0]))


# -- activations ------------------------------------------------------------

@pytest.mark.parametrize("kind,x,expected", [
    ("tanh", [0.0], [0.0]),
    ("sigmoid", [0.0], [0.5]),
    ("relu", [-2.0, 3.0], [0.0, 3.0]),
])
def test_activation_values(kind, x, expected):
    np.testing.assert_array_equal(ad.activation_apply(kind, T(x)).data, expected)


def test_unknown_activation():
    with pytest.raises(ConfigError):
        ad.activation_apply("gelu", T([0.0]))


def test_sigmoid_is_finite_for_extreme_inputs():
    out = ad.sigmoid(T([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[1] == 1.0


# -- conv1d -----------------------------------------------------------------

def test_conv_box_kernel():
    out = ad.conv1d_forward(T([[1, 2, 3, 4]]), T([[[1, 1, 1]]]), stride=1, padding="valid")
    np.testing.assert_allclose(out.data, [[6, 9]])


def test_conv_kernel_longer_than_signal():
    with pytest.raises(DimensionError):
        ad.conv1d_forward(T([[1, 2]]), T([[[1, 1, 1]]]), padding="valid")


def test_conv_cross_correlation_convention():
    # an asymmetric kernel is applied without flipping
    out = ad.conv1d_forward(T([[1, 2, 3]]), T([[[1, 0]]]))
    np.testing.assert_allclose(out.data, [[1, 2]])


def test_conv_same_length_and_stride():
    x = np.random.default_rng(0).normal(size=(2, 11))
    k = np.random.default_rng(1).normal(size=(3, 2, 4))
    out = ad.conv1d_forward(T(x), T(k), stride=3, padding="same")
    assert out.shape == (3, ad.conv_output_length(11, 4, 3, "same")) == (3, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 40), st.sampled_from(["valid", "same"]), st.integers(0, 2**31 - 1))
def test_conv_identity_kernel(channels, length, padding, seed):
    x = np.random.default_rng(seed).normal(size=(channels, length))
    ident = np.eye(channels)[:, :, None]
    out = ad.conv1d_forward(T(x), T(ident), padding=padding)
    np.testing.assert_allclose(out.data, x, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2, 3])
@pytest.mark.parametrize("padding", ["valid", "same"])
def test_conv_fft_matches_direct(stride, padding):
    rng = np.random.default_rng(stride)
    x = P("x", rng.normal(size=(3, 57)))
    k = P("k", rng.normal(size=(4, 3, 9)))
    outs, grads = [], []
    for method in ("direct", "fft"):
        ad.zero_grad([x, k])
        out = ad.conv1d_forward(x, k, stride, padding, method=method)
        g = np.random.default_rng(7).normal(size=out.shape)
        ad.backward(ad.total(ad.mul(out, T(g))))
        outs.append(out.data)
        grads.append((x.grad.copy(), k.grad.copy()))
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-11)
    np.testing.assert_allclose(grads[0][0], grads[1][0], atol=1e-11)
    np.testing.assert_allclose(grads[0][1], grads[1][1], atol=1e-11)


# -- avgpool ----------------------------------------------------------------

def test_avgpool_examples():
    np.testing.assert_array_equal(ad.avgpool1d_forward(T([[1, 3, 5, 7]]), 2, 2).data, [[2, 6]])
    np.testing.assert_array_equal(ad.avgpool1d_forward(T([[5, 5, 5]]), 3, 1).data, [[5]])


@pytest.mark.parametrize("window,stride", [(0, 1), (1, 0)])
def test_avgpool_rejects_nonpositive(window, stride):
    with pytest.raises(ConfigError):
        ad.avgpool1d_forward(T([[1, 2, 3]]), window, stride)


def test_avgpool_window_too_long():
    with pytest.raises(DimensionError):
        ad.avgpool1d_forward(T([[1, 2, 3]]), 4, 1)


def test_avgpool_same_length():
    out = ad.avgpool1d_forward(T(np.ones((1, 50_000))), 90, 4, padding="same")
    assert out.shape == (1, 12_500)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(1, 60), st.integers(1, 10), st.integers(1, 5),
       st.sampled_from(["valid", "same"]))
def test_avgpool_constant_signal(c, length, window, stride, padding):
    if ad.pool_output_length(length, window, stride, padding) < 1:
        return
    out = ad.avgpool1d_forward(T(np.full((2, length), c)), window, stride, padding)
    np.testing.assert_allclose(out.data, c, rtol=1e-12, atol=1e-9)


# -- dropout ----------------------------------------------------------------

def test_dropout_rate_zero_and_inference_are_identity():
    x = T(np.arange(5.0))
    assert ad.dropout_apply(x, 0.0, True, 1) is x
    assert ad.dropout_apply(x, 0.7, False, 1) is x


def test_dropout_preserves_mean():
    out = ad.dropout_apply(T(np.ones(10_000)), 0.5, True, 1234)
    assert abs(out.data.mean() - 1.0) < 0.05
    assert set(np.unique(out.data)) <= {0.0, 2.0}


def test_dropout_rejects_rate_one():
    with pytest.raises(ConfigError):
        ad.dropout_apply(T([1.0]), 1.0, True, 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.floats(0, 0.99))
def test_dropout_inference_bit_identical(values, rate):
    x = T(values)
    assert np.array_equal(ad.dropout_apply(x, rate, False, 0).data, x.data)


# -- backward ---------------------------------------------------------------

def test_backward_rows_equal_input():
    W = P("W", np.random.default_rng(0).normal(size=(3, 4)))
    x = T([1.0, -2.0, 0.5, 3.0])
    ad.backward(ad.total(ad.linear_forward(W, x)))
    np.testing.assert_array_equal(W.grad, np.tile(x.data, (3, 1)))


def test_unused_parameter_has_zero_gradient():
    used, unused = P("a", [1.0, 2.0]), P("b", [3.0])
    ad.backward(ad.total(ad.mul(used, used)))
    np.testing.assert_array_equal(unused.grad, [0.0])
    np.testing.assert_array_equal(used.grad, [2.0, 4.0])


def test_constant_loss_gives_zero_gradients():
    W = P("W", np.ones((2, 2)))
    ad.backward(T(3.0))
    np.testing.assert_array_equal(W.grad, 0.0)


def test_non_scalar_loss_rejected():
    W = P("W", np.ones(2))
    with pytest.raises(ContractError):
        ad.backward(ad.mul(W, W))


def test_adjoints_are_linear():
    rng = np.random.default_rng(3)
    W = P("W", rng.normal(size=(4, 3)))
    b = P("b", rng.normal(size=4))
    x = T(rng.normal(size=3))

    def loss1():
        return ad.total(ad.tanh(ad.linear_forward(W, x, b)))

    def loss2():
        return ad.dot(ad.sigmoid(ad.linear_forward(W, x, b)), T(rng_fixed))

    rng_fixed = rng.normal(size=4)
    ad.backward(loss1())
    ad.backward(loss2())
    separate = (W.grad.copy(), b.grad.copy())
    ad.zero_grad([W, b])
    ad.backward(ad.add(loss1(), loss2()))
    np.testing.assert_allclose(W.grad, separate[0], atol=1e-14)
    np.testing.assert_allclose(b.grad, separate[1], atol=1e-14)


def test_shared_subexpression_accumulates():
    a = P("a", [3.0])
    y = ad.mul(a, a)
    ad.backward(ad.total(ad.add(y, y)))
    np.testing.assert_array_equal(a.grad, [12.0])


def test_deep_chain_does_not_recurse():
    a = P("a", [0.5])
    y = a
    for _ in range(5000):
        y = ad.scale(y, 1.0)
    ad.backward(ad.total(y))
    assert a.grad[0] == 1.0


def test_no_grad_records_nothing():
    a = P("a", [1.0])
    with ad.no_grad():
        y = ad.mul(a, a)
    assert not y.requires_grad and y._parents == ()


# -- finite differences -----------------------------------------------------

def test_quadratic_passes_tightly():
    p = P("p", [1.5, -2.0, 0.25])
    A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.1], [0.0, 0.1, 3.0]])
    report = ad.finite_diff_check(lambda: ad.dot(p, ad.linear_forward(T(A), p)), [p])
    assert report.passed and report.max_rel_error < 1e-8


def test_corrupted_adjoint_is_caught():
    p = P("p", [0.3, -0.7])

    def bad_square(x):
        return ad._make(x.data ** 2, (x,), lambda g: (g * 3.0 * x.data,))

    report = ad.finite_diff_check(lambda: ad.total(bad_square(p)), [p])
    assert not report.passed


def test_nondeterministic_model_rejected():
    p = P("p", [1.0])
    rng = np.random.default_rng(0)
    with pytest.raises(HarnessError):
        ad.finite_diff_check(lambda: ad.total(ad.mul(p, T(rng.normal(size=1)))), [p])


def _random_primitive_case(seed):
    rng = np.random.default_rng(seed)
    kind = seed % 9
    if kind == 0:
        m, n = rng.integers(1, 6, size=2)
        W, x, b = P("W", rng.normal(size=(m, n))), P("x", rng.normal(size=n)), P("b", rng.normal(size=m))
        return (lambda: ad.total(ad.tanh(ad.linear_forward(W, x, b)))), [W, x, b]
    if kind in (1, 2, 3):
        act = ["tanh", "sigmoid", "relu"][kind - 1]
        x = P("x", rng.normal(size=rng.integers(1, 8)) + 0.05)
        w = T(rng.normal(size=x.shape))
        return (lambda: ad.dot(ad.activation_apply(act, x), w)), [x]
    if kind == 4:
        c_in, c_out, K = rng.integers(1, 4, size=3)
        L = int(rng.integers(K, K + 12))
        x, k = P("x", rng.normal(size=(c_in, L))), P("k", rng.normal(size=(c_out, c_in, K)))
        stride = int(rng.integers(1, 3))
        pad = ["valid", "same"][seed % 2]
        out_shape = ad.conv1d_forward(x, k, stride, pad).shape
        w = T(rng.normal(size=out_shape))
        return (lambda: ad.total(ad.mul(ad.conv1d_forward(x, k, stride, pad), w))), [x, k]
    if kind == 5:
        C, L = int(rng.integers(1, 3)), int(rng.integers(4, 20))
        window, stride = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        pad = ["valid", "same"][seed % 2]
        x = P("x", rng.normal(size=(C, L)))
        w = T(rng.normal(size=ad.avgpool1d_forward(x, window, stride, pad).shape))
        return (lambda: ad.total(ad.mul(ad.avgpool1d_forward(x, window, stride, pad), w))), [x]
    if kind == 6:
        V, d = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        table = P("table", rng.normal(size=(V, d)))
        idx = rng.integers(0, V, size=5)
        w = T(rng.normal(size=(5, d)))
        return (lambda: ad.total(ad.mul(ad.gather_rows(table, idx), w))), [table]
    if kind == 7:
        a, b = P("a", rng.normal(size=3)), P("b", rng.normal(size=4))
        w = T(rng.normal(size=9))
        return (lambda: ad.dot(ad.pad_tail(ad.concat([a, b]), 2), w)), [a, b]
    a = P("a", rng.normal(size=(2, 3)))
    w = T(rng.normal(size=3))
    return (lambda: ad.stack_sum([ad.mean(ad.mul(ad.reshape(a, (6,))[1:5], ad.reshape(a, (6,))[0:4])),
                                  ad.dot(ad.sum_rows(a), w)])), [a]


@pytest.mark.parametrize("seed", range(50))
def test_primitive_gradients_match_finite_differences(seed):
    fn, params = _random_primitive_case(seed)
    report = ad.finite_diff_check(fn, params, epsilon=1e-5, tolerance=1e-4)
    assert report.passed, report


# -- adam -------------------------------------------------------------------

def test_adam_zero_gradient_is_fixed_point():
    p = P("p", [1.0, -2.0])
    ad.adam_step([p], lr=1e-3, step=1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    p = P("p", [0.0])
    p.grad = np.array([1.0])
    ad.adam_step([p], lr=1e-4, step=1)
    assert p.data[0] == pytest.approx(-1e-4, rel=1e-6)
    np.testing.assert_array_equal(p.grad, 0.0)


def test_adam_zero_lr_is_noop_and_negative_rejected():
    p = P("p", [2.0])
    p.grad = np.array([5.0])
    ad.adam_step([p], lr=0.0, step=1)
    assert p.data[0] == 2.0
    with pytest.raises(ConfigError):
        ad.adam_step([p], lr=-1.0, step=1)


def test_adam_class_matches_functional():
    a, b = P("p", [1.0, 2.0]), P("p", [1.0, 2.0])
    opt = ad.Adam([a], lr=0.1)
    state = {}
    for step in range(1, 4):
        g = np.array([0.5 * step, -1.0])
        a.grad, b.grad = g.copy(), g.copy()
        opt.step()
        ad.adam_step([b], lr=0.1, step=step, state=state)
    np.testing.assert_allclose(a.data, b.data, atol=1e-15)


def test_duplicate_parameter_names_rejected():
    with pytest.raises(ContractError):
        ad.check_unique_names([P("w", [1.0]), P("w", [2.0])])
