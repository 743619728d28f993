import math

import numpy as np
import pytest

from app.errors import ShapeError, UsageError
from app.kernels import tensor as K
from tests.helpers import numeric_grad, relative_error


def conv_oracle(x, kernels, bias):
    c_in, h, w = x.shape
    c_out = kernels.shape[0]
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for i in range(h):
            for j in range(w):
                acc = bias[o]
                for c in range(c_in):
                    for di in range(3):
                        for dj in range(3):
                            y, x_ = i + di - 1, j + dj - 1
                            if 0 <= y < h and 0 <= x_ < w:
                                acc += kernels[o, c, di, dj] * x[c, y, x_]
                out[o, i, j] = acc
    return out


# matmul

def test_matmul_identity_and_zero():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(K.matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(K.matmul([[1.0, 2.0]], [[0.0], [0.0]]), [[0.0]])


def test_matmul_matches_triple_loop(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(K.matmul(a, b), expected, rtol=0, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError, match="inner extents"):
        K.matmul(np.ones((2, 3)), np.ones((2, 3)))


# conv2d

def test_conv2d_zero_kernel(rng):
    x = rng.standard_normal((2, 5, 5))
    out = K.conv2d(x, np.zeros((3, 2, 3, 3)), np.zeros(3))
    assert out.shape == (3, 5, 5)
    assert not out.any()


def test_conv2d_delta_kernel_is_identity(rng):
    x = rng.standard_normal((1, 6, 7))
    kernel = np.zeros((1, 1, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(K.conv2d(x, kernel, np.zeros(1)), x)


def test_conv2d_matches_nested_loops(rng):
    x = rng.standard_normal((2, 5, 5))
    kernels = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    np.testing.assert_allclose(K.conv2d(x, kernels, bias), conv_oracle(x, kernels, bias), rtol=0, atol=1e-12)


def test_conv2d_batched_matches_single(rng):
    x = rng.standard_normal((4, 2, 6, 6))
    kernels = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    batched = K.conv2d(x, kernels, bias)
    for b in range(4):
        np.testing.assert_allclose(batched[b], K.conv2d(x[b], kernels, bias), rtol=0, atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError, match="channel mismatch"):
        K.conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


def test_conv2d_rejects_non_3x3_kernels():
    with pytest.raises(ShapeError):
        K.conv2d(np.ones((1, 4, 4)), np.ones((1, 1, 5, 5)), np.zeros(1))


def test_conv2d_backward_zero_upstream(rng):
    x = rng.standard_normal((2, 4, 4))
    _, cache = K.conv2d_forward(x, rng.standard_normal((3, 2, 3, 3)), np.zeros(3))
    gx, gk, gb = K.conv2d_backward(cache, np.zeros((3, 4, 4)))
    assert not gx.any() and not gk.any() and not gb.any()


def test_conv2d_backward_bias_is_channel_sum(rng):
    x = rng.standard_normal((2, 4, 4))
    _, cache = K.conv2d_forward(x, rng.standard_normal((3, 2, 3, 3)), np.zeros(3))
    g = rng.standard_normal((3, 4, 4))
    _, _, gb = K.conv2d_backward(cache, g)
    np.testing.assert_allclose(gb, g.sum(axis=(1, 2)), rtol=0, atol=1e-12)


def test_conv2d_backward_requires_cache():
    with pytest.raises(UsageError):
        K.conv2d_backward(None, np.zeros((1, 4, 4)))


def test_conv2d_backward_matches_finite_differences():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 4, 4))
        kernels = rng.standard_normal((2, 2, 3, 3))
        bias = rng.standard_normal(2)
        weights = rng.standard_normal((2, 4, 4))

        def loss():
            return float((K.conv2d(x, kernels, bias) * weights).sum())

        _, cache = K.conv2d_forward(x, kernels, bias)
        gx, gk, gb = K.conv2d_backward(cache, weights)
        for analytic, tensor in ((gx, x), (gk, kernels), (gb, bias)):
            numeric = numeric_grad(loss, tensor)
            assert relative_error(analytic.reshape(-1), numeric).max() < 1e-5


# maxpool2

def test_maxpool_constant():
    out, _ = K.maxpool2(np.full((2, 4, 6), 3.5))
    np.testing.assert_array_equal(out, np.full((2, 2, 3), 3.5))


def test_maxpool_single_window():
    out, mask = K.maxpool2(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    assert out.shape == (1, 1, 1) and out[0, 0, 0] == 4.0
    grad = K.maxpool2_backward(mask, np.ones((1, 1, 1)))
    np.testing.assert_array_equal(grad, [[[0.0, 0.0], [0.0, 1.0]]])


def test_maxpool_ties_go_to_first_position():
    _, mask = K.maxpool2(np.ones((1, 2, 2)))
    grad = K.maxpool2_backward(mask, np.full((1, 1, 1), 5.0))
    np.testing.assert_array_equal(grad, [[[5.0, 0.0], [0.0, 0.0]]])


def test_maxpool_matches_window_scan(rng):
    x = rng.standard_normal((3, 6, 8))
    out, _ = K.maxpool2(x)
    for c in range(3):
        for i in range(3):
            for j in range(4):
                assert out[c, i, j] == x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()


def test_maxpool_odd_extent():
    with pytest.raises(ShapeError, match="even"):
        K.maxpool2(np.ones((1, 3, 4)))


def test_maxpool_backward_matches_finite_differences():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 4, 4))
        weights = rng.standard_normal((2, 2, 2))
        _, mask = K.maxpool2(x)
        analytic = K.maxpool2_backward(mask, weights)
        numeric = numeric_grad(lambda: float((K.maxpool2(x)[0] * weights).sum()), x)
        assert relative_error(analytic.reshape(-1), numeric).max() < 1e-5


# activations

def test_relu_definition():
    np.testing.assert_array_equal(K.activation(np.array([-1.0, 2.0]), "relu"), [0.0, 2.0])


def test_relu_derivative_at_zero_is_zero():
    grad = K.activation_backward(np.array([0.0]), np.array([1.0]), "relu")
    assert grad[0] == 0.0


def test_silu_at_zero():
    assert K.activation(np.array([0.0]), "silu")[0] == 0.0


def test_silu_is_stable_for_large_inputs():
    out = K.activation(np.array([-1000.0, 1000.0]), "silu")
    assert np.isfinite(out).all()
    assert out[1] == 1000.0


@pytest.mark.parametrize("kind", ["relu", "silu"])
def test_activation_backward_matches_finite_differences(kind):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(12)
        x[np.abs(x) < 1e-3] = 0.5  # stay away from the relu kink
        weights = rng.standard_normal(12)
        analytic = K.activation_backward(x, weights, kind)
        numeric = numeric_grad(lambda: float((K.activation(x, kind) * weights).sum()), x)
        assert relative_error(analytic, numeric).max() < 1e-5


def test_unknown_activation():
    with pytest.raises(ValueError):
        K.activation(np.zeros(2), "tanh")


# log_softmax

def test_log_softmax_uniform_row():
    out = K.log_softmax(np.zeros((1, 4)))
    np.testing.assert_allclose(out, np.full((1, 4), -math.log(4)), rtol=0, atol=1e-12)


def test_log_softmax_shift_invariance(rng):
    x = rng.standard_normal((3, 5))
    np.testing.assert_allclose(K.log_softmax(x + 17.25), K.log_softmax(x), rtol=0, atol=1e-12)


def test_log_softmax_large_logits():
    out = K.log_softmax(np.array([[1000.0, 0.0]]))
    assert np.isfinite(out).all()
    assert abs(out[0, 0]) < 1e-12
    assert abs(out[0, 1] + 1000.0) < 1e-9


def test_log_softmax_rows_are_distributions(rng):
    x = rng.standard_normal((6, 7)) * 10
    np.testing.assert_allclose(np.exp(K.log_softmax(x)).sum(axis=1), np.ones(6), rtol=0, atol=1e-12)


def test_kernels_are_deterministic(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    kernels = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    first = K.conv2d(x, kernels, bias)
    second = K.conv2d(x.copy(), kernels.copy(), bias.copy())
    assert first.tobytes() == second.tobytes()
    assert K.maxpool2(first)[0].tobytes() == K.maxpool2(second)[0].tobytes()
