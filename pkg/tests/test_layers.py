import numpy as np
import pytest

from grasplab.frames import ShapeMismatch
from grasplab.learn import layers as L
from grasplab.learn.layers import Parameter

import gradcheck


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _probe_loss(out, weights):
    return float(np.sum(out * weights))


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(2, 5, 6, 3))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out, _ = L.conv2d_forward(w, np.zeros(3), x)
    assert np.array_equal(out, x)


def test_conv_matches_direct_sum(rng):
    x = rng.normal(size=(1, 4, 5, 2))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out, _ = L.conv2d_forward(w, b, x)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((1, 4, 5, 3))
    for i in range(4):
        for j in range(5):
            for o in range(3):
                ref[0, i, j, o] = b[o] + sum(
                    w[o, c, di, dj] * xp[0, i + di, j + dj, c] for c in range(2) for di in range(3) for dj in range(3)
                )
    assert np.allclose(out, ref)


def test_conv_grad(rng):
    x = rng.normal(size=(2, 6, 4, 3))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    g = rng.normal(size=(2, 6, 4, 4))
    out, cache = L.conv2d_forward(w, b, x)
    dx, dw, db = L.conv2d_backward(w, cache, g)

    def f():
        return _probe_loss(L.conv2d_forward(w, b, x)[0], g)

    for arr, grad in ((x, dx), (w, dw), (b, db)):
        assert max(gradcheck.check(f, arr, grad, rng)) < 1e-4


def test_linear_grad(rng):
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(5, 4))
    b = rng.normal(size=4)
    g = rng.normal(size=(3, 4))
    _, cache = L.linear_forward(w, b, x)
    dx, dw, db = L.linear_backward(w, cache, g)

    def f():
        return _probe_loss(L.linear_forward(w, b, x)[0], g)

    for arr, grad in ((x, dx), (w, dw), (b, db)):
        assert max(gradcheck.check(f, arr, grad, rng)) < 1e-4


def test_relu_grad_and_convention(rng):
    x = rng.normal(size=(4, 6))
    x[0, 0] = 0.0
    g = rng.normal(size=x.shape)
    _, cache = L.relu_forward(x)
    dx = L.relu_backward(cache, g)
    assert dx[0, 0] == 0.0

    def f():
        return _probe_loss(L.relu_forward(x)[0], g)

    def pattern():
        return (x > 0).tobytes()

    assert max(gradcheck.check(f, x, dx, rng, pattern=pattern)) < 1e-4


def test_sigmoid_grad_and_range(rng):
    x = rng.normal(scale=3, size=(10,))
    g = rng.normal(size=x.shape)
    y, cache = L.sigmoid_forward(x)
    dx = L.sigmoid_backward(cache, g)
    assert np.all((y > 0) & (y < 1))

    def f():
        return _probe_loss(L.sigmoid_forward(x)[0], g)

    assert max(gradcheck.check(f, x, dx, rng)) < 1e-4
    big = L.sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(big))


def test_maxpool_grad(rng):
    x = rng.normal(size=(2, 4, 6, 3))
    g = rng.normal(size=(2, 2, 3, 3))
    out, cache = L.maxpool_forward(x)
    dx = L.maxpool_backward(cache, g)
    assert out.shape == (2, 2, 3, 3)

    def f():
        return _probe_loss(L.maxpool_forward(x)[0], g)

    def pattern():
        return b"".join(m.tobytes() for m in L.maxpool_forward(x)[1][0])

    assert max(gradcheck.check(f, x, dx, rng, pattern=pattern)) < 1e-4


def test_maxpool_ties_route_to_one_element():
    x = np.ones((1, 2, 2, 1))
    out, cache = L.maxpool_forward(x)
    dx = L.maxpool_backward(cache, np.ones((1, 1, 1, 1)))
    assert dx.sum() == 1.0


def test_maxpool_odd_dims():
    with pytest.raises(ShapeMismatch):
        L.maxpool_forward(np.zeros((1, 3, 4, 1)))


def test_global_avg_pool_grad(rng):
    x = rng.normal(size=(2, 3, 4, 5))
    g = rng.normal(size=(2, 5))
    out, cache = L.global_avg_pool_forward(x)
    assert np.allclose(out, x.mean(axis=(1, 2)))
    dx = L.global_avg_pool_backward(cache, g)

    def f():
        return _probe_loss(L.global_avg_pool_forward(x)[0], g)

    assert max(gradcheck.check(f, x, dx, rng)) < 1e-4


def test_bce_grad_and_value(rng):
    z = rng.normal(size=(8,))
    y = rng.random(8) < 0.5
    loss, dz = L.bce_with_logits(z, y)
    p = 1 / (1 + np.exp(-z))
    assert loss == pytest.approx(float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))))

    def f():
        return L.bce_with_logits(z, y)[0]

    assert max(gradcheck.check(f, z, dz, rng)) < 1e-4
    assert L.bce_with_logits(np.zeros(4), np.array([0, 1, 0, 1]))[0] == pytest.approx(np.log(2))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        L.conv2d_forward(np.zeros((4, 3, 3, 3)), np.zeros(4), np.zeros((1, 5, 5, 2)))
    with pytest.raises(ShapeMismatch):
        L.linear_forward(np.zeros((5, 2)), np.zeros(2), np.zeros((3, 4)))


def test_parameter_shapes_agree():
    p = Parameter(np.zeros((3, 2)))
    assert p.grad.shape == p.adam_m.shape == p.adam_v.shape == p.value.shape
