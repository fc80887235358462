import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodulecad.nnet import (
    AvgPool,
    BatchNorm,
    Concat,
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    Network,
    ReLU,
    Sigmoid,
    UnboundWeightsError,
    avgpool3d,
    batchnorm_inference,
    conv3d,
    forward,
    init_weights,
    leaky_relu,
    reference_forward,
    relu,
    sigmoid,
)

from oracles import direct_conv3d


def test_conv_examples():
    x = np.ones((1, 3, 3, 3))
    w = np.ones((1, 1, 3, 3, 3))
    assert conv3d(x, w).shape == (1, 1, 1, 1) and conv3d(x, w)[0, 0, 0, 0] == 27
    out = conv3d(x, w, pad=1)
    assert out[0, 1, 1, 1] == 27 and out[0, 0, 0, 0] == 8
    # a delta kernel shifts nothing
    d = np.zeros((1, 1, 3, 3, 3))
    d[0, 0, 1, 1, 1] = 1
    r = np.random.default_rng(0).normal(size=(1, 4, 5, 6))
    np.testing.assert_allclose(conv3d(r, d, pad=1), r)
    with pytest.raises(ValueError):
        conv3d(x, np.ones((1, 2, 3, 3, 3)))


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1), ((1, 2, 1), (0, 1, 2))])
def test_conv_matches_direct_loops(stride, pad):
    rng = np.random.default_rng(11)
    x = rng.normal(size=(3, 7, 6, 5))
    w = rng.normal(size=(2, 3, 3, 3, 3))
    b = rng.normal(size=2)
    np.testing.assert_allclose(conv3d(x, w, b, stride, pad), direct_conv3d(x, w, b, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_small_fixture_direct():
    # 3x3x3 input, 2x2x2 kernel: every output is a sum of eight products
    x = np.arange(27, dtype=float).reshape(1, 3, 3, 3)
    w = np.arange(8, dtype=float).reshape(1, 1, 2, 2, 2)
    out = conv3d(x, w)
    np.testing.assert_array_equal(out, direct_conv3d(x, w))
    assert out[0, 0, 0, 0] == sum(x[0, a, b, c] * w[0, 0, a, b, c] for a in range(2) for b in range(2) for c in range(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_conv_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 2, 4, 4, 4))
    w = rng.normal(size=(3, 2, 3, 3, 3))
    lhs = conv3d(a * x + b * y, w, pad=1)
    rhs = a * conv3d(x, w, pad=1) + b * conv3d(y, w, pad=1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_batchnorm_against_loop():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 2, 2, 2))
    mean, var = rng.normal(size=3), rng.uniform(0.1, 2, size=3)
    g, bt = rng.normal(size=3), rng.normal(size=3)
    out = batchnorm_inference(x, mean, var, g, bt, eps=1e-3)
    for c in range(3):
        for idx in np.ndindex(2, 2, 2):
            expect = g[c] * (x[(c,) + idx] - mean[c]) / np.sqrt(var[c] + 1e-3) + bt[c]
            assert out[(c,) + idx] == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ValueError):
        batchnorm_inference(x, mean, -var, g, bt)


def test_activations():
    v = np.array([-2.0, 0.0, 3.0])
    assert list(relu(v)) == [0, 0, 3]
    assert list(leaky_relu(v)) == [pytest.approx(-0.2), 0, 3]
    assert sigmoid(np.array(0.0)) == 0.5
    s = sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[1] == 1.0
    xs = np.linspace(-20, 20, 41)
    np.testing.assert_allclose(sigmoid(xs) + sigmoid(-xs), 1.0)


def test_avgpool_example():
    x = np.arange(8, dtype=float).reshape(1, 2, 2, 2)
    assert avgpool3d(x)[0, 0, 0, 0] == 3.5
    with pytest.raises(ValueError):
        avgpool3d(x, size=3)


def test_shape_inference():
    net = Network((2, 8, 8, 8))
    net.add("c", Conv3d(4, 3, 2, 1), "input")
    net.add("p", AvgPool(2, 2), "c")
    net.add("f", Flatten(), "p")
    net.add("d", Dense(5), "f")
    shapes = net.shapes()
    assert shapes["c"] == (4, 4, 4, 4) and shapes["p"] == (4, 2, 2, 2) and shapes["f"] == (32,) and shapes["d"] == (5,)
    assert net.n_params() == 4 * 2 * 27 + 4 + 32 * 5 + 5
    with pytest.raises(ValueError):
        net.add("bad", Dense(3), "c")
        net.shapes()
    with pytest.raises(ValueError):
        net.add("c", ReLU(), "input")
    with pytest.raises(ValueError):
        net.add("x", ReLU(), "nowhere")


def test_unbound_weights_and_bad_shapes():
    net = Network((1, 4, 4, 4))
    net.add("c", Conv3d(2, 3, pad="same"), "input")
    with pytest.raises(UnboundWeightsError):
        forward(net, np.zeros((1, 4, 4, 4)))
    with pytest.raises(UnboundWeightsError):
        net.bind({})
    w = init_weights(net)
    w["c.weight"] = np.zeros((2, 1, 3, 3, 2))
    with pytest.raises(ValueError):
        net.bind(w)


def test_empty_network_is_identity():
    net = Network((1, 2, 2, 2))
    x = np.random.default_rng(0).normal(size=(1, 2, 2, 2))
    np.testing.assert_array_equal(forward(net, x), x)
    with pytest.raises(ValueError):
        forward(net, np.zeros((1, 2, 2, 3)))


def test_dropout_is_identity_and_validated():
    net = Network((1, 2, 2, 2))
    net.add("d", Dropout(0.3), "input")
    x = np.ones((1, 2, 2, 2))
    np.testing.assert_array_equal(forward(net, x), x)
    with pytest.raises(ValueError):
        Dropout(1.0)


def _random_net(rng):
    c0 = int(rng.integers(1, 3))
    n = int(rng.integers(4, 7))
    net = Network((c0, n, n, n))
    a = net.add("a", Conv3d(int(rng.integers(1, 4)), 3, 1, "same"), "input")
    a = net.add("a_bn", BatchNorm(), a)
    a = net.add("a_act", LeakyReLU(0.1), a)
    b = net.add("b", Conv3d(int(rng.integers(1, 4)), 1, bias=False), "input")
    b = net.add("b_act", ReLU(), b)
    cat = net.add("cat", Concat(), (a, b))
    s = net.add("s", Conv3d(2, 3, 2, 1), cat)
    p = net.add("pool", AvgPool(2, 1), s)
    f = net.add("flat", Flatten(), p)
    d = net.add("dense", Dense(3), f)
    d = net.add("relu", ReLU(), d)
    d = net.add("out", Dense(1), d)
    net.add("sig", Sigmoid(), d)
    return net


@pytest.mark.parametrize("seed", range(6))
def test_fast_and_reference_executors_agree(seed):
    rng = np.random.default_rng(seed)
    net = _random_net(rng)
    net.bind(init_weights(net, seed=seed, random_stats=True))
    x = rng.normal(size=net.input_shape)
    fast = forward(net, x, keep=["cat", "s", "out"])
    ref = reference_forward(net, x, keep=["cat", "s", "out"])
    for k in ("cat", "s", "out", "output"):
        np.testing.assert_allclose(fast[k], ref[k], rtol=1e-9, atol=1e-12)


def test_init_weights_deterministic():
    net = _random_net(np.random.default_rng(0))
    a, b = init_weights(net, seed=5), init_weights(net, seed=5)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert np.all(a["a_bn.var"] == 1) and np.all(a["a_bn.mean"] == 0)
    w = a["a.weight"]
    assert np.abs(w).max() <= 2 * np.sqrt(2 / np.prod(w.shape[1:])) / 0.8796256610342398 + 1e-12
