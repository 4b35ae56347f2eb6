import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from domgap.errors import LabelError, NonFiniteError, ShapeError
from domgap.nn import (Linear, Network, OptimState, activation, batchnorm, conv2d,
                       conv_output_size, copy_params, input_gradient, linear, loss_and_grads,
                       sgd_step, softmax, softmax_cross_entropy, tensor)
from oracles import central_difference, loss_fn, relative_error, small_net

finite = st.floats(-50, 50, allow_nan=False, width=32)


class TestConv2d:
    def test_window_sums(self):
        x = np.arange(1, 10, dtype=np.float32).reshape(1, 1, 3, 3)
        out = conv2d(x, np.ones((1, 1, 2, 2), np.float32), np.zeros(1, np.float32))
        np.testing.assert_array_equal(out[0, 0], [[12, 16], [24, 28]])

    def test_zero_kernel(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 5, 4)).astype(np.float32)
        out = conv2d(x, np.zeros((4, 3, 3, 3), np.float32), np.zeros(4, np.float32), padding=1)
        assert out.shape == (2, 4, 5, 4)
        assert not out.any()

    def test_unit_1x1_kernel_is_identity(self):
        x = np.random.default_rng(1).normal(size=(3, 1, 6, 5)).astype(np.float32)
        out = conv2d(x, np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
        np.testing.assert_array_equal(out, x)

    @pytest.mark.parametrize("size,k,stride,pad", [(9, 3, 1, 0), (9, 3, 2, 1), (10, 2, 3, 2), (5, 5, 1, 0)])
    def test_output_size(self, size, k, stride, pad):
        x = np.ones((1, 1, size, size + 1), np.float32)
        out = conv2d(x, np.ones((2, 1, k, k), np.float32), np.zeros(2, np.float32), stride, pad)
        assert out.shape == (1, 2, conv_output_size(size, k, stride, pad),
                             conv_output_size(size + 1, k, stride, pad))
        assert out.shape[2] == (size + 2 * pad - k) // stride + 1

    def test_strided_matches_direct_loop(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 2, 7, 6))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        out = conv2d(x, w, b, stride=2, padding=1)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros_like(out)
        for n in range(2):
            for o in range(3):
                for i in range(out.shape[2]):
                    for j in range(out.shape[3]):
                        ref[n, o, i, j] = (xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]).sum() + b[o]
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="channels"):
            conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


class TestBatchnorm:
    def test_two_values(self):
        x = np.array([0.0, 2.0], np.float32).reshape(2, 1, 1, 1)
        out = batchnorm(x, np.ones(1, np.float32), np.zeros(1, np.float32), "train", 1e-5)
        np.testing.assert_allclose(out.ravel(), [-1, 1], atol=1e-4)

    def test_constant_batch_gives_beta(self):
        x = np.full((2, 1, 1, 1), 5.0, np.float32)
        out = batchnorm(x, np.ones(1, np.float32), np.full(1, 3.0, np.float32), "train")
        np.testing.assert_allclose(out.ravel(), [3, 3], atol=1e-6)

    def test_zero_gamma(self):
        x = np.random.default_rng(0).normal(size=(4, 2, 3, 3)).astype(np.float32)
        beta = np.array([0.5, -2.0], np.float32)
        out = batchnorm(x, np.zeros(2, np.float32), beta, "train")
        np.testing.assert_array_equal(out, np.broadcast_to(beta.reshape(1, 2, 1, 1), out.shape))

    def test_batch_of_one_rejected_in_train_mode(self):
        with pytest.raises(ShapeError):
            batchnorm(np.ones((1, 1, 3, 3)), np.ones(1), np.zeros(1), "train")

    def test_running_statistics(self):
        x = np.array([0.0, 2.0]).reshape(2, 1, 1, 1)
        rm, rv = np.zeros(1), np.ones(1)
        batchnorm(x, np.ones(1), np.zeros(1), "train", running_mean=rm, running_var=rv)
        np.testing.assert_allclose(rm, [0.1])            # 0.9 * 0 + 0.1 * 1
        np.testing.assert_allclose(rv, [1.0])            # 0.9 * 1 + 0.1 * 1
        out = batchnorm(np.array([3.0]).reshape(1, 1, 1, 1), np.ones(1), np.zeros(1), "infer",
                        running_mean=np.array([1.0]), running_var=np.array([4.0]))
        np.testing.assert_allclose(out.ravel(), [2.0 / math.sqrt(4.0 + 1e-5)])


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(activation(np.array([-1.0, 0.0, 2.0]), "relu"), [0, 0, 2])

    def test_sigmoid_values(self):
        assert activation(np.array([0.0], np.float32), "sigmoid")[0] == 0.5
        with np.errstate(over="raise", invalid="raise"):
            big = activation(np.array([100.0, -100.0], np.float32), "sigmoid")
        assert abs(big[0] - 1.0) <= 1e-6
        assert 0 <= big[1] < 1e-6

    @given(arrays(np.float32, st.integers(1, 30), elements=finite))
    def test_relu_non_negative(self, x):
        assert (activation(x, "relu") >= 0).all()

    # beyond |x| ~ 36 the open interval is not representable in float64
    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-30, 30)))
    def test_sigmoid_open_interval(self, x):
        s = activation(x, "sigmoid")
        assert ((s > 0) & (s < 1)).all()


class TestLinear:
    def test_identity(self):
        x = np.array([[1.5, -2.0], [0.0, 3.0]])
        np.testing.assert_array_equal(linear(x, np.eye(2), np.zeros(2)), x)

    def test_zero_weights(self):
        out = linear(np.ones((3, 4)), np.zeros((2, 4)), np.array([7.0, -1.0]))
        np.testing.assert_array_equal(out, [[7, -1]] * 3)

    def test_dot(self):
        assert linear(np.array([[2.0, 3.0]]), np.array([[1.0, 1.0]]), np.zeros(1))[0, 0] == 5

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            linear(np.ones((1, 3)), np.ones((2, 2)), np.zeros(2))


class TestSoftmaxCrossEntropy:
    def test_two_way_tie(self):
        loss, grad = softmax_cross_entropy(np.zeros((1, 2)), [0])
        assert loss == pytest.approx(math.log(2), abs=1e-12)
        np.testing.assert_allclose(grad, [[-0.5, 0.5]])

    def test_certain(self):
        loss, _ = softmax_cross_entropy(np.array([[100.0, 0.0]]), [0])
        assert loss < 1e-6

    def test_uniform_ten(self):
        loss, _ = softmax_cross_entropy(np.zeros((4, 10)), [0, 3, 9, 5])
        assert loss == pytest.approx(math.log(10), abs=1e-6)

    def test_label_range(self):
        with pytest.raises(LabelError):
            softmax_cross_entropy(np.zeros((1, 3)), [3])
        with pytest.raises(LabelError):
            softmax_cross_entropy(np.zeros((1, 3)), [-1])

    def test_large_logits_stable(self):
        loss, grad = softmax_cross_entropy(np.array([[1000.0, -1000.0, 0.0]]), [2])
        assert np.isfinite(loss) and np.isfinite(grad).all()
        assert loss == pytest.approx(1000.0)

    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 8)),
                  elements=st.floats(-80, 80, allow_nan=False)))
    def test_softmax_rows(self, logits):
        p = softmax(logits)
        assert (p > 0).all()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


class TestInputGradient:
    def test_identity_linear(self):
        net = Network([Linear("fc", 2, 2)], (2,))
        params = {"fc.weight": np.eye(2), "fc.bias": np.zeros(2)}
        g = input_gradient(net, params, np.zeros(2), 0)
        np.testing.assert_allclose(g, [-0.5, 0.5])

    def test_matches_finite_differences(self):
        net = small_net(3)
        params = net.init_params(3, np.float64)
        rng = np.random.default_rng(3)
        for name in ("b1.running_mean", "b1.running_var"):
            params[name] = rng.uniform(0.2, 1.0, size=params[name].shape)
        x = rng.normal(size=(1,) + net.input_shape)
        labels = np.array([1])
        g = input_gradient(net, params, x, labels)
        num = central_difference(loss_fn(net, params, labels, train=False), x, 1e-3)
        assert relative_error(g, num).max() < 1e-4

    def test_per_sample_independent_of_batch(self):
        net = small_net(4)
        params = net.init_params(4, np.float64)
        x = np.random.default_rng(4).normal(size=(3,) + net.input_shape)
        y = np.array([0, 2, 1])
        together = input_gradient(net, params, x, y)
        alone = np.stack([input_gradient(net, params, x[i], y[i]) for i in range(3)])
        np.testing.assert_allclose(together, alone, rtol=1e-12)

    def test_zero_first_layer(self):
        net = small_net(5)
        params = net.init_params(5, np.float64)
        params["c1.weight"][:] = 0
        g = input_gradient(net, params, np.ones((2,) + net.input_shape), [0, 1])
        assert not g.any()

    def test_params_untouched(self):
        net = small_net(6)
        params = net.init_params(6)
        before = copy_params(params)
        input_gradient(net, params, np.ones((2,) + net.input_shape, np.float32), [0, 1])
        assert all(np.array_equal(before[k], params[k]) for k in params)


class TestSgd:
    def test_plain_step(self):
        p = {"w": np.array([1.0])}
        sgd_step(p, {"w": np.array([2.0])}, OptimState(lr=0.1, momentum=0.0))
        assert p["w"][0] == pytest.approx(0.8)

    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -3.0])}
        sgd_step(p, {"w": np.zeros(2)}, OptimState(lr=0.5, momentum=0.9))
        np.testing.assert_array_equal(p["w"], [1.0, -3.0])

    def test_momentum_recurrence(self):
        p = {"w": np.array([5.0])}
        state = OptimState(lr=0.1, momentum=0.9)
        for _ in range(2):
            sgd_step(p, {"w": np.array([1.0])}, state)
        assert p["w"][0] == pytest.approx(5.0 - 0.1 - 0.19)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimState())

    @pytest.mark.parametrize("lr,momentum", [(0.0, 0.5), (0.1, 1.0), (0.1, -0.1)])
    def test_invalid_state(self, lr, momentum):
        with pytest.raises(ValueError):
            OptimState(lr, momentum)


def test_tensor_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        tensor([np.inf])
    assert tensor([1, 2]).dtype == np.float32


def test_float32_determinism():
    net = small_net(7)
    x = np.random.default_rng(7).normal(size=(4,) + net.input_shape).astype(np.float32)
    runs = []
    for _ in range(2):
        params = net.init_params(11)
        loss, grads, dx = loss_and_grads(net, params, x, [0, 1, 2, 0])
        runs.append((loss, grads, dx))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])
    assert np.array_equal(runs[0][2], runs[1][2])


def test_network_rejects_wrong_input_shape():
    net = small_net(8)
    with pytest.raises(ShapeError):
        net.forward(net.init_params(0), np.zeros((1, 1, 6, 7), np.float32))


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 10_000))
def test_single_sample_gradient_sign_agrees_with_batched(seed):
    net = small_net(seed % 5)
    params = net.init_params(seed, np.float64)
    x = np.random.default_rng(seed).normal(size=(2,) + net.input_shape)
    g = input_gradient(net, params, x, [0, 1])
    assert g.shape == x.shape
    assert np.array_equal(np.sign(g[1]), np.sign(input_gradient(net, params, x[1], 1)))
