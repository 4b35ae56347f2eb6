"""Dense tensor layers with hand-written forward/backward passes.

Tensors are plain numpy arrays in NCHW (4-D) or NF (2-D) layout. Float32 is
used for training and inference; every op also runs in float64, which the
gradient-check tests rely on.

A network is a list of layers plus a ``ParamSet`` (an ordered ``dict`` of
name -> array). Layers hold no numbers themselves, so a trained ParamSet can
be shared freely between threads for read-only inference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LabelError, NonFiniteError, ShapeError

ParamSet = dict  # name -> np.ndarray, insertion ordered

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def tensor(data, dtype=np.float32, checked: bool = True) -> np.ndarray:
    """Build a contiguous array, rejecting NaN/Inf when ``checked``."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if checked and not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor contains NaN or Inf")
    return arr


# ---------------------------------------------------------------- conv2d

def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d_forward(x, w, b, stride=1, padding=0):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernels, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, kc, kh, kw = w.shape
    if kc != c:
        raise ShapeError(f"kernel channels {kc} do not match input channels {c}")
    if b.shape != (o,):
        raise ShapeError(f"bias shape {b.shape} does not match {o} kernels")
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride={stride} / padding={padding}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h}x{wd}")

    # im2col in channels-last order: column index = (ki, kj, channel)
    xp = np.zeros((n, h + 2 * padding, wd + 2 * padding, c), dtype=x.dtype)
    xp[:, padding:padding + h, padding:padding + wd, :] = x.transpose(0, 2, 3, 1)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    wmat = w.transpose(0, 2, 3, 1).reshape(o, -1)
    out = cols @ wmat.T
    out += b
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))
    return out, (x.shape, cols, wmat, w.shape, stride, padding)


def conv2d_backward(dout, cache):
    xshape, cols, wmat, wshape, stride, padding = cache
    n, o, ho, wo = dout.shape
    _, c, kh, kw = wshape
    h, wd = xshape[2], xshape[3]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = np.ascontiguousarray((d2.T @ cols).reshape(o, kh, kw, c).transpose(0, 3, 1, 2))
    db = d2.sum(axis=0)
    dcols = (d2 @ wmat).reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros((n, h + 2 * padding, wd + 2 * padding, c), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, padding:padding + h, padding:padding + wd, :].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dx), dw, db


def conv2d(x, kernels, bias, stride=1, padding=0):
    return conv2d_forward(x, kernels, bias, stride, padding)[0]


# ------------------------------------------------------------- batchnorm

def _bn_axes(x):
    if x.ndim not in (2, 4):
        raise ShapeError(f"batchnorm expects 2-D or 4-D input, got {x.shape}")
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_view(v, ndim):
    return v.reshape(1, -1) if ndim == 2 else v.reshape(1, -1, 1, 1)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train,
                      eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel batch normalisation.

    In train mode the batch statistics (population variance) are used and
    ``running_mean``/``running_var`` are updated in place by an exponential
    moving average. In infer mode the running statistics are used as-is.
    """
    axes = _bn_axes(x)
    ch = x.shape[1]
    if gamma.shape != (ch,) or beta.shape != (ch,):
        raise ShapeError(f"gamma/beta must have length {ch}")
    if train:
        if x.shape[0] < 2:
            raise ShapeError("batchnorm in train mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bn_view(mean, x.ndim)) * _bn_view(inv_std, x.ndim)
    out = xhat * _bn_view(gamma, x.ndim) + _bn_view(beta, x.ndim)
    return out.astype(x.dtype, copy=False), (xhat, inv_std, gamma, train, axes)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train, axes = cache
    nd = dout.ndim
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * _bn_view(gamma, nd)
    if train:
        dx = (dxhat - dxhat.mean(axis=axes, keepdims=True)
              - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
        dx *= _bn_view(inv_std, nd)
    else:
        dx = dxhat * _bn_view(inv_std, nd)
    return dx.astype(dout.dtype, copy=False), dgamma, dbeta


def batchnorm(x, gamma, beta, mode="train", eps=BN_EPS, running_mean=None, running_var=None):
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', not {mode!r}")
    ch = x.shape[1]
    if running_mean is None:
        running_mean = np.zeros(ch, dtype=x.dtype)
    if running_var is None:
        running_var = np.ones(ch, dtype=x.dtype)
    return batchnorm_forward(x, gamma, beta, running_mean, running_var, mode == "train", eps)[0]


# ----------------------------------------------------------- activations

def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def activation(x, kind):
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------- linear

def linear(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weights {weights.shape}")
    return x @ weights.T + bias


# --------------------------------------------------------------- maxpool

def maxpool_forward(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool {k}x{k} larger than input {h}x{w}")
    xs = x[:, :, :ho * k, :wo * k]
    out = xs[:, :, 0::k, 0::k].copy()
    for i in range(k):
        for j in range(k):
            if i or j:
                np.maximum(out, xs[:, :, i::k, j::k], out=out)
    return out, (xs, out, x.shape, k)


def maxpool_backward(dout, cache):
    # gradient goes to the first maximal element of each window (row-major order)
    xs, out, shape, k = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    claimed = np.zeros(out.shape, dtype=bool)
    for i in range(k):
        for j in range(k):
            hit = xs[:, :, i::k, j::k] == out
            hit &= ~claimed
            claimed |= hit
            dx[:, :, i:out.shape[2] * k:k, j:out.shape[3] * k:k] = dout * hit
    return dx


# ------------------------------------------------------------------ loss

def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, n_classes, n_rows):
    labels = np.asarray(labels)
    if labels.ndim == 0:
        labels = labels.reshape(1)
    if labels.shape != (n_rows,):
        raise ShapeError(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64)


def per_sample_cross_entropy(logits, labels):
    labels = _check_labels(labels, logits.shape[1], logits.shape[0])
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return lse - logits[np.arange(len(labels)), labels]


def softmax_cross_entropy(logits, labels, reduction="mean"):
    """Return (loss, dloss/dlogits) with log-sum-exp stabilisation.

    ``reduction="mean"`` averages over the batch; ``"sum"`` gives each row its
    own un-scaled gradient, which is what per-sample input gradients need.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got {logits.shape}")
    labels = _check_labels(labels, logits.shape[1], logits.shape[0])
    losses = per_sample_cross_entropy(logits, labels)
    grad = softmax(logits)
    grad[np.arange(len(labels)), labels] -= 1.0
    if reduction == "mean":
        return float(losses.mean()), grad / len(labels)
    if reduction == "sum":
        return float(losses.sum()), grad
    raise ValueError(f"unknown reduction {reduction!r}")


# ---------------------------------------------------------------- layers

def _kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d:
    def __init__(self, name, in_channels, out_channels, kernel_size=3, stride=1, padding=1):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding

    def param_shapes(self):
        k = self.kernel_size
        return {f"{self.name}.weight": (self.out_channels, self.in_channels, k, k),
                f"{self.name}.bias": (self.out_channels,)}

    def init(self, rng, dtype):
        k = self.kernel_size
        shape = (self.out_channels, self.in_channels, k, k)
        return {f"{self.name}.weight": _kaiming_uniform(rng, shape, self.in_channels * k * k, dtype),
                f"{self.name}.bias": np.zeros(self.out_channels, dtype=dtype)}

    def out_shape(self, shape):
        c, h, w = shape
        k = self.kernel_size
        return (self.out_channels, conv_output_size(h, k, self.stride, self.padding),
                conv_output_size(w, k, self.stride, self.padding))

    def forward(self, params, x, train):
        return conv2d_forward(x, params[f"{self.name}.weight"], params[f"{self.name}.bias"],
                              self.stride, self.padding)

    def backward(self, params, dout, cache):
        dx, dw, db = conv2d_backward(dout, cache)
        return dx, {f"{self.name}.weight": dw, f"{self.name}.bias": db}


class BatchNorm:
    buffers = ("running_mean", "running_var")

    def __init__(self, name, channels):
        self.name = name
        self.channels = channels

    def param_shapes(self):
        c = (self.channels,)
        return {f"{self.name}.{k}": c for k in ("gamma", "beta", "running_mean", "running_var")}

    def init(self, rng, dtype):
        c = self.channels
        return {f"{self.name}.gamma": np.ones(c, dtype=dtype),
                f"{self.name}.beta": np.zeros(c, dtype=dtype),
                f"{self.name}.running_mean": np.zeros(c, dtype=dtype),
                f"{self.name}.running_var": np.ones(c, dtype=dtype)}

    def out_shape(self, shape):
        return shape

    def forward(self, params, x, train):
        p = self.name
        return batchnorm_forward(x, params[f"{p}.gamma"], params[f"{p}.beta"],
                                 params[f"{p}.running_mean"], params[f"{p}.running_var"], train)

    def backward(self, params, dout, cache):
        dx, dg, db = batchnorm_backward(dout, cache)
        return dx, {f"{self.name}.gamma": dg, f"{self.name}.beta": db}


class ReLU:
    def param_shapes(self):
        return {}

    def init(self, rng, dtype):
        return {}

    def out_shape(self, shape):
        return shape

    def forward(self, params, x, train):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, dout, mask):
        return dout * mask, {}


class Sigmoid(ReLU):
    def forward(self, params, x, train):
        y = sigmoid(x)
        return y, y

    def backward(self, params, dout, y):
        return dout * y * (1 - y), {}


class MaxPool2d(ReLU):
    def __init__(self, kernel_size=2):
        self.kernel_size = kernel_size

    def out_shape(self, shape):
        c, h, w = shape
        return (c, h // self.kernel_size, w // self.kernel_size)

    def forward(self, params, x, train):
        return maxpool_forward(x, self.kernel_size)

    def backward(self, params, dout, cache):
        return maxpool_backward(dout, cache), {}


class Flatten(ReLU):
    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, params, x, train):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, dout, shape):
        return dout.reshape(shape), {}


class Linear:
    def __init__(self, name, in_features, out_features):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features

    def param_shapes(self):
        return {f"{self.name}.weight": (self.out_features, self.in_features),
                f"{self.name}.bias": (self.out_features,)}

    def init(self, rng, dtype):
        shape = (self.out_features, self.in_features)
        return {f"{self.name}.weight": _kaiming_uniform(rng, shape, self.in_features, dtype),
                f"{self.name}.bias": np.zeros(self.out_features, dtype=dtype)}

    def out_shape(self, shape):
        return (self.out_features,)

    def forward(self, params, x, train):
        return linear(x, params[f"{self.name}.weight"], params[f"{self.name}.bias"]), x

    def backward(self, params, dout, x):
        w = params[f"{self.name}.weight"]
        return dout @ w, {f"{self.name}.weight": dout.T @ x, f"{self.name}.bias": dout.sum(axis=0)}


class Network:
    """An ordered stack of layers evaluated against an external ParamSet."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def param_shapes(self):
        shapes = {}
        for layer in self.layers:
            shapes.update(layer.param_shapes())
        return shapes

    def buffer_names(self):
        return [f"{layer.name}.{b}" for layer in self.layers for b in getattr(layer, "buffers", ())]

    def trainable_names(self):
        skip = set(self.buffer_names())
        return [n for n in self.param_shapes() if n not in skip]

    def init_params(self, seed=0, dtype=np.float32) -> ParamSet:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        params = {}
        for layer in self.layers:
            params.update(layer.init(rng, dtype))
        return params

    def check_params(self, params):
        expected = self.param_shapes()
        if list(params) != list(expected):
            raise ShapeError(f"parameter names {list(params)} do not match network {list(expected)}")
        for name, shape in expected.items():
            if params[name].shape != tuple(shape):
                raise ShapeError(f"{name}: shape {params[name].shape}, expected {tuple(shape)}")

    def forward(self, params, x, train=False):
        """Return (output, tape). ``train=True`` updates batchnorm running stats in place."""
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        tape = []
        for layer in self.layers:
            x, cache = layer.forward(params, x, train)
            tape.append(cache)
        return x, tape

    def backward(self, params, dout, tape):
        """Return (d input, {param name: gradient}) for trainable parameters."""
        grads = {}
        for layer, cache in zip(reversed(self.layers), reversed(tape)):
            dout, g = layer.backward(params, dout, cache)
            grads.update(g)
        return dout, {n: grads[n] for n in self.trainable_names()}

    def predict_logits(self, params, x, batch_size=64):
        outs = [self.forward(params, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        if not outs:
            return np.zeros((0,) + tuple(self.output_shape), dtype=np.float32)
        return np.concatenate(outs)

    def predict(self, params, x, batch_size=64):
        return self.predict_logits(params, x, batch_size).argmax(axis=1)


def loss_and_grads(net, params, x, labels, train=True):
    """Mean cross-entropy loss plus gradients for every trainable parameter and the input."""
    logits, tape = net.forward(params, x, train=train)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    dx, grads = net.backward(params, dlogits.astype(logits.dtype, copy=False), tape)
    return loss, grads, dx


def input_gradient(net, params, x, labels, batch_size=64):
    """Per-sample d(cross-entropy)/d(input) in inference mode.

    Each sample's gradient is that of its own loss, independent of how many
    samples share the call. ``params`` is not modified.
    """
    single = x.ndim == len(net.input_shape)
    if single:
        x = x[None]
    labels = np.atleast_1d(np.asarray(labels))
    if len(labels) != len(x):
        raise ShapeError(f"{len(x)} inputs but {len(labels)} labels")
    out = np.empty_like(x)
    for i in range(0, len(x), batch_size):
        xb = x[i:i + batch_size]
        logits, tape = net.forward(params, xb, train=False)
        _, dlogits = softmax_cross_entropy(logits, labels[i:i + batch_size], reduction="sum")
        dx, _ = net.backward(params, dlogits.astype(logits.dtype, copy=False), tape)
        out[i:i + batch_size] = dx
    return out[0] if single else out


# ------------------------------------------------------------- optimiser

@dataclass
class OptimState:
    lr: float = 0.01
    momentum: float = 0.9
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


def sgd_step(params: ParamSet, grads: ParamSet, state: OptimState) -> ParamSet:
    """Momentum SGD: v <- m*v - lr*g ; p <- p + v. Updates ``params`` in place and returns it."""
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p)
        v *= state.momentum
        v -= state.lr * g
        p += v
    return params


def copy_params(params: ParamSet, dtype=None) -> ParamSet:
    return {k: np.array(v, dtype=dtype or v.dtype, copy=True) for k, v in params.items()}
