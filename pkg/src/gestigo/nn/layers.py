"""Network layers over the autodiff tensor.

Each layer owns its parameters (He-initialized from a generator passed
at construction), exposes a ``spec()`` record for the checkpoint
container and ``state()`` — parameters plus persistent buffers such as
batchnorm running statistics — in a fixed declaration order.

Convolution runs as im2col + GEMM; its backward scatters through the
same window geometry. Pooling argmaxes are kept from the forward pass so
gradients land on the winning elements only.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ArgumentError, ShapeError
from .tensor import Tensor, accumulate, node

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _he_init(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Layer:
    kind = "layer"

    def params(self):
        return []

    def buffers(self):
        return []

    def state(self):
        """Per-layer persisted arrays: parameters then buffers, in order."""
        return [p.data for p in self.params()] + [b for _, b in self.buffers()]

    def load_state(self, arrays):
        want = self.state()
        if len(arrays) != len(want):
            raise ShapeError(f"{self.kind}: expected {len(want)} arrays, got {len(arrays)}")
        for target, src in zip(self.params(), arrays):
            if target.data.shape != src.shape:
                raise ShapeError(
                    f"{self.kind}: parameter shape {target.data.shape} vs {src.shape}")
            target.data = src.astype(target.data.dtype)
        for (_, buf), src in zip(self.buffers(), arrays[len(self.params()):]):
            if buf.shape != src.shape:
                raise ShapeError(f"{self.kind}: buffer shape {buf.shape} vs {src.shape}")
            buf[...] = src

    def spec(self):
        return {"kind": self.kind}

    def forward(self, x: Tensor, mode: str = "train") -> Tensor:
        raise NotImplementedError

    def __call__(self, x, mode="train"):
        return self.forward(x, mode)


class Conv2d(Layer):
    """3x3-style convolution (im2col + GEMM), zero padding, no bias.

    Activations are channels-last (B, H, W, C) throughout the network;
    the weight is stored (out_ch, in_ch, k, k) for the checkpoint format.
    """

    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=1,
                 rng=None, dtype=np.float32):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * kernel * kernel
        self.weight = Tensor(_he_init(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype),
                             requires_grad=True, dtype=dtype, name="conv.weight")

    def params(self):
        return [self.weight]

    def spec(self):
        return {"kind": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}

    def forward(self, x: Tensor, mode="train"):
        b, h, w, c = x.data.shape
        if c != self.in_ch:
            raise ShapeError(f"conv2d expects {self.in_ch} channels, got {x.data.shape}")
        k, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))) if p else x.data
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        # channels-last columns: the (k, k, c) patch runs are contiguous in c
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)) \
            .reshape(b * ho * wo, k * k * c)
        wmat = np.ascontiguousarray(
            self.weight.data.transpose(2, 3, 1, 0)).reshape(k * k * c, self.out_ch)
        out = (cols @ wmat).reshape(b, ho, wo, self.out_ch)

        weight = self.weight
        pad_shape = xp.shape

        def backward(g):
            gmat = g.reshape(b * ho * wo, self.out_ch)
            gw = (cols.T @ gmat).reshape(k, k, c, self.out_ch)
            accumulate(weight, np.ascontiguousarray(gw.transpose(3, 2, 0, 1)), own=True)
            if not (x.requires_grad or x.parents or x._backward is not None):
                return  # graph-leaf input (the image batch): skip backward-data
            gcols = (gmat @ wmat.T).reshape(b, ho, wo, k, k, c)
            gxp = np.zeros(pad_shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + ho * s:s, j:j + wo * s:s, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, p:p + h, p:p + w, :] if p else gxp
            accumulate(x, gx, own=True)

        return node(out, (x, weight), backward, name="conv2d")


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def __init__(self, size=2, stride=None):
        self.size = size
        self.stride = stride or size

    def spec(self):
        return {"kind": self.kind, "size": self.size, "stride": self.stride}

    def forward(self, x: Tensor, mode="train"):
        k, s = self.size, self.stride
        b, h, w, c = x.data.shape
        if h < k or w < k:
            raise ShapeError(f"maxpool window {k} larger than input {x.data.shape}")
        if k == s and h % k == 0 and w % k == 0:
            return self._forward_tiled(x)
        ho = (h - k) // s + 1
        wo = (w - k) // s + 1
        win = sliding_window_view(x.data, (k, k), axis=(1, 2))[:, ::s, ::s]
        flat = np.ascontiguousarray(win).reshape(b, ho, wo, c, k * k)
        arg = flat.argmax(axis=4)
        out = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
        out = np.ascontiguousarray(out)

        def backward(g):
            gwin = np.zeros((b, ho, wo, c, k * k), dtype=g.dtype)
            np.put_along_axis(gwin, arg[..., None], g[..., None], axis=4)
            gx = np.zeros_like(x.data)
            gwin = gwin.reshape(b, ho, wo, c, k, k)
            for i in range(k):
                for j in range(k):
                    gx[:, i:i + ho * s:s, j:j + wo * s:s, :] += gwin[:, :, :, :, i, j]
            accumulate(x, gx, own=True)

        return node(out, (x,), backward, name="maxpool2d")

    def _forward_tiled(self, x: Tensor):
        """Exact-tiling fast path: strided slot views, no window materialization.

        Ties route the gradient to the first window cell in row-major order,
        matching the argmax convention of the generic path.
        """
        k = self.size
        v = x.data
        slots = [v[:, i::k, j::k, :] for i in range(k) for j in range(k)]
        out = slots[0].copy()
        for sl in slots[1:]:
            np.maximum(out, sl, out=out)

        def backward(g):
            gx = np.zeros_like(v)
            taken = np.zeros(out.shape, dtype=bool)
            for i in range(k):
                for j in range(k):
                    hit = v[:, i::k, j::k, :] == out
                    hit &= ~taken
                    np.copyto(gx[:, i::k, j::k, :], g, where=hit)
                    taken |= hit
            accumulate(x, gx, own=True)

        return node(out, (x,), backward, name="maxpool2d")


class AdaptiveAvgPool(Layer):
    """Global average pooling to 1x1 (the only supported output size)."""

    kind = "adaptive_avg_pool"

    def __init__(self, output=1):
        if output != 1:
            raise ArgumentError("adaptive_avg_pool supports output size 1 only")
        self.output = output

    def spec(self):
        return {"kind": self.kind, "output": self.output}

    def forward(self, x: Tensor, mode="train"):
        b, h, w, c = x.data.shape
        out = x.data.mean(axis=(1, 2), keepdims=True)

        def backward(g):
            accumulate(x, np.broadcast_to(g / (h * w), x.data.shape))

        return node(out, (x,), backward, name="avgpool")


class AdaptiveMaxPool(Layer):
    """Global max pooling to 1x1."""

    kind = "adaptive_max_pool"

    def __init__(self, output=1):
        if output != 1:
            raise ArgumentError("adaptive_max_pool supports output size 1 only")
        self.output = output

    def spec(self):
        return {"kind": self.kind, "output": self.output}

    def forward(self, x: Tensor, mode="train"):
        b, h, w, c = x.data.shape
        flat = x.data.reshape(b, h * w, c)
        arg = flat.argmax(axis=1)
        out = np.take_along_axis(flat, arg[:, None, :], axis=1).reshape(b, 1, 1, c)

        def backward(g):
            gflat = np.zeros_like(flat)
            np.put_along_axis(gflat, arg[:, None, :], g.reshape(b, 1, c), axis=1)
            accumulate(x, gflat.reshape(x.data.shape), own=True)

        return node(out, (x,), backward, name="maxpool_global")


class _BatchNorm(Layer):
    def __init__(self, features, eps=BN_EPS, momentum=BN_MOMENTUM, dtype=np.float32):
        self.features = features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(features, dtype=dtype), requires_grad=True,
                            dtype=dtype, name="bn.gamma")
        self.beta = Tensor(np.zeros(features, dtype=dtype), requires_grad=True,
                           dtype=dtype, name="bn.beta")
        self.running_mean = np.zeros(features, dtype=dtype)
        self.running_var = np.ones(features, dtype=dtype)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def spec(self):
        return {"kind": self.kind, "features": self.features,
                "eps": self.eps, "momentum": self.momentum}

    def _corr(self, a, b):
        """sum over batch/spatial axes of a*b per feature, without a temporary."""
        if a.ndim == 4:
            return np.einsum("bhwc,bhwc->c", a, b, optimize=True)
        return np.einsum("bc,bc->c", a, b, optimize=True)

    def forward(self, x: Tensor, mode="train"):
        # features are the trailing axis for both the 2-d and 4-d variants,
        # so per-channel statistics broadcast without reshapes
        if x.data.ndim not in self._ndims or x.data.shape[-1] != self.features:
            raise ShapeError(f"{self.kind}({self.features}) got input {x.data.shape}")
        axes = tuple(range(x.data.ndim - 1))
        gamma, beta = self.gamma, self.beta
        if mode == "train":
            mu = x.data.mean(axis=axes)
            var = x.data.var(axis=axes)  # biased, also tracked by running stats
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mu
            self.running_var[...] = (1 - m) * self.running_var + m * var
        else:
            mu = self.running_mean
            var = self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = x.data - mu
        xhat *= inv
        out = gamma.data * xhat
        out += beta.data
        n = x.data.size // self.features
        training = mode == "train"

        def backward(g):
            accumulate(gamma, self._corr(g, xhat), own=True)
            accumulate(beta, g.sum(axis=axes), own=True)
            gi = g * gamma.data
            if training:
                sg = gi.sum(axis=axes)
                sgx = self._corr(gi, xhat)
                gi -= sg / n
                gi -= xhat * (sgx / n)
            gi *= inv
            accumulate(x, gi, own=True)

        return node(out.astype(x.data.dtype, copy=False), (x, gamma, beta),
                    backward, name=self.kind)


class BatchNorm2d(_BatchNorm):
    kind = "batchnorm2d"
    _ndims = (4,)


class BatchNorm1d(_BatchNorm):
    kind = "batchnorm1d"
    _ndims = (2,)


class Dropout(Layer):
    """Inverted dropout: train-time scaling by 1/(1-p), eval is identity."""

    kind = "dropout"

    def __init__(self, p=0.5, seed=0):
        if not 0.0 <= p < 1.0:
            raise ArgumentError(f"drop probability must be in [0,1), got {p}")
        self.p = p
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def spec(self):
        return {"kind": self.kind, "p": self.p}

    def forward(self, x: Tensor, mode="train"):
        if mode != "train" or self.p == 0.0:
            return x
        keep = 1.0 - self.p
        mask = (self.rng.random(x.data.shape) < keep).astype(x.data.dtype) / keep
        out = x.data * mask

        def backward(g):
            accumulate(x, g * mask, own=True)

        return node(out, (x,), backward, name="dropout")


class ReLU(Layer):
    kind = "relu"

    def forward(self, x: Tensor, mode="train"):
        out = np.maximum(x.data, 0)

        def backward(g):
            # out > 0 is exactly x > 0 (zeros stay zero), so no stored mask
            accumulate(x, g * (out > 0), own=True)

        return node(out, (x,), backward, name="relu")


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x: Tensor, mode="train"):
        b = x.data.shape[0]
        shape = x.data.shape
        out = x.data.reshape(b, -1)

        def backward(g):
            accumulate(x, g.reshape(shape))

        return node(out, (x,), backward, name="flatten")


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features, self.out_features = in_features, out_features
        rng = rng or np.random.default_rng(0)
        self.weight = Tensor(_he_init(rng, (out_features, in_features), in_features, dtype),
                             requires_grad=True, dtype=dtype, name="linear.weight")
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True,
                           dtype=dtype, name="linear.bias")

    def params(self):
        return [self.weight, self.bias]

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features,
                "out_features": self.out_features}

    def forward(self, x: Tensor, mode="train"):
        if x.data.ndim != 2 or x.data.shape[1] != self.in_features:
            raise ShapeError(
                f"linear expects (B, {self.in_features}), got {x.data.shape}")
        weight, bias = self.weight, self.bias
        out = x.data @ weight.data.T + bias.data

        def backward(g):
            accumulate(weight, g.T @ x.data, own=True)
            accumulate(bias, g.sum(axis=0), own=True)
            accumulate(x, g @ weight.data, own=True)

        return node(out, (x, weight, bias), backward, name="linear")


def concat(tensors, axis=1) -> Tensor:
    """Concatenate tensors along an axis (the head joins its two pools here)."""
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            accumulate(t, piece)

    return node(data, tuple(tensors), backward, name="concat")


def softmax(logits: Tensor) -> Tensor:
    """Row softmax over (B, N) logits, differentiable."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * probs).sum(axis=1, keepdims=True)
        accumulate(logits, probs * (g - dot), own=True)

    return node(probs, (logits,), backward, name="softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]; 0-based labels."""
    labels = np.asarray(labels, dtype=np.int64)
    b, n = logits.data.shape
    if labels.shape != (b,):
        raise ArgumentError(f"labels must be ({b},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= n:
        raise ArgumentError(f"label outside [0,{n}): {labels.min()}..{labels.max()}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    losses = lse - z[np.arange(b), labels]
    out = np.asarray(losses.mean(), dtype=logits.data.dtype)

    def backward(g):
        probs = np.exp(z - lse[:, None])
        probs[np.arange(b), labels] -= 1.0
        accumulate(logits, (g / b) * probs, own=True)

    return node(out, (logits,), backward, name="cross_entropy")


def cell_edges(count: int, size: int):
    """Split ``size`` pixels into ``count`` equal runs, remainder to the last."""
    step = size // count
    if step < 1:
        raise ArgumentError(f"{size}px cannot hold {count} cells")
    return [k * step for k in range(count)] + [size]


def expand_cells(prob_rows, size: int) -> Tensor:
    """Differentiable pseudo-image construction from per-stream probabilities.

    ``prob_rows`` is a list of j (B, N) probability tensors, one per
    stream. The size×size canvas is split into j equal horizontal bands
    (stream order top to bottom) and N equal vertical cells per band
    (class order left to right); remainder rows/columns extend the last
    band/cell. Every cell carries its probability on all three channels,
    so the backward pass is a per-cell gradient sum routed to its stream.
    """
    prob_rows = list(prob_rows)
    bands = len(prob_rows)
    if bands < 1:
        raise ArgumentError("need at least one stream of probabilities")
    b, n = prob_rows[0].data.shape
    for t in prob_rows:
        if t.data.shape != (b, n):
            raise ShapeError(f"stream shapes differ: {t.data.shape} vs {(b, n)}")
    row_edges = cell_edges(bands, size)
    col_edges = cell_edges(n, size)
    out = np.empty((b, size, size, 3), dtype=prob_rows[0].data.dtype)
    for k, row in enumerate(prob_rows):
        for c in range(n):
            out[:, row_edges[k]:row_edges[k + 1], col_edges[c]:col_edges[c + 1], :] = \
                row.data[:, c][:, None, None, None]

    def backward(g):
        for k, row in enumerate(prob_rows):
            gp = np.empty_like(row.data)
            band = g[:, row_edges[k]:row_edges[k + 1], :, :]
            for c in range(n):
                gp[:, c] = band[:, :, col_edges[c]:col_edges[c + 1], :].sum(axis=(1, 2, 3))
            accumulate(row, gp, own=True)

    return node(out, tuple(prob_rows), backward, name="expand_cells")
