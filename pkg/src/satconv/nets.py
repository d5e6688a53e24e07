"""Tiny layer system with hand-derived backprop, plus the two shuffle blocks.

No autograd graph: every module implements forward(x) -> (y, ctx) and
backward(ctx, grad_y) -> (grad_x, grads), where grads is keyed like
params(). Composite modules namespace child parameters as "child.name".
Parameter arrays are updated in place by the optimizer; modules that cache
derived state (the box layers recompile their tap plans) refresh it in
post_step().
"""

from __future__ import annotations

import numpy as np

from .boxes import BoxParams, BoxVariant, N_SPLITS, N_WEIGHTS, init_params, project_params
from .dense import conv2d, conv2d_input_grad, conv2d_kernel_grad
from .fmap import (
    DimensionError,
    PointwiseWeights,
    channel_concat,
    channel_shuffle,
    channel_split,
    pointwise_conv,
)
from .layer import BoxConvLayer


class Module:
    def params(self) -> dict:
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, ctx, grad_y):
        raise NotImplementedError

    def post_step(self) -> None:
        pass


class Pointwise(Module):
    def __init__(self, rng, in_ch: int, out_ch: int, bias: bool = True):
        scale = np.sqrt(2.0 / in_ch)
        self.matrix = rng.normal(0.0, scale, size=(out_ch, in_ch))
        self.use_bias = bias
        self.bias = np.zeros(out_ch)

    def params(self):
        p = {"matrix": self.matrix}
        if self.use_bias:
            p["bias"] = self.bias
        return p

    def forward(self, x):
        y = pointwise_conv(x, PointwiseWeights(self.matrix, self.bias))
        return y, x

    def backward(self, ctx, g):
        x = ctx
        gx = np.einsum("oc,ohw->chw", self.matrix, g)
        grads = {"matrix": np.einsum("ohw,chw->oc", g, x)}
        if self.use_bias:
            grads["bias"] = g.sum(axis=(1, 2))
        return gx, grads


class Relu(Module):
    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, ctx, g):
        return g * ctx, {}


class DenseDepthwise(Module):
    """Per-channel dense convolution with a small square kernel (default 3x3)."""

    def __init__(self, rng, channels: int, ksize: int = 3):
        self.ksize = ksize
        self.kernels = rng.normal(0.0, np.sqrt(1.0 / (ksize * ksize)), size=(channels, ksize, ksize))

    def params(self):
        return {"kernels": self.kernels}

    def forward(self, x):
        y = np.stack([conv2d(x[c], self.kernels[c]) for c in range(x.shape[0])])
        return y, x

    def backward(self, ctx, g):
        x = ctx
        gx = np.stack([conv2d_input_grad(self.kernels[c], g[c]) for c in range(x.shape[0])])
        gk = np.stack(
            [conv2d_kernel_grad(x[c], g[c], self.kernels[c].shape) for c in range(x.shape[0])]
        )
        return gx, {"kernels": gk}


class BoxDepthwise(Module):
    """One learnable box per channel, backed by a BoxConvLayer."""

    def __init__(self, rng, channels: int, k: int, variant=BoxVariant.SINGLE, stride: int = 1):
        self.variant = BoxVariant(variant)
        self.k = k
        boxes = [init_params(k, self.variant, rng) for _ in range(channels)]
        self.theta = np.array([p.thetas for p in boxes])
        self.split = np.array([p.split_theta for p in boxes]).reshape(channels, N_SPLITS[self.variant])
        self.weight = np.array([p.split_weights for p in boxes])
        self.conv = BoxConvLayer(boxes, stride=stride)

    def params(self):
        p = {"theta": self.theta}
        if N_SPLITS[self.variant]:
            p["split"] = self.split
        if self.variant != BoxVariant.SINGLE:
            p["weight"] = self.weight
        return p

    def boxes(self):
        return [
            BoxParams(
                *self.theta[c],
                self.k,
                self.variant,
                tuple(self.split[c]),
                tuple(self.weight[c]),
            )
            for c in range(self.theta.shape[0])
        ]

    def forward(self, x):
        return self.conv.forward(x)

    def backward(self, ctx, g):
        lg = self.conv.backward(ctx, g)
        grads = {"theta": np.stack([b.theta for b in lg.grad_boxes])}
        if N_SPLITS[self.variant]:
            grads["split"] = np.stack([b.split_theta for b in lg.grad_boxes])
        if self.variant != BoxVariant.SINGLE:
            grads["weight"] = np.stack([b.split_weights for b in lg.grad_boxes])
        return lg.grad_input, grads

    def post_step(self):
        for c in range(self.theta.shape[0]):
            p = project_params(
                BoxParams(
                    *self.theta[c],
                    self.k,
                    self.variant,
                    tuple(self.split[c]),
                    tuple(self.weight[c]),
                )
            )
            self.theta[c] = p.thetas
            self.split[c] = p.split_theta
            self.weight[c] = p.split_weights
        self.conv.set_boxes(self.boxes())


class Broadcast(Module):
    """Replicate a single-channel map to n channels; backward sums them."""

    def __init__(self, n: int):
        self.n = n

    def forward(self, x):
        if x.shape[0] != 1:
            raise DimensionError(f"broadcast expects 1 channel, got {x.shape[0]}")
        return np.repeat(x, self.n, axis=0), None

    def backward(self, ctx, g):
        return g.sum(axis=0, keepdims=True), {}


class Sequential(Module):
    def __init__(self, children):
        self.children = list(children)  # (name, module) pairs

    def params(self):
        out = {}
        for name, child in self.children:
            for k, v in child.params().items():
                out[f"{name}.{k}"] = v
        return out

    def forward(self, x):
        ctxs = []
        for _, child in self.children:
            x, ctx = child.forward(x)
            ctxs.append(ctx)
        return x, ctxs

    def backward(self, ctxs, g):
        grads = {}
        for (name, child), ctx in zip(reversed(self.children), reversed(ctxs)):
            g, child_grads = child.backward(ctx, g)
            for k, v in child_grads.items():
                grads[f"{name}.{k}"] = v
        return g, grads

    def post_step(self):
        for _, child in self.children:
            child.post_step()


class ShuffleHalfBlock(Module):
    """Channel-preserving block: transform half the channels, keep the rest,
    then interleave the two halves."""

    def __init__(self, channels: int, inner: Module):
        if channels % 2 != 0:
            raise DimensionError(f"block needs an even channel count, got {channels}")
        self.channels = channels
        self.inner = inner

    def params(self):
        return {f"inner.{k}": v for k, v in self.inner.params().items()}

    def forward(self, x):
        half = self.channels // 2
        keep, work = channel_split(x, half)
        y, ictx = self.inner.forward(work)
        if y.shape != work.shape:
            raise DimensionError("inner transform must preserve its half's shape")
        out = channel_shuffle(channel_concat(keep, y), 2)
        return out, ictx

    def backward(self, ictx, g):
        half = self.channels // 2
        g = channel_shuffle(g, half)  # inverse of interleaving 2 groups
        g_keep, g_work = channel_split(g, half)
        g_work, inner_grads = self.inner.backward(ictx, g_work)
        grads = {f"inner.{k}": v for k, v in inner_grads.items()}
        return channel_concat(g_keep, g_work), grads

    def post_step(self):
        self.inner.post_step()


class ChannelChangeBlock(Module):
    """Width-changing block: a transform branch and a plain projection branch,
    concatenated and interleaved."""

    def __init__(self, rng, in_ch: int, out_ch: int, inner: Module):
        if out_ch % 2 != 0:
            raise DimensionError(f"output channels must be even, got {out_ch}")
        self.inner = inner  # in_ch -> out_ch // 2
        self.proj = Sequential(
            [("pw", Pointwise(rng, in_ch, out_ch // 2)), ("act", Relu())]
        )

    def params(self):
        out = {f"inner.{k}": v for k, v in self.inner.params().items()}
        out.update({f"proj.{k}": v for k, v in self.proj.params().items()})
        return out

    def forward(self, x):
        a, actx = self.inner.forward(x)
        b, bctx = self.proj.forward(x)
        return channel_shuffle(channel_concat(a, b), 2), (actx, bctx, a.shape[0])

    def backward(self, ctx, g):
        actx, bctx, half = ctx
        g = channel_shuffle(g, g.shape[0] // 2)
        ga, gb = channel_split(g, half)
        ga, inner_grads = self.inner.backward(actx, ga)
        gb, proj_grads = self.proj.backward(bctx, gb)
        grads = {f"inner.{k}": v for k, v in inner_grads.items()}
        grads.update({f"proj.{k}": v for k, v in proj_grads.items()})
        return ga + gb, grads

    def post_step(self):
        self.inner.post_step()
        self.proj.post_step()


class Adam:
    """Bias-corrected Adam updating parameter arrays in place."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for key, p in self.params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise DimensionError(f"gradient shape {g.shape} != param {p.shape} for {key}")
            m = self.m[key]
            v = self.v[key]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
