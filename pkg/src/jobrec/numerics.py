"""Dense building blocks: affine layers, activations, a fixed two-layer
backward pass, AdamW, and a finite-difference gradient checker.

Every network in the model is one or two affine maps with a ReLU between,
so gradients are hand-written for that topology instead of using a tape.
Arrays are float64 numpy arrays; a leading batch axis is optional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass
class LinearLayer:
    weight: np.ndarray  # (out, in)
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"weight must be 2-d, got shape {self.weight.shape}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weight.shape[0],):
                raise ShapeError(
                    f"bias length {self.bias.shape} != weight rows {self.weight.shape[0]}"
                )

    @property
    def use_bias(self) -> bool:
        return self.bias is not None

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def glorot(cls, in_dim: int, out_dim: int, rng: np.random.Generator, use_bias=True):
        """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero bias."""
        a = np.sqrt(6.0 / (in_dim + out_dim))
        weight = rng.uniform(-a, a, size=(out_dim, in_dim))
        bias = np.zeros(out_dim) if use_bias else None
        return cls(weight, bias)


def affine(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"input width {x.shape[-1]} != layer input {layer.in_dim}")
    out = x @ layer.weight.T
    if layer.bias is not None:
        out = out + layer.bias
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(s):
    """Logistic function, evaluated without overflow for large |s|."""
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class Mlp2Cache:
    """Forward intermediates of ``l2(relu(l1(x)))``."""

    x: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    out_shape: Tuple[int, ...]
    l1: LinearLayer
    l2: LinearLayer
    l1_weight_id: int = 0
    l2_weight_id: int = 0


def mlp2_forward(l1: LinearLayer, l2: LinearLayer, x: np.ndarray) -> Tuple[np.ndarray, Mlp2Cache]:
    if l1.out_dim != l2.in_dim:
        raise ShapeError(f"layers do not chain: {l1.out_dim} -> {l2.in_dim}")
    x = np.asarray(x, dtype=np.float64)
    pre = affine(l1, x)
    hidden = relu(pre)
    out = affine(l2, hidden)
    cache = Mlp2Cache(x, pre, hidden, out.shape, l1, l2, id(l1.weight), id(l2.weight))
    return out, cache


@dataclass
class Mlp2Grads:
    l1_weight: np.ndarray
    l2_weight: np.ndarray
    l1_bias: Optional[np.ndarray] = None
    l2_bias: Optional[np.ndarray] = None


def mlp2_backward(cache: Optional[Mlp2Cache], grad_out: np.ndarray) -> Tuple[Mlp2Grads, np.ndarray]:
    """Gradients of a scalar loss w.r.t. both layers and the input.

    ``grad_out`` is dL/d(output) with the same shape as the forward output.
    Batch axes are summed into the parameter gradients.
    """
    if cache is None:
        raise StaleCacheError("mlp2_backward called without a forward cache")
    if cache.l1_weight_id != id(cache.l1.weight) or cache.l2_weight_id != id(cache.l2.weight):
        raise StaleCacheError("layer weights were replaced after the forward pass")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.out_shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != output shape {cache.out_shape}")

    g2 = grad_out.reshape(-1, cache.l2.out_dim)
    h = cache.hidden.reshape(-1, cache.l2.in_dim)
    x = cache.x.reshape(-1, cache.l1.in_dim)
    grads = Mlp2Grads(l1_weight=None, l2_weight=g2.T @ h)
    if cache.l2.use_bias:
        grads.l2_bias = g2.sum(axis=0)
    # ReLU subgradient at exactly 0 is 0
    g_pre = (g2 @ cache.l2.weight) * (cache.pre.reshape(h.shape) > 0)
    grads.l1_weight = g_pre.T @ x
    if cache.l1.use_bias:
        grads.l1_bias = g_pre.sum(axis=0)
    grad_x = (g_pre @ cache.l1.weight).reshape(cache.x.shape)
    return grads, grad_x


@dataclass
class AdamW:
    """AdamW with bias-corrected moments and decoupled weight decay.

    Parameters are updated in place. Moments are keyed by parameter name.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if params[name].shape != g.shape:
                raise ShapeError(f"{name}: grad shape {g.shape} != param shape {params[name].shape}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adamw_step(state: AdamW, params, grads):
    state.step(params, grads)
    return params


def grad_check(
    loss_fn: Callable[[], Tuple[float, Dict[str, np.ndarray]]],
    params: Dict[str, np.ndarray],
    h: float = 1e-6,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    abs_floor: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` reads ``params`` (mutated in place here) and returns
    ``(loss, grads)``. With ``max_coords`` set, at most that many coordinates
    per tensor are checked. Relative error uses ``max(|a|, |n|, abs_floor)``
    as denominator so near-zero gradients are judged on absolute error.
    """
    loss, analytic = loss_fn()
    if not np.isfinite(loss):
        raise FloatingPointError("loss is not finite")
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for name, g in analytic.items():
        p = params[name]
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()[0]
            flat[i] = orig - h
            lm = loss_fn()[0]
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError(f"non-finite loss while perturbing {name}[{i}]")
            num = (lp - lm) / (2 * h)
            denom = max(abs(num), abs(gflat[i]), abs_floor)
            worst = max(worst, abs(num - gflat[i]) / denom)
    return worst
