"""Quality classifier, discriminator and generator, and their losses.

All three are bias-free two-layer perceptrons over the ``d_e`` representation
space. Loss functions return gradients only for the network they train;
inputs are treated as constants, so nothing here touches the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .numerics import LinearLayer, mlp2_backward, mlp2_forward, sigmoid

PROB_CLAMP = 1e-12


@dataclass
class TwoLayerNet:
    l1: LinearLayer
    l2: LinearLayer

    @classmethod
    def random(cls, d_in, d_hidden, d_out, rng):
        return cls(LinearLayer.glorot(d_in, d_hidden, rng, use_bias=False),
                   LinearLayer.glorot(d_hidden, d_out, rng, use_bias=False))

    @classmethod
    def near_identity(cls, d, d_hidden, rng, noise=0.01):
        """Generator start point with ``W2 relu(W1 x) == x`` up to small noise,
        using relu(x) - relu(-x) = x; needs ``d_hidden >= 2 d``."""
        if d_hidden < 2 * d:
            raise ValueError(f"identity start needs hidden width >= {2 * d}, got {d_hidden}")
        net = cls.random(d, d_hidden, d, rng)
        eye = np.eye(d)
        net.l1.weight *= noise
        net.l2.weight *= noise
        net.l1.weight[:2 * d] += np.vstack([eye, -eye])
        net.l2.weight[:, :2 * d] += np.hstack([eye, -eye])
        return net

    @classmethod
    def zeros(cls, d_in, d_hidden, d_out):
        return cls(LinearLayer(np.zeros((d_hidden, d_in))), LinearLayer(np.zeros((d_out, d_hidden))))


# C and D score a representation; G maps it back into the same space.
ClassifierC = DiscriminatorD = GeneratorG = TwoLayerNet


def _logit(net: TwoLayerNet, x):
    out, cache = mlp2_forward(net.l1, net.l2, x)
    return out[..., 0], cache


def classify(C: TwoLayerNet, x) -> np.ndarray:
    return sigmoid(_logit(C, x)[0])


def discriminate(D: TwoLayerNet, x) -> np.ndarray:
    return sigmoid(_logit(D, x)[0])


def generate(G: TwoLayerNet, x) -> np.ndarray:
    return mlp2_forward(G.l1, G.l2, x)[0]


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _dlogp(p):
    # d/ds log(clamp(sigmoid(s))); zero where the clamp is active
    return np.where((p > PROB_CLAMP) & (p < 1 - PROB_CLAMP), 1.0 - p, 0.0)


def _dlog1mp(p):
    # d/ds log(1 - clamp(sigmoid(s)))
    return np.where((p > PROB_CLAMP) & (p < 1 - PROB_CLAMP), -p, 0.0)


def _net_grads(cache, grad_logit) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    g, gx = mlp2_backward(cache, grad_logit[..., None])
    return {"W1": g.l1_weight, "W2": g.l2_weight}, gx


def bce(y, p) -> float:
    p = _clamp(p)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def classifier_loss(C: TwoLayerNet, X: np.ndarray, y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean binary cross-entropy of C on labelled representations."""
    X = np.atleast_2d(X)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty classifier batch")
    s, cache = _logit(C, X)
    p = sigmoid(s)
    loss = bce(y, p)
    grad_s = -(y * _dlogp(p) + (1 - y) * _dlog1mp(p)) / len(X)
    grads, _ = _net_grads(cache, grad_s)
    return loss, grads


@dataclass
class DiscriminatorLoss:
    loss: float  # minimised; the negated objective
    objective: float  # E[log D(x_hq)] + E[log(1 - D(G(x_lq)))]
    grads: Dict[str, np.ndarray]


def discriminator_loss(D: TwoLayerNet, G: TwoLayerNet, X_hq: np.ndarray, X_lq: np.ndarray) -> DiscriminatorLoss:
    X_hq, X_lq = np.atleast_2d(X_hq), np.atleast_2d(X_lq)
    if len(X_hq) == 0 or len(X_lq) == 0:
        raise ValueError("discriminator needs non-empty high- and low-quality batches")
    fake = generate(G, X_lq)
    s_r, cache_r = _logit(D, X_hq)
    s_f, cache_f = _logit(D, fake)
    p_r, p_f = sigmoid(s_r), sigmoid(s_f)
    objective = float(np.mean(np.log(_clamp(p_r))) + np.mean(np.log(1 - _clamp(p_f))))
    g_r, _ = _net_grads(cache_r, -_dlogp(p_r) / len(X_hq))
    g_f, _ = _net_grads(cache_f, -_dlog1mp(p_f) / len(X_lq))
    grads = {k: g_r[k] + g_f[k] for k in g_r}
    return DiscriminatorLoss(-objective, objective, grads)


def generator_loss(D: TwoLayerNet, G: TwoLayerNet, X_lq: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """Non-saturating generator loss ``E[-log D(G(x))]``; D is held fixed."""
    X_lq = np.atleast_2d(X_lq)
    if len(X_lq) == 0:
        raise ValueError("generator needs a non-empty batch")
    fake, cache_g = mlp2_forward(G.l1, G.l2, X_lq)
    s, cache_d = _logit(D, fake)
    p = sigmoid(s)
    loss = float(-np.mean(np.log(_clamp(p))))
    _, g_fake = _net_grads(cache_d, -_dlogp(p) / len(X_lq))
    g, _ = mlp2_backward(cache_g, g_fake)
    return loss, {"W1": g.l1_weight, "W2": g.l2_weight}


@dataclass
class QualityPools:
    high: np.ndarray  # user rows: C(x) >= 0.5 and many-shot
    low: np.ndarray  # user rows: C(x) < 0.5 and few-shot


def refresh_pools(C: TwoLayerNet, X_users: np.ndarray, many_shot: np.ndarray, few_shot: np.ndarray) -> QualityPools:
    """Pools of users the classifier agrees with, indexed by user row."""
    many_shot = np.asarray(many_shot, dtype=np.int64)
    few_shot = np.asarray(few_shot, dtype=np.int64)
    high = many_shot[classify(C, X_users[many_shot]) >= 0.5] if len(many_shot) else many_shot
    low = few_shot[classify(C, X_users[few_shot]) < 0.5] if len(few_shot) else few_shot
    return QualityPools(np.sort(high), np.sort(low))
