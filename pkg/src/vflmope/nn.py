"""Dense two-layer MLP kernels: forward, analytic backward, Adam.

All math runs in float64 and all functions are pure: parameters are never
mutated in place, an optimizer step returns fresh arrays. That keeps training
deterministic for a given seed and makes stale-state bugs detectable (a
backward pass checks that its cache came from the exact network it is given).

Inputs may be a single vector or a batch (rows are samples); outputs follow
the input's shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NonFiniteGradientError, ShapeError

# Parameter tensors of an Mlp2, in a fixed iteration order.
_PARAM_FIELDS = ("w1", "b1", "w2", "b2")

# Floor used when taking the log of a probability. Gradients keep flowing
# with slope 1/floor rather than being cut to zero.
LOG_FLOOR = 1e-12


@dataclass
class Mlp2:
    """Two-layer perceptron ``w2 @ relu(w1 @ x + b1) + b2``.

    Weight matrices are stored as [out, in]; biases are 1-D. The same
    container doubles as a gradient/moment holder since those share shapes.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def params(self):
        """Yield (name, array) pairs in a fixed order."""
        for name in _PARAM_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> "Mlp2":
        return Mlp2(*(getattr(self, n).copy() for n in _PARAM_FIELDS))

    def validate(self) -> None:
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.b1.ndim != 1 or self.b2.ndim != 1:
            raise ShapeError("Mlp2 expects 2-D weights and 1-D biases")
        if self.b1.shape[0] != self.w1.shape[0]:
            raise ShapeError(
                f"b1 has {self.b1.shape[0]} entries but w1 has {self.w1.shape[0]} rows"
            )
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ShapeError(
                f"w2 expects {self.w2.shape[1]} hidden units, w1 provides {self.w1.shape[0]}"
            )
        if self.b2.shape[0] != self.w2.shape[0]:
            raise ShapeError(
                f"b2 has {self.b2.shape[0]} entries but w2 has {self.w2.shape[0]} rows"
            )
        for name, arr in self.params():
            if not np.isfinite(arr).all():
                raise ShapeError(f"parameter {name} contains non-finite values")


@dataclass
class MlpCache:
    """Forward-pass intermediates needed by the backward pass."""

    net: Mlp2
    x: np.ndarray      # [batch, in]
    z1: np.ndarray     # [batch, hidden] pre-activation
    h: np.ndarray      # [batch, hidden] relu output
    squeeze: bool      # input was a single vector


def init_mlp(in_dim: int, hidden_dim: int, out_dim: int, seed) -> Mlp2:
    """Build a network with uniform Glorot weights and zero biases.

    Each weight matrix is drawn from U(-b, b) with b = sqrt(6 / (fan_in +
    fan_out)). ``seed`` may be an int, a SeedSequence, or a Generator; the
    generator is numpy's PCG64, so identical seeds give identical parameters
    on any platform.
    """
    if min(in_dim, hidden_dim, out_dim) <= 0:
        raise ShapeError(
            f"all dimensions must be positive, got ({in_dim}, {hidden_dim}, {out_dim})"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return Mlp2(
        w1=layer(in_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=layer(hidden_dim, out_dim),
        b2=np.zeros(out_dim),
    )


def _as_batch(x, dim: int, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
        squeeze = True
    elif arr.ndim == 2:
        squeeze = False
    else:
        raise ShapeError(f"{what} must be 1-D or 2-D, got ndim={arr.ndim}")
    if arr.shape[1] != dim:
        raise ShapeError(f"{what} has width {arr.shape[1]}, expected {dim}")
    return arr, squeeze


def mlp_forward(net: Mlp2, x) -> tuple[np.ndarray, MlpCache]:
    """Compute logits for ``x`` ([in] or [batch, in]) plus a backward cache."""
    x2d, squeeze = _as_batch(x, net.in_dim, "input")
    z1 = x2d @ net.w1.T + net.b1
    h = np.maximum(z1, 0.0)
    logits = h @ net.w2.T + net.b2
    cache = MlpCache(net=net, x=x2d, z1=z1, h=h, squeeze=squeeze)
    return (logits[0] if squeeze else logits), cache


def mlp_backward(net: Mlp2, cache: MlpCache, dlogits) -> tuple[Mlp2, np.ndarray]:
    """Analytic gradients for every parameter plus the input gradient.

    ``dlogits`` must match the logits returned by the forward pass that built
    ``cache``. The relu subgradient at exactly zero is taken as zero.
    """
    if cache.net is not net:
        raise ContractError(
            "backward cache does not belong to this network (stale after an update?)"
        )
    d = np.asarray(dlogits, dtype=np.float64)
    if cache.squeeze and d.ndim == 1:
        d = d[None, :]
    if d.shape != (cache.x.shape[0], net.out_dim):
        raise ShapeError(
            f"dlogits shape {d.shape} does not match ({cache.x.shape[0]}, {net.out_dim})"
        )
    dw2 = d.T @ cache.h
    db2 = d.sum(axis=0)
    dh = d @ net.w2
    dz1 = np.where(cache.z1 > 0.0, dh, 0.0)
    dw1 = dz1.T @ cache.x
    db1 = dz1.sum(axis=0)
    dx = dz1 @ net.w1
    grads = Mlp2(w1=dw1, b1=db1, w2=dw2, b2=db2)
    return grads, (dx[0] if cache.squeeze else dx)


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one Mlp2."""

    m: Mlp2
    v: Mlp2
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def init_adam(net: Mlp2, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = lambda: Mlp2(*(np.zeros_like(getattr(net, n)) for n in _PARAM_FIELDS))
    return AdamState(m=zeros(), v=zeros(), step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: Mlp2, grads: Mlp2, state: AdamState) -> tuple[Mlp2, AdamState]:
    """One Adam update. Returns new parameters and new state; inputs untouched.

    update: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, then the
    bias-corrected step p - lr * mhat / (sqrt(vhat) + eps).
    """
    if state.step < 0:
        raise ContractError(f"Adam step counter is negative: {state.step}")
    t = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for name in _PARAM_FIELDS:
        p = getattr(params, name)
        g = getattr(grads, name)
        if p.shape != g.shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"gradient {name} contains non-finite values")
        m = state.beta1 * getattr(state.m, name) + (1.0 - state.beta1) * g
        v = state.beta2 * getattr(state.v, name) + (1.0 - state.beta2) * g * g
        mhat = m / (1.0 - state.beta1 ** t)
        vhat = v / (1.0 - state.beta2 ** t)
        new_p[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return (
        Mlp2(**new_p),
        AdamState(m=Mlp2(**new_m), v=Mlp2(**new_v), step=t,
                  lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps),
    )


def softmax(x, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-shifted before exponentiation)."""
    arr = np.asarray(x, dtype=np.float64)
    shifted = arr - arr.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(x) -> np.ndarray:
    """Elementwise logistic function, stable for large |x|.

    Saturates to exactly 0.0 / 1.0 once the float64 exponent underflows
    (|x| beyond roughly 745); inside that range the output is strictly in
    (0, 1).
    """
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_clamped(p) -> np.ndarray:
    """log(max(p, LOG_FLOOR)); keeps degenerate probabilities finite."""
    return np.log(np.maximum(np.asarray(p, dtype=np.float64), LOG_FLOOR))


def softmax_nll_and_dlogits(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log likelihood of a softmax head and its logit gradient.

    The gradient is the usual (softmax - onehot) / batch, written through the
    clamped log so a zero predicted probability still yields a finite value.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels)
    n = logits.shape[0]
    p = softmax(logits, axis=-1)
    rows = np.arange(n)
    py = p[rows, labels]
    phat = np.maximum(py, LOG_FLOOR)
    loss = float(np.mean(-np.log(phat)))
    # d(-log phat)/dlogit_c = p_c * (p_y - 1{c=y}) / phat, averaged over batch
    coeff = 1.0 / (n * phat)
    dlogits = p * (py * coeff)[:, None]
    dlogits[rows, labels] -= p[rows, labels] * coeff
    return loss, dlogits
