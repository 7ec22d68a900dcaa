"""A small reverse-mode autodiff engine over (channels, height, width) arrays.

Only the handful of operations a deep decoder needs are supported, plus Adam.
Every op returns a fresh ``Tensor``; inputs are never mutated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateVarianceError,
    InvalidParameterError,
    InvalidShapeError,
    NumericFailureError,
)

NORM_EPS = 1e-5


class Tensor:
    """Graph node: a value, its accumulated gradient and how to push it back."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward: Callable[[], None] = lambda: None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise InvalidShapeError("backward() needs a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is not None:
                node._backward()


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad for t in ts)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def linear_channel_combination(x: Tensor, W: Tensor) -> Tensor:
    """1x1 convolution: ``out[c] = sum_j W[c, j] * x[j]``."""
    x, W = _as_tensor(x), _as_tensor(W)
    if x.data.ndim != 3 or W.data.ndim != 2 or W.shape[1] != x.shape[0]:
        raise InvalidShapeError(f"cannot mix {x.shape} with matrix {W.shape}")
    k_in, h, w = x.shape
    flat = x.data.reshape(k_in, h * w)
    out = Tensor((W.data @ flat).reshape(-1, h, w), _needs_grad(x, W), "lincomb", (x, W))

    def _backward():
        g = out.grad.reshape(-1, h * w)
        if W.requires_grad:
            W._accumulate(g @ flat.T)
        if x.requires_grad:
            x._accumulate((W.data.T @ g).reshape(k_in, h, w))

    out._backward = _backward
    return out


def interpolation_matrix(src: int, dst: int) -> np.ndarray:
    """Align-corners linear interpolation weights, shape (dst, src)."""
    A = np.zeros((dst, src))
    if src == 1:
        A[:, 0] = 1.0
        return A
    if dst == 1:
        A[0, 0] = 1.0
        return A
    pos = np.arange(dst) * (src - 1) / (dst - 1)
    lo = np.minimum(np.floor(pos).astype(int), src - 2)
    frac = pos - lo
    rows = np.arange(dst)
    A[rows, lo] = 1.0 - frac
    A[rows, lo + 1] += frac
    return A


def bilinear_upsample(x: Tensor, target_w: int, target_h: int) -> Tensor:
    x = _as_tensor(x)
    _, h, w = x.shape
    if target_w < w or target_h < h:
        raise InvalidShapeError(f"cannot downsample {w}x{h} to {target_w}x{target_h}")
    Ay = interpolation_matrix(h, target_h)
    Ax = interpolation_matrix(w, target_w)
    out = Tensor(Ay @ x.data @ Ax.T, x.requires_grad, "upsample", (x,))

    def _backward():
        x._accumulate(Ay.T @ out.grad @ Ax)

    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), x.requires_grad, "relu", (x,))

    def _backward():
        # subgradient at exactly 0 is 0
        x._accumulate(out.grad * mask)

    out._backward = _backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    # split by sign so exp never overflows
    z = x.data
    e = np.exp(-np.abs(z))
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = Tensor(s, x.requires_grad, "sigmoid", (x,))

    def _backward():
        x._accumulate(out.grad * s * (1.0 - s))

    out._backward = _backward
    return out


def channel_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Per-channel standardisation over spatial positions with an affine."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    k, h, w = x.shape
    n = h * w
    if n < 2:
        raise DegenerateVarianceError("channel_norm needs at least 2 pixels per channel")
    if gamma.shape != (k,) or beta.shape != (k,):
        raise InvalidShapeError(f"affine shapes {gamma.shape}/{beta.shape} do not match {k} channels")
    flat = x.data.reshape(k, n)
    xc = flat - flat.mean(axis=1)[:, None]
    var = np.einsum("ij,ij->i", xc, xc) / n
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv[:, None]
    g = gamma.data
    out_flat = xhat * g[:, None] + beta.data[:, None]
    out = Tensor(out_flat.reshape(k, h, w), _needs_grad(x, gamma, beta), "chnorm", (x, gamma, beta))

    def _backward():
        go = out.grad.reshape(k, n)
        dgamma = np.einsum("ij,ij->i", go, xhat)
        if beta.requires_grad:
            beta._accumulate(go.sum(axis=1))
        if gamma.requires_grad:
            gamma._accumulate(dgamma)
        if x.requires_grad:
            # d/dx of the standardisation, with gx = go * gamma
            mean_gx = go.sum(axis=1) * g / n
            mean_gx_xhat = dgamma * g / n
            dx = (go * g[:, None] - mean_gx[:, None] - xhat * mean_gx_xhat[:, None]) * inv[:, None]
            x._accumulate(dx.reshape(k, h, w))

    out._backward = _backward
    return out


def channel_dropout(x: Tensor, p: float, rng: np.random.Generator | None, enabled: bool = True) -> Tensor:
    """Zero whole channels with probability ``p``; survivors scaled by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise InvalidParameterError(f"dropout probability must be in [0, 1), got {p}")
    x = _as_tensor(x)
    if not enabled or p == 0.0:
        return x
    keep = (rng.random(x.shape[0]) >= p).astype(np.float64) / (1.0 - p)
    scale = keep[:, None, None]
    out = Tensor(x.data * scale, x.requires_grad, "dropout", (x,))

    def _backward():
        x._accumulate(out.grad * scale)

    out._backward = _backward
    return out


def mse_subset(recon: Tensor, target, channels: slice | range | Sequence[int]) -> Tensor:
    """Squared error over a channel subset, normalised by pixel count only."""
    recon = _as_tensor(recon)
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if recon.shape != target.shape:
        raise InvalidShapeError(f"shape mismatch {recon.shape} vs {target.shape}")
    C, h, w = recon.shape
    if isinstance(channels, slice):
        idx = np.arange(C)[channels]
    else:
        idx = np.unique(np.asarray(list(channels), dtype=int))
    if idx.size == 0:
        raise InvalidParameterError("empty channel range")
    if idx.min() < 0 or idx.max() >= C:
        raise InvalidParameterError(f"channel range outside [0, {C})")
    diff = recon.data[idx] - target[idx]
    out = Tensor(np.sum(diff**2) / (h * w), recon.requires_grad, "mse", (recon,))

    def _backward():
        g = np.zeros_like(recon.data)
        g[idx] = 2.0 * diff / (h * w)
        recon._accumulate(g * out.grad)

    out._backward = _backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, _needs_grad(a, b), "add", (a, b))

    def _backward():
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out._backward = _backward
    return out


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data * c, a.requires_grad, "scale", (a,))

    def _backward():
        a._accumulate(out.grad * c)

    out._backward = _backward
    return out


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              names: Sequence[str] | None = None) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new parameter arrays."""
    if len(params) != len(grads):
        raise InvalidShapeError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.m[i].shape != p.shape:
            raise InvalidShapeError(f"parameter {i} shape {p.shape} does not match its gradient/moments")
        if not np.all(np.isfinite(g)):
            name = names[i] if names else f"#{i}"
            raise NumericFailureError(f"non-finite gradient for parameter {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    new = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        new.append(p - state.lr * mhat / (np.sqrt(vhat) + state.epsilon))
    return new, state


class Adam:
    """Adam over a list of named leaf tensors; rebinds ``.data`` after each step."""

    def __init__(self, params: dict[str, Tensor], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.names = list(params)
        self.params = [params[n] for n in self.names]
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, _ = adam_step([p.data for p in self.params], grads, self.state, self.names)
        for p, d in zip(self.params, new):
            p.data = d
