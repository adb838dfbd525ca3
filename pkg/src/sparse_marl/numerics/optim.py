"""RMSprop (default) and Adam over named parameter dicts, plus norm clipping."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor

RMSPROP_EPS = 1e-5


def _check(params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        if name not in grads:
            raise ShapeMismatch(f"no gradient for {name}")
        if np.shape(grads[name]) != p.shape:
            raise ShapeMismatch(f"{name}: grad shape {np.shape(grads[name])} != {p.shape}")


def rmsprop_step(params, grads, state, lr: float, smoothing: float, eps: float = RMSPROP_EPS):
    """One RMSprop update without momentum, in place.

    ``state`` holds the running mean of squared gradients per parameter and
    is created lazily (zeros) for names it does not contain yet.
    """
    if lr <= 0 or not 0.0 < smoothing < 1.0:
        raise ValueError(f"need lr > 0 and 0 < smoothing < 1, got {lr}, {smoothing}")
    _check(params, grads)
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        sq = state.get(name)
        if sq is None:
            sq = state[name] = np.zeros_like(p.data)
        elif sq.shape != p.shape:
            raise ShapeMismatch(f"{name}: optimizer state shape {sq.shape} != {p.shape}")
        sq *= smoothing
        sq += (1.0 - smoothing) * g * g
        p.data -= lr * g / (np.sqrt(sq) + eps)
    return params, state


def adam_step(params, grads, state, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    _check(params, grads)
    b1, b2 = betas
    step = state["__step__"] = state.get("__step__", 0) + 1
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.setdefault(f"{name}/m", np.zeros_like(p.data))
        v = state.setdefault(f"{name}/v", np.zeros_like(p.data))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly rescaled) gradients and the norm before clipping.
    """
    norm = global_norm(grads)
    if norm > max_norm > 0:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class Optimizer:
    """Stateful wrapper choosing between RMSprop and Adam."""

    def __init__(self, kind: str = "rmsprop", lr: float = 5e-4, smoothing: float = 0.99,
                 eps: float = RMSPROP_EPS):
        if kind not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr = lr
        self.smoothing = smoothing
        self.eps = eps
        self.state: dict = {}

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        if self.kind == "rmsprop":
            rmsprop_step(params, grads, self.state, self.lr, self.smoothing, self.eps)
        else:
            adam_step(params, grads, self.state, self.lr)
