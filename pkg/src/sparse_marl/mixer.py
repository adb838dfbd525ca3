"""Value-decomposition mixers: additive (VDN) and monotonic hypernetwork (QMIX)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .numerics import Linear, Tensor, as_tensor, elu, matmul, relu, reshape, tabs, tsum

KINDS = ("vdn", "qmix")
_ALIASES = {"additive": "vdn", "monotonic": "qmix"}


@dataclass
class MixerParams:
    """``kind`` is "vdn" (no parameters) or "qmix".

    For qmix every weight the hypernetworks produce passes through abs()
    before use, which makes the joint value non-decreasing in each utility.
    """

    kind: str
    n_agents: int
    hyper_w1: Linear | None = None
    hyper_b1: Linear | None = None
    hyper_w2: Linear | None = None
    hyper_b2_hidden: Linear | None = None
    hyper_b2_out: Linear | None = None

    @classmethod
    def init(cls, rng: np.random.Generator, kind: str, n_agents: int, state_dim: int,
             embed_dim: int = 32) -> "MixerParams":
        kind = _ALIASES.get(kind, kind)
        if kind == "vdn":
            return cls(kind="vdn", n_agents=n_agents)
        if kind != "qmix":
            raise ValueError(f"unknown mixer kind {kind!r}")
        return cls(
            kind="qmix",
            n_agents=n_agents,
            hyper_w1=Linear.init(rng, state_dim, n_agents * embed_dim),
            hyper_b1=Linear.init(rng, state_dim, embed_dim),
            hyper_w2=Linear.init(rng, state_dim, embed_dim),
            hyper_b2_hidden=Linear.init(rng, state_dim, embed_dim),
            hyper_b2_out=Linear.init(rng, embed_dim, 1),
        )

    @property
    def embed_dim(self) -> int:
        return self.hyper_b1.W.shape[1]

    @property
    def state_dim(self) -> int:
        return self.hyper_b1.W.shape[0]


def mix(utilities, state, params: MixerParams) -> Tensor:
    """Joint value from per-agent chosen-action utilities.

    ``utilities`` is (N,) or (B, N); ``state`` is (S,) or (B, S).  Returns a
    scalar or a (B,) tensor accordingly.
    """
    u = as_tensor(utilities)
    single = u.ndim == 1
    if single:
        u = reshape(u, (1, u.shape[0]))
    if u.shape[-1] != params.n_agents:
        raise ShapeMismatch(f"expected {params.n_agents} utilities, got {u.shape[-1]}")
    if params.kind == "vdn":
        q = tsum(u, axis=-1)
        return reshape(q, ()) if single else q

    s = as_tensor(state)
    if single and s.ndim == 1:
        s = reshape(s, (1, s.shape[0]))
    if s.ndim != 2 or s.shape != (u.shape[0], params.state_dim):
        raise ShapeMismatch(f"state shape {s.shape} does not match ({u.shape[0]}, {params.state_dim})")
    B, N, d = u.shape[0], params.n_agents, params.embed_dim
    w1 = reshape(tabs(params.hyper_w1(s)), (B, N, d))
    b1 = reshape(params.hyper_b1(s), (B, 1, d))
    hidden = elu(matmul(reshape(u, (B, 1, N)), w1) + b1)
    w2 = reshape(tabs(params.hyper_w2(s)), (B, d, 1))
    b2 = reshape(params.hyper_b2_out(relu(params.hyper_b2_hidden(s))), (B, 1, 1))
    q = reshape(matmul(hidden, w2) + b2, (B,))
    return reshape(q, ()) if single else q


def monotonicity_probe(params: MixerParams, state, utilities, i: int, delta: float) -> float:
    """Forward difference (mix(u + delta e_i) - mix(u)) / delta.

    The additive mixer is linear, so its difference is evaluated as
    mix(delta e_i) / delta, which is exact in floating point.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    u = np.array(utilities, dtype=np.float64)
    if params.kind == "vdn":
        step = np.zeros_like(u)
        step[..., i] = delta
        return float(np.mean(mix(step, state, params).data / delta))
    bumped = u.copy()
    bumped[..., i] += delta
    hi = mix(bumped, state, params).data
    lo = mix(u, state, params).data
    return float(np.mean((hi - lo) / delta))
