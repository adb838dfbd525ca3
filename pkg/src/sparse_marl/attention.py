"""Entity embedding, shared Q/K/V projection, and the dense and sparse heads.

Both heads read the same logits ``Q K^T / sqrt(d_X)``; the dense head
normalises them with softmax, the sparse head with sparsemax.  Keys of absent
entities are masked so they receive exactly zero weight.  Column 0 (the
observing agent itself) is never masked, which keeps every row well defined
even for an agent that sees nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .numerics import Linear, Tensor, as_tensor, matmul, softmax_rows, sparsemax_rows, transpose
from .numerics.params import uniform


@dataclass
class EntitySet:
    """One agent's observation: M entity rows (self first) and a visibility mask."""

    entities: np.ndarray
    alive_mask: np.ndarray

    def __post_init__(self):
        self.entities = np.asarray(self.entities, dtype=np.float64)
        self.alive_mask = np.asarray(self.alive_mask, dtype=bool)
        if self.entities.ndim != 2 or self.entities.shape[0] < 1:
            raise ShapeMismatch(f"entities must be (M>=1, d_E), got {self.entities.shape}")
        if self.alive_mask.shape != (self.entities.shape[0],):
            raise ShapeMismatch("alive_mask must have one flag per entity row")

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]


@dataclass
class AttentionParams:
    embed: Linear
    W_Q: Tensor
    W_K: Tensor
    W_V: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_entity: int, d_model: int) -> "AttentionParams":
        return cls(
            embed=Linear.init(rng, d_entity, d_model),
            W_Q=uniform(rng, (d_model, d_model), d_model),
            W_K=uniform(rng, (d_model, d_model), d_model),
            W_V=uniform(rng, (d_model, d_model), d_model),
        )

    @property
    def d_entity(self) -> int:
        return self.embed.W.shape[0]

    @property
    def d_model(self) -> int:
        return self.W_Q.shape[0]


def key_mask(alive_mask) -> np.ndarray:
    """Visibility flags with the self column forced on."""
    mask = np.array(alive_mask, dtype=bool, copy=True)
    mask[..., 0] = True
    return mask


def embed_entities(obs, params: AttentionParams) -> Tensor:
    """Affine embedding of each entity row: (..., M, d_E) -> (..., M, d_X)."""
    entities = obs.entities if isinstance(obs, EntitySet) else obs
    entities = as_tensor(entities)
    if entities.shape[-1] != params.d_entity:
        raise ShapeMismatch(f"entity width {entities.shape[-1]} != {params.d_entity}")
    return params.embed(entities)


def project_qkv(X: Tensor, params: AttentionParams):
    X = as_tensor(X)
    if X.shape[-1] != params.d_model:
        raise ShapeMismatch(f"embedding width {X.shape[-1]} != {params.d_model}")
    return matmul(X, params.W_Q), matmul(X, params.W_K), matmul(X, params.W_V)


def attention_logits(Q: Tensor, K: Tensor) -> Tensor:
    Q, K = as_tensor(Q), as_tensor(K)
    if Q.shape != K.shape:
        raise ShapeMismatch(f"query {Q.shape} and key {K.shape} differ")
    return matmul(Q, transpose(K)) * (1.0 / math.sqrt(Q.shape[-1]))


def _mask_for(logits: Tensor, mask):
    if mask is None:
        return None
    mask = key_mask(mask)
    # one flag per key; broadcast over the query rows
    return mask[..., None, :]


def attend_dense(Q, K, V, mask=None):
    """softmax(Q K^T / sqrt(d_X)) V. Returns (output, weights)."""
    logits = attention_logits(Q, K)
    weights = softmax_rows(logits, _mask_for(logits, mask))
    return matmul(weights, V), weights


def attend_sparse(Q, K, V, mask=None):
    """sparsemax(Q K^T / sqrt(d_X)) V. Returns (output, weights)."""
    logits = attention_logits(Q, K)
    weights = sparsemax_rows(logits, _mask_for(logits, mask))
    return matmul(weights, V), weights


HEADS = ("dense", "sparse")


def attend_heads(Q, K, V, mask=None, heads=HEADS) -> dict:
    """Evaluate the requested heads on one shared logit matrix.

    Returns ``{head: (output, weights)}``.
    """
    logits = attention_logits(Q, K)
    m = _mask_for(logits, mask)
    out = {}
    for head in heads:
        if head == "dense":
            w = softmax_rows(logits, m)
        elif head == "sparse":
            w = sparsemax_rows(logits, m)
        else:
            raise ValueError(f"unknown attention head {head!r}")
        out[head] = (matmul(w, V), w)
    return out
