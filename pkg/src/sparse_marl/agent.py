"""Per-agent utility network and epsilon-greedy action selection.

One forward step: embed the entity rows, run both attention heads on the
shared projections, advance the GRU on the mean-pooled embedding, then read
one Q-vector per head from ``head(mean(Y_head) ++ h)``.  The head weights
are shared, so the two utilities differ only through the attention output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import HEADS, AttentionParams, EntitySet, attend_heads, embed_entities, project_qkv
from .errors import NoAvailableAction, ShapeMismatch
from .numerics import (
    GRUParams,
    Linear,
    Tensor,
    as_tensor,
    concat,
    gru_cell,
    gru_recurrence,
    mean,
    project_inputs,
    reshape,
)


@dataclass
class AgentParams:
    attention: AttentionParams
    gru: GRUParams
    head: Linear

    @classmethod
    def init(cls, rng: np.random.Generator, d_entity: int, n_actions: int,
             d_model: int = 32, d_hidden: int = 64) -> "AgentParams":
        return cls(
            attention=AttentionParams.init(rng, d_entity, d_model),
            gru=GRUParams.init(rng, d_model, d_hidden),
            head=Linear.init(rng, d_model + d_hidden, n_actions),
        )

    @property
    def d_hidden(self) -> int:
        return self.gru.hidden_dim

    @property
    def n_actions(self) -> int:
        return self.head.W.shape[1]


@dataclass
class AgentStep:
    q_dense: Tensor
    q_sparse: Tensor
    h_next: Tensor
    dense_weights: Tensor
    sparse_weights: Tensor


def encode(entities, mask, params: AgentParams, heads=HEADS):
    """Embedding and attention for a batch of entity sets (B, M, d_E).

    Returns (pooled embedding (B, d_X), {head: pooled output (B, d_X)},
    {head: weights (B, M, M)}).
    """
    X = embed_entities(entities, params.attention)
    Q, K, V = project_qkv(X, params.attention)
    outs = attend_heads(Q, K, V, mask, heads)
    pooled = {h: mean(y, axis=-2) for h, (y, _) in outs.items()}
    weights = {h: w for h, (_, w) in outs.items()}
    return mean(X, axis=-2), pooled, weights


def q_values(pooled_y: Tensor, h: Tensor, params: AgentParams) -> Tensor:
    return params.head(concat([pooled_y, h], axis=-1))


def agent_forward(entities, mask, h_prev, params: AgentParams, heads=HEADS):
    """Batched single step. Returns ({head: q (B, U)}, h_next (B, d_H), {head: weights})."""
    pooled_x, pooled_y, weights = encode(entities, mask, params, heads)
    h_next = gru_cell(pooled_x, h_prev, params.gru)
    qs = {h: q_values(pooled_y[h], h_next, params) for h in heads}
    return qs, h_next, weights


def agent_step(obs: EntitySet, h_prev, params: AgentParams) -> AgentStep:
    """Both utilities of one agent for one time step."""
    h_prev = as_tensor(h_prev)
    if h_prev.shape != (params.d_hidden,):
        raise ShapeMismatch(f"h_prev must be ({params.d_hidden},), got {h_prev.shape}")
    ents = obs.entities[None]
    qs, h_next, w = agent_forward(ents, obs.alive_mask[None], reshape(h_prev, (1, -1)), params)
    return AgentStep(
        q_dense=qs["dense"][0],
        q_sparse=qs["sparse"][0],
        h_next=h_next[0],
        dense_weights=w["dense"][0],
        sparse_weights=w["sparse"][0],
    )


def unroll(entities: np.ndarray, masks: np.ndarray, params: AgentParams, heads=HEADS):
    """Run the network over whole episodes.

    Args:
        entities: (T, B, N, M, d_E) observations, time-major.
        masks: (T, B, N, M) visibility flags.

    Returns:
        ({head: q (T*B, N, U)}, {head: weights (T*B*N, M, M)}).  Hidden
        states start at zero for every episode and agent.
    """
    T, B, N, M, d_e = entities.shape
    flat = entities.reshape(T * B * N, M, d_e)
    pooled_x, pooled_y, weights = encode(flat, masks.reshape(T * B * N, M), params, heads)
    xproj = project_inputs(pooled_x, params.gru)
    h0 = Tensor(np.zeros((B * N, params.d_hidden)))
    H = gru_recurrence(reshape(xproj, (T, B * N, xproj.shape[-1])), h0, params.gru)
    H = reshape(H, (T * B * N, params.d_hidden))
    qs = {h: reshape(q_values(pooled_y[h], H, params), (T * B, N, params.n_actions)) for h in heads}
    return qs, weights


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    anneal_steps: int = 50_000

    def __call__(self, step: int) -> float:
        return epsilon_at(step, self)


def epsilon_at(step: int, schedule: EpsilonSchedule = EpsilonSchedule()) -> float:
    """Linear anneal from ``start`` to ``end`` over ``anneal_steps``, then flat."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if schedule.anneal_steps <= 0 or step >= schedule.anneal_steps:
        return schedule.end
    frac = step / schedule.anneal_steps
    return schedule.start + frac * (schedule.end - schedule.start)


def greedy_action(q, avail) -> int:
    """Argmax over available actions; ties go to the lowest index."""
    q = np.asarray(q, dtype=np.float64)
    avail = np.asarray(avail, dtype=bool)
    if not avail.any():
        raise NoAvailableAction("no available action")
    return int(np.argmax(np.where(avail, q, -np.inf)))


def select_action(q_dense, avail, epsilon: float, rng: np.random.Generator) -> int:
    avail = np.asarray(avail, dtype=bool)
    if not avail.any():
        raise NoAvailableAction("no available action")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.choice(np.flatnonzero(avail)))
    return greedy_action(q_dense, avail)


def select_actions(q, avail, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    q = q.data if isinstance(q, Tensor) else q
    return np.array([select_action(q[i], avail[i], epsilon, rng) for i in range(len(avail))])
