"""Episode storage and padded, time-major batches."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import NOOP
from .errors import InsufficientData


@dataclass
class Episode:
    """One rollout of length L.

    Per-step arrays hold L + 1 entries (the final observation is needed for
    bootstrapping); actions, rewards and terminated hold L.
    """

    entities: np.ndarray    # (L+1, N, M, d_E)
    masks: np.ndarray       # (L+1, N, M)
    avail: np.ndarray       # (L+1, N, U)
    states: np.ndarray      # (L+1, S)
    actions: np.ndarray     # (L, N)
    rewards: np.ndarray     # (L,)
    terminated: np.ndarray  # (L,) true only for a real terminal, not a time-out
    won: bool = False

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class EpisodeBatch:
    """Episodes padded to the longest one; every array is time-major."""

    entities: np.ndarray    # (T+1, B, N, M, d_E)
    masks: np.ndarray       # (T+1, B, N, M)
    avail: np.ndarray       # (T+1, B, N, U)
    states: np.ndarray      # (T+1, B, S)
    actions: np.ndarray     # (T, B, N)
    rewards: np.ndarray     # (T, B)
    terminated: np.ndarray  # (T, B)
    filled: np.ndarray      # (T, B)

    @property
    def max_len(self) -> int:
        return self.actions.shape[0]

    @property
    def batch_size(self) -> int:
        return self.actions.shape[1]

    @classmethod
    def from_episodes(cls, episodes) -> "EpisodeBatch":
        episodes = list(episodes)
        if not episodes:
            raise InsufficientData("cannot batch zero episodes")
        T = max(ep.length for ep in episodes)
        B = len(episodes)
        first = episodes[0]
        N, M, d_e = first.entities.shape[1:]
        U = first.avail.shape[-1]
        S = first.states.shape[-1]
        entities = np.zeros((T + 1, B, N, M, d_e))
        masks = np.zeros((T + 1, B, N, M), dtype=bool)
        avail = np.zeros((T + 1, B, N, U), dtype=bool)
        avail[..., NOOP] = True
        states = np.zeros((T + 1, B, S))
        actions = np.zeros((T, B, N), dtype=np.int64)
        rewards = np.zeros((T, B))
        terminated = np.zeros((T, B), dtype=bool)
        filled = np.zeros((T, B), dtype=bool)
        for b, ep in enumerate(episodes):
            L = ep.length
            entities[:L + 1, b] = ep.entities
            masks[:L + 1, b] = ep.masks
            avail[:L + 1, b] = ep.avail
            states[:L + 1, b] = ep.states
            actions[:L, b] = ep.actions
            rewards[:L, b] = ep.rewards
            terminated[:L, b] = ep.terminated
            filled[:L, b] = True
        return cls(entities, masks, avail, states, actions, rewards, terminated, filled)


class ReplayBuffer:
    """FIFO store of whole episodes with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.episodes: deque[Episode] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.episodes)

    def add(self, episode: Episode) -> None:
        self.episodes.append(episode)

    def can_sample(self, batch_size: int) -> bool:
        return len(self.episodes) >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> EpisodeBatch:
        if not self.can_sample(batch_size):
            raise InsufficientData(f"buffer holds {len(self)} episodes, need {batch_size}")
        idx = rng.choice(len(self.episodes), size=batch_size, replace=False)
        return EpisodeBatch.from_episodes(self.episodes[i] for i in sorted(idx))
