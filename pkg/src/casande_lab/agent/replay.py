from __future__ import annotations

import numpy as np

from .losses import Batch


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, capacity: int, state_dim: int, num_actions: int, num_classes: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.base_rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.next_masks = np.zeros((capacity, num_actions), dtype=bool)
        self.y = np.zeros((capacity, num_classes))
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, state, action, reward, base_reward, next_state, terminal, next_mask, y) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.base_rewards[i] = base_reward
        self.next_states[i] = next_state
        self.terminal[i] = terminal
        self.next_masks[i] = next_mask
        self.y[i] = y
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self._size:
            raise ValueError(f"cannot draw {batch_size} distinct items from {self._size}")
        return rng.choice(self._size, size=batch_size, replace=False)

    def batch(self, idx) -> Batch:
        return Batch(
            self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx],
            self.terminal[idx], self.next_masks[idx], self.y[idx],
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        return self.batch(self.sample_indices(batch_size, rng))
