"""Uniform FIFO replay of self-contained transitions."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..core import Transition, TransitionBatch, validate_transition


class ReplayBuffer:
    def __init__(self, capacity: int, n_a: int, layout=None):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity, self.n_a, self.layout = capacity, n_a, layout
        self._items: list[Transition] = []
        self._next = 0  # ring position of the oldest entry once full

    def __len__(self) -> int:
        return len(self._items)

    def add(self, t: Transition) -> None:
        problem = validate_transition(t, self.layout)
        if problem is not None:
            raise ValueError(f"malformed transition: {problem}")
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def extend(self, ts: Iterable[Transition]) -> None:
        for t in ts:
            self.add(t)

    def sample(self, batch_size: int, rng) -> TransitionBatch:
        if not self._items:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(len(self._items), size=batch_size)
        return TransitionBatch.from_transitions([self._items[i] for i in idx], self.n_a)

    def oldest_first(self) -> list[Transition]:
        return self._items[self._next:] + self._items[:self._next]
