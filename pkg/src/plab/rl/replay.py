"""Fixed-capacity FIFO replay memory over preallocated arrays."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

BUFFER_MAGIC = b"PLRB1"


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer of transitions with seeded uniform sampling.

    Writes overwrite the oldest entry once capacity is reached.  Sampling is
    uniform with replacement over the stored entries and consumes the
    buffer's own random stream, so a (seed, push-sequence, sample-sequence)
    triple fully determines every batch.
    """

    def __init__(self, capacity: int, state_dim: int, seed: int = 0):
        if capacity < 1 or state_dim < 1:
            raise ValueError("capacity and state_dim must be positive")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.states = np.zeros((capacity, state_dim), dtype=np.float64)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.next_states = np.zeros((capacity, state_dim), dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=np.uint8)
        self.size = 0
        self.head = 0  # next write slot
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def push(self, state: np.ndarray, action: int, reward: float,
             next_state: np.ndarray, done: bool) -> None:
        i = self.head
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = 1 if done else 0
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _age_order(self) -> np.ndarray:
        """Indices of stored entries from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.head) % self.capacity

    def sample(self, batch_size: int):
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.size < batch_size:
            raise ValueError(
                f"cannot sample {batch_size} transitions from a buffer of size {self.size}")
        idx = self.rng.integers(0, self.size, size=batch_size)
        if self.size == self.capacity:
            idx = (idx + self.head) % self.capacity
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx].astype(np.float64))

    def recent_states(self, count: int) -> np.ndarray:
        """State vectors of the newest ``count`` transitions, oldest first."""
        if not 1 <= count <= self.size:
            raise ValueError(f"count must lie in [1, {self.size}]")
        return self.states[self._age_order()[-count:]].copy()

    def oldest_states(self, fraction: float = 0.1) -> np.ndarray:
        """State vectors of the oldest ceil(size * fraction) transitions."""
        if not 0.0 < fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        if self.size == 0:
            raise ValueError("buffer is empty")
        count = int(np.ceil(self.size * fraction))
        return self.states[self._age_order()[:count]].copy()

    def save(self, path) -> None:
        """Contents in age order; the random stream is not persisted."""
        order = self._age_order()
        with open(path, "wb") as fh:
            fh.write(BUFFER_MAGIC)
            fh.write(struct.pack("<III", self.capacity, self.state_dim, self.size))
            fh.write(np.ascontiguousarray(self.states[order]).tobytes())
            fh.write(np.ascontiguousarray(self.actions[order]).tobytes())
            fh.write(np.ascontiguousarray(self.rewards[order]).tobytes())
            fh.write(np.ascontiguousarray(self.next_states[order]).tobytes())
            fh.write(np.ascontiguousarray(self.dones[order]).tobytes())

    @classmethod
    def load(cls, path, seed: int = 0) -> "ReplayBuffer":
        with open(path, "rb") as fh:
            magic = fh.read(len(BUFFER_MAGIC))
            if magic != BUFFER_MAGIC:
                raise ValueError(
                    f"bad replay file magic at offset 0: expected {BUFFER_MAGIC!r}, got {magic!r}")
            capacity, state_dim, size = struct.unpack("<III", fh.read(12))
            buf = cls(capacity, state_dim, seed=seed)
            n = size

            def read_array(dtype, shape):
                want = int(np.prod(shape)) * np.dtype(dtype).itemsize
                raw = fh.read(want)
                if len(raw) != want:
                    raise ValueError("replay file is truncated")
                return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

            buf.states[:n] = read_array(np.float64, (n, state_dim))
            buf.actions[:n] = read_array(np.int64, (n,))
            buf.rewards[:n] = read_array(np.float64, (n,))
            buf.next_states[:n] = read_array(np.float64, (n, state_dim))
            buf.dones[:n] = read_array(np.uint8, (n,))
            buf.size = n
            buf.head = n % capacity
            return buf
