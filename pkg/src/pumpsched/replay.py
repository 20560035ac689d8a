"""Prioritized experience replay over a binary sum tree.

Proportional prioritization: a transition's leaf mass is
``(|priority_seed| + eps) ** alpha``; sampling is stratified over equal
mass segments and returns importance weights ``(N * P(i)) ** -beta``
normalised by the largest weight in the batch.  New transitions enter at
the running maximum seed so everything gets sampled at least once.

Indices handed out by :meth:`push`/:meth:`sample` are global insertion
ids; priority updates for slots that have since been overwritten are
skipped silently and counted in :attr:`stale_updates`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .env import OBSERVATION_DIM, Transition
from .errors import StateError

_SNAPSHOT_MAGIC = b"PSRB"
_SNAPSHOT_VERSION = 1


class SumTree:
    """Fixed-capacity binary tree keeping subtree sums over leaf masses."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._nodes = np.zeros(2 * capacity - 1)

    @property
    def total(self) -> float:
        return float(self._nodes[0])

    def get(self, leaf: int) -> float:
        return float(self._nodes[leaf + self.capacity - 1])

    def set(self, leaf: int, value: float):
        if value < 0:
            raise ValueError(f"leaf mass must be >= 0, got {value}")
        idx = leaf + self.capacity - 1
        delta = value - self._nodes[idx]
        self._nodes[idx] = value
        while idx > 0:
            idx = (idx - 1) // 2
            self._nodes[idx] += delta

    def locate(self, mass: float) -> int:
        """Leaf index whose cumulative-mass interval contains ``mass``."""
        idx = 0
        while idx < self.capacity - 1:
            left = 2 * idx + 1
            if mass <= self._nodes[left] or self._nodes[left + 1] == 0.0:
                idx = left
            else:
                mass -= self._nodes[left]
                idx = left + 1
        return idx - (self.capacity - 1)

    def leaf_masses(self) -> np.ndarray:
        return self._nodes[self.capacity - 1:].copy()


@dataclass
class TransitionBatch:
    """Column-wise view of a sampled minibatch."""

    obs: np.ndarray        # (B, obs_dim)
    actions: np.ndarray    # (B,) int
    rewards: np.ndarray    # (B,)
    next_obs: np.ndarray   # (B, obs_dim)
    terminals: np.ndarray  # (B,) float 0/1
    weights: np.ndarray    # (B,) importance weights
    indices: np.ndarray    # (B,) global insertion ids

    def __len__(self) -> int:
        return len(self.actions)


class PrioritizedBuffer:
    """Ring storage of transitions plus the priority sum tree."""

    def __init__(self, capacity: int, obs_dim: int = OBSERVATION_DIM,
                 alpha: float = 0.6, eps: float = 1e-3):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if eps <= 0:
            raise ValueError("eps must be positive so every leaf keeps mass")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.alpha = alpha
        self.eps = eps
        self.stale_updates = 0
        self._tree = SumTree(capacity)
        self._obs = np.zeros((capacity, obs_dim))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_dim))
        self._terminals = np.zeros(capacity)
        self._ids = np.full(capacity, -1, dtype=np.int64)
        self._seeds = np.zeros(capacity)
        self._next_id = 0
        self._max_seed = 1.0

    def __len__(self) -> int:
        return min(self._next_id, self.capacity)

    def _leaf_mass(self, seed: float) -> float:
        return (abs(seed) + self.eps) ** self.alpha

    def push(self, t: Transition, priority_seed: float | None = None) -> int:
        """Store a transition; returns its global insertion id.

        Without an explicit seed the transition enters at the running
        maximum so it is sampled at least once before its priority decays.
        """
        seed = self._max_seed if priority_seed is None else float(priority_seed)
        self._max_seed = max(self._max_seed, abs(seed))
        slot = self._next_id % self.capacity
        self._obs[slot] = t.obs
        self._actions[slot] = int(t.action)
        self._rewards[slot] = t.reward
        self._next_obs[slot] = t.next_obs
        self._terminals[slot] = 1.0 if t.terminal else 0.0
        self._seeds[slot] = seed
        gid = self._next_id
        self._ids[slot] = gid
        self._tree.set(slot, self._leaf_mass(seed))
        self._next_id += 1
        return gid

    def sample(self, batch: int, beta: float,
               rng: np.random.Generator) -> TransitionBatch:
        """Stratified proportional sample with importance weights."""
        n = len(self)
        if batch < 1:
            raise ValueError(f"batch must be >= 1, got {batch}")
        if n < batch:
            raise StateError(f"buffer holds {n} < batch {batch} transitions")
        total = self._tree.total
        segment = total / batch
        offsets = (np.arange(batch) + rng.random(batch)) * segment
        slots = np.array([self._tree.locate(m) for m in offsets], dtype=np.int64)

        probs = np.array([self._tree.get(s) for s in slots]) / total
        weights = (n * probs) ** (-beta)
        weights = weights / weights.max()

        return TransitionBatch(
            obs=self._obs[slots].copy(),
            actions=self._actions[slots].copy(),
            rewards=self._rewards[slots].copy(),
            next_obs=self._next_obs[slots].copy(),
            terminals=self._terminals[slots].copy(),
            weights=weights,
            indices=self._ids[slots].copy(),
        )

    def update_priorities(self, indices, td_errors):
        """Refresh leaf masses from new TD errors; stale ids are skipped."""
        indices = np.asarray(indices, dtype=np.int64)
        td_errors = np.asarray(td_errors, dtype=float)
        if indices.shape != td_errors.shape:
            raise ValueError("indices and td_errors must align")
        for gid, delta in zip(indices, td_errors):
            slot = int(gid) % self.capacity
            if self._ids[slot] != gid:
                self.stale_updates += 1
                continue
            seed = abs(float(delta))
            self._seeds[slot] = seed
            self._max_seed = max(self._max_seed, seed)
            self._tree.set(slot, self._leaf_mass(seed))

    @property
    def tree_total(self) -> float:
        return self._tree.total

    def leaf_masses(self) -> np.ndarray:
        return self._tree.leaf_masses()[:len(self)]

    # -- snapshots -----------------------------------------------------------

    def save(self, path):
        """Write a versioned binary snapshot for resumable training."""
        n = len(self)
        header = struct.pack(
            "<4sIQQQddd", _SNAPSHOT_MAGIC, _SNAPSHOT_VERSION,
            self.capacity, n, self._next_id, self.alpha, self.eps,
            self._max_seed) + struct.pack("<I", self.obs_dim)
        with open(path, "wb") as fh:
            fh.write(header)
            order = np.argsort(self._ids[:n]) if n else np.array([], dtype=int)
            for slot in order:
                fh.write(struct.pack("<qdBdB",
                                     int(self._ids[slot]),
                                     float(self._seeds[slot]),
                                     int(self._actions[slot]),
                                     float(self._rewards[slot]),
                                     int(self._terminals[slot])))
                fh.write(self._obs[slot].tobytes())
                fh.write(self._next_obs[slot].tobytes())

    @classmethod
    def load(cls, path) -> "PrioritizedBuffer":
        with open(path, "rb") as fh:
            head = fh.read(struct.calcsize("<4sIQQQddd"))
            magic, version, capacity, n, next_id, alpha, eps, max_seed = \
                struct.unpack("<4sIQQQddd", head)
            if magic != _SNAPSHOT_MAGIC:
                raise ValueError("not a replay snapshot (bad magic)")
            if version != _SNAPSHOT_VERSION:
                raise ValueError(f"unsupported snapshot version {version}")
            (obs_dim,) = struct.unpack("<I", fh.read(4))
            buf = cls(capacity=capacity, obs_dim=obs_dim, alpha=alpha, eps=eps)
            rec = struct.calcsize("<qdBdB")
            vec = obs_dim * 8
            for _ in range(n):
                gid, seed, action, reward, terminal = struct.unpack(
                    "<qdBdB", fh.read(rec))
                obs = np.frombuffer(fh.read(vec)).copy()
                next_obs = np.frombuffer(fh.read(vec)).copy()
                slot = gid % capacity
                buf._obs[slot] = obs
                buf._actions[slot] = action
                buf._rewards[slot] = reward
                buf._next_obs[slot] = next_obs
                buf._terminals[slot] = terminal
                buf._ids[slot] = gid
                buf._seeds[slot] = seed
                buf._tree.set(slot, buf._leaf_mass(seed))
            buf._next_id = next_id
            buf._max_seed = max_seed
        return buf
