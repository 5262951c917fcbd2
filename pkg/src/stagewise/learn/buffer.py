"""Ring replay buffer with n-step return assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stagewise.errors import NotReady, ValidationError


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    # last transition of a stage or episode segment; n-step sums stop here
    boundary: bool = False


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray  # n-step discounted sum
    next_obs: np.ndarray  # observation n' steps ahead
    discount: np.ndarray  # gamma^n' or 0 when a done flag cut the sum
    index: np.ndarray
    steps: np.ndarray  # n' actually used


class ReplayBuffer:
    def __init__(self, obs_dim: int, act_dim: int, capacity: int = 100_000, n_step: int = 3,
                 gamma: float = 0.99):
        if capacity < 1 or n_step < 1:
            raise ValidationError("capacity and n_step must be positive")
        self.capacity = capacity
        self.n_step = n_step
        self.gamma = gamma
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.action = np.zeros((capacity, act_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float64)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=bool)
        self.boundary = np.zeros(capacity, dtype=bool)
        self.cursor = 0  # total number of pushes so far
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        vals = (np.asarray(t.obs), np.asarray(t.action), np.asarray(t.next_obs), np.asarray(t.reward))
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise ValidationError("transition contains non-finite values")
        i = self.cursor % self.capacity
        self.obs[i] = t.obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = t.done
        self.boundary[i] = t.boundary or t.done
        self.cursor += 1
        self.size = min(self.size + 1, self.capacity)

    def mark_boundary(self) -> None:
        """Flag the most recent transition as the end of a segment."""
        if self.size:
            self.boundary[(self.cursor - 1) % self.capacity] = True

    def transition(self, i: int) -> Transition:
        return Transition(self.obs[i].copy(), self.action[i].copy(), float(self.reward[i]),
                          self.next_obs[i].copy(), bool(self.done[i]), bool(self.boundary[i]))

    def _age(self, idx: np.ndarray) -> np.ndarray:
        """Number of transitions stored after each slot."""
        return (self.cursor - 1 - idx) % self.capacity

    def nstep(self, idx: np.ndarray) -> Batch:
        idx = np.asarray(idx, dtype=np.int64)
        ret = np.zeros(len(idx))
        disc = np.ones(len(idx))
        steps = np.zeros(len(idx), dtype=np.int64)
        last = idx.copy()
        alive = np.ones(len(idx), dtype=bool)
        age = self._age(idx)
        for k in range(self.n_step):
            j = (idx + k) % self.capacity
            take = alive & (k <= age)
            ret = np.where(take, ret + disc * self.reward[j], ret)
            disc = np.where(take, disc * self.gamma, disc)
            steps = np.where(take, steps + 1, steps)
            last = np.where(take, j, last)
            alive = take & ~self.boundary[j]
        discount = np.where(self.done[last], 0.0, disc)
        return Batch(self.obs[idx], self.action[idx], ret, self.next_obs[last], discount, idx, steps)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size < batch_size:
            raise NotReady(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.nstep(idx)

    def state_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("obs", "action", "reward", "next_obs", "done", "boundary",
                                               "cursor", "size", "capacity", "n_step", "gamma")}

    def load_state_dict(self, d: dict) -> None:
        for k, v in d.items():
            setattr(self, k, v.copy() if isinstance(v, np.ndarray) else v)


def push(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.push(transition)


def sample(buffer: ReplayBuffer, batch_size: int, seed: int) -> Batch:
    return buffer.sample(batch_size, np.random.default_rng(seed))
