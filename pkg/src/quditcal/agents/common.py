"""Shared agent configuration, replay storage, and small math helpers.

Every episode here is terminal (one-step contextual bandit), so critic
regression targets are always the raw reward and no next observation is ever
stored: the replay buffer holds only (observation, action, reward).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALGORITHMS = ("sac", "td3", "ddpg", "ppo")

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str
    obs_dim: int = 3
    action_dim: int = 40
    hidden: tuple[int, ...] = (256, 256)
    lr: float = 3e-4
    gamma: float = 0.99  # stored for completeness; inert for one-step episodes
    tau: float = 0.005
    batch_size: int = 256
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    # Gaussian action-noise scale for TD3/DDPG; on the 40-dimensional residual
    # action the fidelity cost of exploration grows ~ sigma^2 * dim, so 0.05
    # keeps late-training episode rewards net positive
    exploration_sigma: float = 0.05
    sac_entropy_target: float | None = None  # None -> -action_dim
    ppo_rollout: int = 1024
    ppo_epochs: int = 10
    ppo_clip: float = 0.2
    ppo_value_coef: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected {ALGORITHMS}")
        if self.obs_dim < 1 or self.action_dim < 1:
            raise ValueError("dimensions must be positive")
        if not 0 < self.lr:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0 <= self.tau <= 1:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need buffer_capacity >= batch_size >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def entropy_target(self) -> float:
        if self.sac_entropy_target is None:
            return -float(self.action_dim)
        return self.sac_entropy_target


class ReplayBuffer:
    """Ring buffer of (observation, action, reward); uniform minibatch sampling."""

    FIELDS = ("obs", "action", "reward")

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.size = 0
        self.insert_at = 0

    def add(self, obs: np.ndarray, action: np.ndarray, reward: float):
        i = self.insert_at
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.insert_at = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size < 1:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "action": self.actions[idx],
            "reward": self.rewards[idx],
        }

    def state_arrays(self) -> list[np.ndarray]:
        return [
            self.obs[: self.size].copy(),
            self.actions[: self.size].copy(),
            self.rewards[: self.size].copy(),
        ]

    def restore(self, arrays: list[np.ndarray], insert_at: int):
        obs, actions, rewards = arrays
        n = obs.shape[0]
        if n > self.capacity:
            raise ValueError("stored buffer larger than capacity")
        self.obs[:n] = obs
        self.actions[:n] = actions
        self.rewards[:n] = rewards
        self.size = n
        self.insert_at = int(insert_at) % self.capacity


def batch_arrays(batch: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unpack and sanity check a replay minibatch (no next-state anywhere)."""
    extra = set(batch) - set(ReplayBuffer.FIELDS)
    if extra:
        raise ValueError(f"bandit batches carry only (obs, action, reward); got extra {extra}")
    o = np.asarray(batch["obs"], dtype=float)
    a = np.asarray(batch["action"], dtype=float)
    r = np.asarray(batch["reward"], dtype=float)
    return o, a, r


def diag_gauss_logp(x: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over action components."""
    z = (x - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)
