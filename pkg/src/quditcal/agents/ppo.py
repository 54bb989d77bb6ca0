"""PPO with a clipped surrogate, specialized to one-step episodes.

The policy is Gaussian with a state-dependent mean and a single learned,
state-independent log-std vector.  Since every episode is terminal, the
advantage is simply r - V(o); advantages are normalized per rollout and the
value head regresses V(o) -> r.  No entropy bonus.

Actions sent to the environment are clipped to [-1, 1]; the raw Gaussian
sample and its log density are kept for the importance ratios.
"""

from __future__ import annotations

import numpy as np

from ..nn import adam_init, adam_step, mlp_backward, mlp_forward, mlp_init
from ..noise import (
    STREAM_AGENT_INIT,
    STREAM_AGENT_UPDATE,
    make_stream,
    standard_normal,
)
from .common import AgentConfig, diag_gauss_logp


class PpoAgent:
    algorithm = "ppo"
    on_policy = True

    def __init__(self, config: AgentConfig):
        self.config = config
        rng = make_stream(config.seed, STREAM_AGENT_INIT)
        self.actor = mlp_init(
            (config.obs_dim, *config.hidden, config.action_dim), rng, final_zero=True
        )
        self.log_std = np.zeros(config.action_dim)
        self.value = mlp_init((config.obs_dim, *config.hidden, 1), rng)
        self.actor_adam = adam_init(self.actor.params() + [self.log_std], lr=config.lr)
        self.value_adam = adam_init(self.value.params(), lr=config.lr)
        self._update_rng = make_stream(config.seed, STREAM_AGENT_UPDATE)
        self.update_count = 0

    def act(self, obs, deterministic: bool = False, rng: np.random.Generator | None = None):
        mean, _ = mlp_forward(self.actor, np.asarray(obs, dtype=float))
        if deterministic:
            return np.clip(mean, -1.0, 1.0)
        if rng is None:
            raise ValueError("stochastic action requires an rng")
        raw = mean + np.exp(self.log_std) * standard_normal(rng, mean.shape)
        return np.clip(raw, -1.0, 1.0)

    def act_rollout(self, obs, rng: np.random.Generator):
        """Sample an action for collection: (clipped action, raw sample, log prob)."""
        mean, _ = mlp_forward(self.actor, np.asarray(obs, dtype=float))
        raw = mean + np.exp(self.log_std) * standard_normal(rng, mean.shape)
        logp = float(diag_gauss_logp(raw, mean, self.log_std))
        return np.clip(raw, -1.0, 1.0), raw, logp

    def update_rollout(self, obs, raw_actions, logp_old, rewards) -> dict:
        """Clipped-surrogate epochs over one collected rollout."""
        cfg = self.config
        obs = np.asarray(obs, dtype=float)
        raw = np.asarray(raw_actions, dtype=float)
        logp_old = np.asarray(logp_old, dtype=float)
        rewards = np.asarray(rewards, dtype=float)
        n = obs.shape[0]

        v0, _ = mlp_forward(self.value, obs)
        adv = rewards - v0[:, 0]
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        clip_lo, clip_hi = 1.0 - cfg.ppo_clip, 1.0 + cfg.ppo_clip
        policy_loss = value_loss = clip_frac = 0.0
        n_minibatches = 0
        for _ in range(cfg.ppo_epochs):
            perm = self._update_rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                b = idx.size
                o_mb, raw_mb, adv_mb = obs[idx], raw[idx], adv[idx]

                mean, cache = mlp_forward(self.actor, o_mb)
                std = np.exp(self.log_std)
                diff = raw_mb - mean
                logp = diag_gauss_logp(raw_mb, mean, self.log_std)
                ratio = np.exp(logp - logp_old[idx])
                s1 = ratio * adv_mb
                s2 = np.clip(ratio, clip_lo, clip_hi) * adv_mb
                policy_loss += float(-np.mean(np.minimum(s1, s2)))
                clip_frac += float(np.mean(s2 < s1))
                # gradient flows only where the unclipped branch is active
                g_logp = np.where(s1 <= s2, -adv_mb * ratio, 0.0) / b
                g_mean = g_logp[:, None] * diff / (std * std)
                g_log_std = np.sum(
                    g_logp[:, None] * ((diff / std) ** 2 - 1.0), axis=0
                )
                grads, _ = mlp_backward(self.actor, cache, g_mean)
                adam_step(
                    self.actor.params() + [self.log_std],
                    grads + [g_log_std],
                    self.actor_adam,
                )

                v, vcache = mlp_forward(self.value, o_mb)
                verr = v[:, 0] - rewards[idx]
                value_loss += float(cfg.ppo_value_coef * np.mean(verr * verr))
                gy = (cfg.ppo_value_coef * 2.0 * verr / b)[:, None]
                vgrads, _ = mlp_backward(self.value, vcache, gy)
                adam_step(self.value.params(), vgrads, self.value_adam)
                n_minibatches += 1

        self.update_count += 1
        return {
            "policy_loss": policy_loss / n_minibatches,
            "value_loss": value_loss / n_minibatches,
            "clip_fraction": clip_frac / n_minibatches,
            "noop": False,
        }

    # checkpoint plumbing -------------------------------------------------

    def state_arrays(self) -> dict[str, list[np.ndarray]]:
        return {
            "actor": self.actor.params(),
            "log_std": [self.log_std],
            "value": self.value.params(),
            "actor_adam_m": self.actor_adam.m,
            "actor_adam_v": self.actor_adam.v,
            "value_adam_m": self.value_adam.m,
            "value_adam_v": self.value_adam.v,
        }

    def state_scalars(self) -> dict:
        return {
            "update_count": self.update_count,
            "actor_adam_step": self.actor_adam.step,
            "value_adam_step": self.value_adam.step,
            "update_rng": self._update_rng.bit_generator.state,
        }

    def restore_state(self, named: dict[str, list[np.ndarray]], scalars: dict):
        def copy_into(params, arrays):
            for p, a in zip(params, arrays):
                p[:] = a

        copy_into(self.actor.params(), named["actor"])
        self.log_std[:] = named["log_std"][0]
        copy_into(self.value.params(), named["value"])
        copy_into(self.actor_adam.m, named["actor_adam_m"])
        copy_into(self.actor_adam.v, named["actor_adam_v"])
        copy_into(self.value_adam.m, named["value_adam_m"])
        copy_into(self.value_adam.v, named["value_adam_v"])
        self.actor_adam.step = int(scalars["actor_adam_step"])
        self.value_adam.step = int(scalars["value_adam_step"])
        self.update_count = int(scalars["update_count"])
        self._update_rng.bit_generator.state = scalars["update_rng"]
