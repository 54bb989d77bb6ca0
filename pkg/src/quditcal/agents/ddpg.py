"""Deterministic-policy agents: DDPG and its twin-critic variant TD3.

Specialized to one-step episodes: critics regress directly onto the reward
(terminal transitions leave no bootstrap term, so gamma never enters).  Target
networks are still maintained with the usual Polyak updates to keep the
standard algorithm shape, but they never feed a regression target.
"""

from __future__ import annotations

import numpy as np

from ..nn import Mlp, adam_init, adam_step, mlp_backward, mlp_forward, soft_update
from ..noise import STREAM_AGENT_INIT, make_stream, standard_normal
from .common import AgentConfig, ReplayBuffer, batch_arrays


def _critic_regress(critic: Mlp, adam, obs, actions, rewards) -> float:
    """One Adam step of Q(o, a) -> r regression; returns the MSE loss."""
    x = np.concatenate([obs, actions], axis=1)
    q, cache = mlp_forward(critic, x)
    err = q[:, 0] - rewards
    loss = float(np.mean(err * err))
    gy = (2.0 * err / err.size)[:, None]
    grads, _ = mlp_backward(critic, cache, gy)
    adam_step(critic.params(), grads, adam)
    return loss


def _ascend_critic(actor: Mlp, actor_adam, critic: Mlp, obs, obs_dim) -> float:
    """One Adam step on the actor maximizing Q(o, tanh(actor(o)))."""
    pre, cache_a = mlp_forward(actor, obs)
    a_pi = np.tanh(pre)
    q, cache_q = mlp_forward(critic, np.concatenate([obs, a_pi], axis=1))
    loss = float(-np.mean(q[:, 0]))
    gq = np.full((obs.shape[0], 1), -1.0 / obs.shape[0])
    _, gx = mlp_backward(critic, cache_q, gq)
    g_pre = gx[:, obs_dim:] * (1.0 - a_pi * a_pi)
    grads, _ = mlp_backward(actor, cache_a, g_pre)
    adam_step(actor.params(), grads, actor_adam)
    return loss


class DdpgAgent:
    algorithm = "ddpg"
    on_policy = False

    def __init__(self, config: AgentConfig):
        self.config = config
        rng = make_stream(config.seed, STREAM_AGENT_INIT)
        actor_sizes = (config.obs_dim, *config.hidden, config.action_dim)
        critic_sizes = (config.obs_dim + config.action_dim, *config.hidden, 1)
        # zero-init actor head: the initial deterministic policy is the zero
        # correction, i.e. training starts from the baseline pulse
        self.actor = self._init_actor(actor_sizes, rng)
        self.critics = [self._init_critic(critic_sizes, rng) for _ in range(self.n_critics)]
        self.target_actor = self.actor.copy()
        self.target_critics = [c.copy() for c in self.critics]
        self.actor_adam = adam_init(self.actor.params(), lr=config.lr)
        self.critic_adams = [adam_init(c.params(), lr=config.lr) for c in self.critics]
        self.buffer = ReplayBuffer(config.buffer_capacity, config.obs_dim, config.action_dim)
        self.update_count = 0
        self.noop_updates = 0

    n_critics = 1
    actor_delay = 1

    @staticmethod
    def _init_actor(sizes, rng) -> Mlp:
        from ..nn import mlp_init

        return mlp_init(sizes, rng, final_zero=True)

    @staticmethod
    def _init_critic(sizes, rng) -> Mlp:
        from ..nn import mlp_init

        return mlp_init(sizes, rng)

    def act(self, obs, deterministic: bool = False, rng: np.random.Generator | None = None):
        pre, _ = mlp_forward(self.actor, np.asarray(obs, dtype=float))
        a = np.tanh(pre)
        if deterministic:
            return a
        if rng is None:
            raise ValueError("exploration requires an rng")
        noise = self.config.exploration_sigma * standard_normal(rng, a.shape)
        return np.clip(a + noise, -1.0, 1.0)

    def update(self, batch: dict) -> dict:
        obs, actions, rewards = batch_arrays(batch)
        if obs.shape[0] < self.config.batch_size:
            self.noop_updates += 1
            return {"noop": True}
        self.update_count += 1
        critic_losses = [
            _critic_regress(c, ad, obs, actions, rewards)
            for c, ad in zip(self.critics, self.critic_adams)
        ]
        out = {"critic_loss": float(np.mean(critic_losses)), "noop": False}
        if self.update_count % self.actor_delay == 0:
            out["actor_loss"] = _ascend_critic(
                self.actor, self.actor_adam, self.critics[0], obs, self.config.obs_dim
            )
            soft_update(self.target_actor, self.actor, self.config.tau)
            for tc, c in zip(self.target_critics, self.critics):
                soft_update(tc, c, self.config.tau)
        return out

    # checkpoint plumbing -------------------------------------------------

    def state_arrays(self) -> dict[str, list[np.ndarray]]:
        out = {"actor": self.actor.params(), "target_actor": self.target_actor.params()}
        for i, (c, tc) in enumerate(zip(self.critics, self.target_critics)):
            out[f"critic{i}"] = c.params()
            out[f"target_critic{i}"] = tc.params()
        out["actor_adam_m"] = self.actor_adam.m
        out["actor_adam_v"] = self.actor_adam.v
        for i, ad in enumerate(self.critic_adams):
            out[f"critic{i}_adam_m"] = ad.m
            out[f"critic{i}_adam_v"] = ad.v
        return out

    def state_scalars(self) -> dict:
        sc = {
            "update_count": self.update_count,
            "noop_updates": self.noop_updates,
            "actor_adam_step": self.actor_adam.step,
        }
        for i, ad in enumerate(self.critic_adams):
            sc[f"critic{i}_adam_step"] = ad.step
        return sc

    def restore_state(self, named: dict[str, list[np.ndarray]], scalars: dict):
        def copy_into(params, arrays):
            for p, a in zip(params, arrays):
                p[:] = a

        copy_into(self.actor.params(), named["actor"])
        copy_into(self.target_actor.params(), named["target_actor"])
        for i, (c, tc) in enumerate(zip(self.critics, self.target_critics)):
            copy_into(c.params(), named[f"critic{i}"])
            copy_into(tc.params(), named[f"target_critic{i}"])
        copy_into(self.actor_adam.m, named["actor_adam_m"])
        copy_into(self.actor_adam.v, named["actor_adam_v"])
        self.actor_adam.step = int(scalars["actor_adam_step"])
        for i, ad in enumerate(self.critic_adams):
            copy_into(ad.m, named[f"critic{i}_adam_m"])
            copy_into(ad.v, named[f"critic{i}_adam_v"])
            ad.step = int(scalars[f"critic{i}_adam_step"])
        self.update_count = int(scalars["update_count"])
        self.noop_updates = int(scalars["noop_updates"])


class Td3Agent(DdpgAgent):
    """Twin critics and delayed (period-2) actor updates on top of DDPG."""

    algorithm = "td3"
    n_critics = 2
    actor_delay = 2
