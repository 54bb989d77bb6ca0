"""Soft Actor-Critic with a tanh-squashed Gaussian policy and auto-tuned temperature.

The policy head emits (mean, log_std); actions are a = tanh(mean + std * xi).
Critic targets are the raw reward (terminal episodes), the actor minimizes
alpha * log pi - min(Q1, Q2) with reparametrized samples, and the temperature
alpha tracks the usual -|A| entropy target.
"""

from __future__ import annotations

import numpy as np

from ..nn import adam_init, adam_step, mlp_backward, mlp_forward, mlp_init, soft_update
from ..noise import (
    STREAM_AGENT_INIT,
    STREAM_AGENT_UPDATE,
    make_stream,
    standard_normal,
)
from .common import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    AgentConfig,
    ReplayBuffer,
    batch_arrays,
)
from .ddpg import _critic_regress

# The policy starts at the entropy-target equilibrium (std ~ 0.1, the same
# scale as the deterministic agents' exploration noise) and the temperature
# starts at the reward scale (rewards here are fidelity increments, O(1e-2)).
# Initializing alpha large lets the entropy term dwarf the critic signal and
# inflate the policy spread for most of the training budget.
LOG_STD_INIT = float(np.log(0.1))
LOG_ALPHA_INIT = float(np.log(1e-3))


def _tanh_gauss_logp(xi: np.ndarray, log_std: np.ndarray, u: np.ndarray) -> np.ndarray:
    """log pi(tanh(u)|o) for u = mean + std * xi, summed over components.

    Uses log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)) for stability.
    """
    log_jac = 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    base = -0.5 * xi * xi - log_std - 0.5 * np.log(2.0 * np.pi)
    return np.sum(base - log_jac, axis=-1)


class SacAgent:
    algorithm = "sac"
    on_policy = False

    def __init__(self, config: AgentConfig):
        self.config = config
        rng = make_stream(config.seed, STREAM_AGENT_INIT)
        da = config.action_dim
        self.actor = mlp_init(
            (config.obs_dim, *config.hidden, 2 * da), rng, final_zero=True
        )
        # zero head: deterministic action starts at the baseline; the log-std
        # half of the head starts at the exploration scale instead of std 1
        self.actor.biases[-1][da:] = LOG_STD_INIT
        critic_sizes = (config.obs_dim + da, *config.hidden, 1)
        self.critics = [mlp_init(critic_sizes, rng) for _ in range(2)]
        self.target_critics = [c.copy() for c in self.critics]
        self.actor_adam = adam_init(self.actor.params(), lr=config.lr)
        self.critic_adams = [adam_init(c.params(), lr=config.lr) for c in self.critics]
        self.log_alpha = np.full(1, LOG_ALPHA_INIT)
        self.alpha_adam = adam_init([self.log_alpha], lr=config.lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, config.obs_dim, da)
        self._update_rng = make_stream(config.seed, STREAM_AGENT_UPDATE)
        self.update_count = 0
        self.noop_updates = 0

    def _policy_head(self, obs):
        out, cache = mlp_forward(self.actor, obs)
        da = self.config.action_dim
        mean = out[..., :da]
        log_std_raw = out[..., da:]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std, log_std_raw, cache

    def act(self, obs, deterministic: bool = False, rng: np.random.Generator | None = None):
        mean, log_std, _, _ = self._policy_head(np.asarray(obs, dtype=float))
        if deterministic:
            return np.tanh(mean)
        if rng is None:
            raise ValueError("stochastic action requires an rng")
        xi = standard_normal(rng, mean.shape)
        return np.tanh(mean + np.exp(log_std) * xi)

    def update(self, batch: dict) -> dict:
        obs, actions, rewards = batch_arrays(batch)
        b = obs.shape[0]
        if b < self.config.batch_size:
            self.noop_updates += 1
            return {"noop": True}
        self.update_count += 1
        cfg = self.config
        critic_losses = [
            _critic_regress(c, ad, obs, actions, rewards)
            for c, ad in zip(self.critics, self.critic_adams)
        ]

        # actor: minimize mean(alpha log pi - min_i Q_i(o, a~))
        alpha = float(np.exp(self.log_alpha[0]))
        mean, log_std, log_std_raw, cache_a = self._policy_head(obs)
        std = np.exp(log_std)
        xi = standard_normal(self._update_rng, mean.shape)
        u = mean + std * xi
        a = np.tanh(u)
        logp = _tanh_gauss_logp(xi, log_std, u)

        x = np.concatenate([obs, a], axis=1)
        qs, caches = [], []
        for critic in self.critics:
            q, cq = mlp_forward(critic, x)
            qs.append(q[:, 0])
            caches.append(cq)
        use_first = qs[0] <= qs[1]
        q_min = np.where(use_first, qs[0], qs[1])
        actor_loss = float(np.mean(alpha * logp - q_min))

        # d(-mean q_min)/da, routed through the per-sample argmin critic
        ga = np.zeros_like(a)
        for critic, cq, mask in (
            (self.critics[0], caches[0], use_first),
            (self.critics[1], caches[1], ~use_first),
        ):
            gy = np.where(mask, -1.0 / b, 0.0)[:, None]
            _, gx = mlp_backward(critic, cq, gy)
            ga += gx[:, cfg.obs_dim :]

        # d log pi / du = 2 tanh(u); the -xi^2/2 term is constant given xi
        g_u = (alpha * 2.0 * a) / b + ga * (1.0 - a * a)
        g_mean = g_u
        g_log_std = -alpha / b + g_u * (std * xi)
        g_log_std = g_log_std * ((log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX))
        g_out = np.concatenate([g_mean, g_log_std], axis=1)
        grads, _ = mlp_backward(self.actor, cache_a, g_out)
        adam_step(self.actor.params(), grads, self.actor_adam)

        # temperature: minimize -log_alpha * mean(log pi + target_entropy)
        ent_err = float(np.mean(logp + cfg.entropy_target))
        adam_step([self.log_alpha], [np.array([-ent_err])], self.alpha_adam)

        for tc, c in zip(self.target_critics, self.critics):
            soft_update(tc, c, cfg.tau)
        return {
            "critic_loss": float(np.mean(critic_losses)),
            "actor_loss": actor_loss,
            "alpha": alpha,
            "entropy_error": ent_err,
            "noop": False,
        }

    # checkpoint plumbing -------------------------------------------------

    def state_arrays(self) -> dict[str, list[np.ndarray]]:
        out = {"actor": self.actor.params()}
        for i, (c, tc) in enumerate(zip(self.critics, self.target_critics)):
            out[f"critic{i}"] = c.params()
            out[f"target_critic{i}"] = tc.params()
        out["actor_adam_m"] = self.actor_adam.m
        out["actor_adam_v"] = self.actor_adam.v
        for i, ad in enumerate(self.critic_adams):
            out[f"critic{i}_adam_m"] = ad.m
            out[f"critic{i}_adam_v"] = ad.v
        out["log_alpha"] = [self.log_alpha]
        out["alpha_adam_m"] = self.alpha_adam.m
        out["alpha_adam_v"] = self.alpha_adam.v
        return out

    def state_scalars(self) -> dict:
        sc = {
            "update_count": self.update_count,
            "noop_updates": self.noop_updates,
            "actor_adam_step": self.actor_adam.step,
            "alpha_adam_step": self.alpha_adam.step,
            "update_rng": self._update_rng.bit_generator.state,
        }
        for i, ad in enumerate(self.critic_adams):
            sc[f"critic{i}_adam_step"] = ad.step
        return sc

    def restore_state(self, named: dict[str, list[np.ndarray]], scalars: dict):
        def copy_into(params, arrays):
            for p, a in zip(params, arrays):
                p[:] = a

        copy_into(self.actor.params(), named["actor"])
        for i, (c, tc) in enumerate(zip(self.critics, self.target_critics)):
            copy_into(c.params(), named[f"critic{i}"])
            copy_into(tc.params(), named[f"target_critic{i}"])
            copy_into(self.critic_adams[i].m, named[f"critic{i}_adam_m"])
            copy_into(self.critic_adams[i].v, named[f"critic{i}_adam_v"])
            self.critic_adams[i].step = int(scalars[f"critic{i}_adam_step"])
        copy_into(self.actor_adam.m, named["actor_adam_m"])
        copy_into(self.actor_adam.v, named["actor_adam_v"])
        self.actor_adam.step = int(scalars["actor_adam_step"])
        self.log_alpha[:] = named["log_alpha"][0]
        copy_into(self.alpha_adam.m, named["alpha_adam_m"])
        copy_into(self.alpha_adam.v, named["alpha_adam_v"])
        self.alpha_adam.step = int(scalars["alpha_adam_step"])
        self.update_count = int(scalars["update_count"])
        self.noop_updates = int(scalars["noop_updates"])
        self._update_rng.bit_generator.state = scalars["update_rng"]
