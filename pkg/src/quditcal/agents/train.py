"""Training loop, learning-curve logging, and full-state checkpoints.

One environment episode per step.  Off-policy agents act randomly for the
warmup period and then take one gradient update per step; PPO alternates
rollout collection with epochs of minibatch updates.  Checkpoints capture
networks, optimizer moments, the replay buffer, and the exact RNG stream
states, so a resumed run continues the episode index bitwise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..env import CalibrationEnv, EpisodeRecord
from ..nn import CheckpointError, load_array_bundle, save_array_bundle
from ..noise import STREAM_EXPLORATION, STREAM_REPLAY, make_stream
from .common import AgentConfig
from .ddpg import DdpgAgent, Td3Agent
from .ppo import PpoAgent
from .sac import SacAgent

CHECKPOINT_FORMAT = "quditcal-checkpoint-v1"

_AGENT_CLASSES = {
    "sac": SacAgent,
    "td3": Td3Agent,
    "ddpg": DdpgAgent,
    "ppo": PpoAgent,
}


class TrainingError(RuntimeError):
    """Training halted (non-finite loss); a diagnostic checkpoint is written first."""


def make_agent(config: AgentConfig):
    return _AGENT_CLASSES[config.algorithm](config)


@dataclass
class LearningCurve:
    """Per-episode end fidelity and its running maximum."""

    fidelities: np.ndarray
    running_best: np.ndarray

    @classmethod
    def from_fidelities(cls, fidelities) -> "LearningCurve":
        f = np.asarray(fidelities, dtype=float)
        best = np.maximum.accumulate(f) if f.size else f.copy()
        return cls(fidelities=f, running_best=best)


def train(
    agent,
    env: CalibrationEnv,
    total_steps: int,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int = 10_000,
    episode_callback=None,
    resume: tuple | None = None,
) -> LearningCurve:
    """Run `total_steps` episodes (counting any resumed prefix) and log fidelity.

    `resume` is a (manifest, named_arrays) pair from load_training_checkpoint;
    the agent must already carry the restored state.  Stream positions are
    restored exactly, so the continued run matches an uninterrupted one.
    """
    cfg = agent.config
    streams = {
        "exploration": make_stream(cfg.seed, STREAM_EXPLORATION),
        "replay": make_stream(cfg.seed, STREAM_REPLAY),
    }
    fidelities: list[float] = []
    step = 0
    if resume is not None:
        manifest, named = resume
        states = manifest["rng_states"]
        streams["exploration"].bit_generator.state = states["exploration"]
        streams["replay"].bit_generator.state = states["replay"]
        env.restore_stream_states(
            {"device": states["env_device"], "estimation": states["env_estimation"]}
        )
        env.clamp_warnings = int(manifest.get("env_clamp_warnings", 0))
        step = int(manifest["step"])
        fidelities = [float(x) for x in named["curve_fidelities"][0]]
        if len(fidelities) != step:
            raise CheckpointError("checkpointed curve length does not match its step count")

    def note(record: EpisodeRecord):
        fidelities.append(record.f_rl)
        if episode_callback is not None:
            episode_callback(len(fidelities) - 1, record)

    def checkpoint(tag=None):
        if checkpoint_dir is None:
            return
        name = tag if tag is not None else f"checkpoint_{step:08d}"
        save_training_checkpoint(
            Path(checkpoint_dir) / name, agent, env, streams, step, fidelities
        )

    def check_finite(diag: dict):
        bad = [k for k, v in diag.items() if isinstance(v, float) and not np.isfinite(v)]
        if bad:
            checkpoint("checkpoint_diagnostic")
            raise TrainingError(f"non-finite diagnostics {bad} at step {step}")

    if agent.on_policy:
        step = _train_ppo(agent, env, total_steps, streams, step, note, check_finite,
                          checkpoint, checkpoint_every)
    else:
        step = _train_off_policy(agent, env, total_steps, streams, step, note,
                                 check_finite, checkpoint, checkpoint_every)
    checkpoint("checkpoint_final")
    return LearningCurve.from_fidelities(fidelities)


def _train_off_policy(agent, env, total_steps, streams, step, note, check_finite,
                      checkpoint, checkpoint_every):
    cfg = agent.config
    expl = streams["exploration"]
    replay = streams["replay"]
    while step < total_steps:
        if step < cfg.warmup_steps:
            provider = lambda obs: expl.uniform(-1.0, 1.0, env.action_dim)
        else:
            provider = lambda obs: agent.act(obs, deterministic=False, rng=expl)
        record = env.episode(provider)
        agent.buffer.add(record.observation, record.action, record.reward)
        note(record)
        step += 1
        if step > cfg.warmup_steps and agent.buffer.size >= cfg.batch_size:
            diag = agent.update(agent.buffer.sample(cfg.batch_size, replay))
            check_finite(diag)
        if checkpoint_every and step % checkpoint_every == 0 and step < total_steps:
            checkpoint()
    return step


def _train_ppo(agent, env, total_steps, streams, step, note, check_finite,
               checkpoint, checkpoint_every):
    cfg = agent.config
    expl = streams["exploration"]
    next_checkpoint = ((step // checkpoint_every) + 1) * checkpoint_every if checkpoint_every else None
    while step < total_steps:
        n = min(cfg.ppo_rollout, total_steps - step)
        obs = np.zeros((n, cfg.obs_dim))
        raws = np.zeros((n, cfg.action_dim))
        logps = np.zeros(n)
        rewards = np.zeros(n)
        for i in range(n):
            def provider(o, _i=i):
                action, raw, logp = agent.act_rollout(o, expl)
                obs[_i] = o
                raws[_i] = raw
                logps[_i] = logp
                return action

            record = env.episode(provider)
            rewards[i] = record.reward
            note(record)
        step += n
        diag = agent.update_rollout(obs, raws, logps, rewards)
        check_finite(diag)
        # PPO checkpoints land on rollout boundaries
        if next_checkpoint is not None and step >= next_checkpoint and step < total_steps:
            checkpoint()
            next_checkpoint = ((step // checkpoint_every) + 1) * checkpoint_every
    return step


# ---------------------------------------------------------------------------
# Checkpoints

def save_training_checkpoint(path, agent, env, streams, step, fidelities):
    cfg = agent.config
    env_states = env.stream_states()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "algorithm": agent.algorithm,
        "obs_dim": cfg.obs_dim,
        "action_dim": cfg.action_dim,
        "hidden": list(cfg.hidden),
        "step": int(step),
        "agent_scalars": _jsonable(agent.state_scalars()),
        "rng_states": {
            "exploration": _jsonable(streams["exploration"].bit_generator.state),
            "replay": _jsonable(streams["replay"].bit_generator.state),
            "env_device": _jsonable(env_states["device"]),
            "env_estimation": _jsonable(env_states["estimation"]),
        },
        "env_clamp_warnings": env.clamp_warnings,
        "agent_config": _config_dict(cfg),
    }
    named = dict(agent.state_arrays())
    if not agent.on_policy:
        named["buffer"] = agent.buffer.state_arrays()
        manifest["buffer_insert_at"] = agent.buffer.insert_at
    named["curve_fidelities"] = [np.asarray(fidelities, dtype=float)]
    save_array_bundle(Path(path), manifest, named)


def load_training_checkpoint(path):
    """Rebuild (agent, manifest, named_arrays) from a checkpoint directory."""
    manifest, named = load_array_bundle(Path(path))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unrecognized checkpoint format {manifest.get('format')!r}")
    cfg = AgentConfig(**{k: (tuple(v) if k == "hidden" else v)
                         for k, v in manifest["agent_config"].items()})
    agent = make_agent(cfg)
    agent.restore_state(named, manifest["agent_scalars"])
    if not agent.on_policy:
        agent.buffer.restore(named["buffer"], manifest["buffer_insert_at"])
    return agent, manifest, named


class Policy:
    """Inference-only deterministic policy reconstructed from a checkpoint."""

    def __init__(self, algorithm: str, act_fn, manifest: dict):
        self.algorithm = algorithm
        self._act = act_fn
        self.manifest = manifest

    def act(self, obs, deterministic: bool = True, rng=None):
        return self._act(obs)

    def __call__(self, obs):
        return self._act(obs)


class _NullEnv:
    """Stands in for the environment when exporting an agent outside training."""

    clamp_warnings = 0

    def stream_states(self):
        gen = make_stream(0, 0)
        return {
            "device": gen.bit_generator.state,
            "estimation": gen.bit_generator.state,
        }


def policy_export(agent, path):
    """Write a checkpoint usable both for resumption and for inference."""
    save_training_checkpoint(
        Path(path), agent, _NullEnv(), {
            "exploration": make_stream(agent.config.seed, STREAM_EXPLORATION),
            "replay": make_stream(agent.config.seed, STREAM_REPLAY),
        }, 0, [],
    )


def policy_import(path) -> Policy:
    agent, manifest, _ = load_training_checkpoint(path)
    return Policy(
        algorithm=agent.algorithm,
        act_fn=lambda obs: agent.act(obs, deterministic=True),
        manifest=manifest,
    )


def _config_dict(cfg: AgentConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays in RNG state dicts to JSON types."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
