"""Inside the contextual-bandit environment: basis, observations, rewards.

Builds the column-normalized cosine basis, decodes actions into residual
waveforms, and steps the one-episode environment with a few hand-written
policies to show the reward structure.  Takes ~1 minute (one GRAPE run).
"""

import numpy as np
from threadpoolctl import threadpool_limits

from quditcal import GrapeConfig, NOMINAL_PARAMS, NoiseConfig, grape_multistart, target_cz3
from quditcal.env import (
    CalibrationEnv,
    EnvConfig,
    compose_pulse,
    cosine_basis,
    residual_from_action,
)

threadpool_limits(limits=1)

print("== cosine basis ==")
basis = cosine_basis(160, 20)
gram = basis.matrix.T @ basis.matrix
print(f"N=160, K=20: column norms 1, Gram-identity defect {np.max(np.abs(gram - np.eye(20))):.1e}")

print("\n== action decoding ==")
rng = np.random.default_rng(7)
action = rng.uniform(-1, 1, 40)
residual, _ = residual_from_action(action, basis, alpha=0.03)
print(f"|action| <= 1 -> residual waveforms with max |d_eps| = {np.max(np.abs(residual)):.4f}")

print("\n== environment episodes ==")
oct_result = grape_multistart(GrapeConfig(), NOMINAL_PARAMS, target_cz3(), restarts=3)
config = EnvConfig(
    baseline=oct_result.pulse,
    nominal=NOMINAL_PARAMS,
    target=target_cz3(),
    noise=NoiseConfig(seed=5),
)
env = CalibrationEnv(config)

record = env.episode(lambda obs: np.zeros(40))
print(f"zero action: F_OCT = F_RL = {record.f_oct:.4f}, reward = {record.reward}")

record = env.episode(lambda obs: rng.uniform(-1, 1, 40))
print(f"random action: F_OCT = {record.f_oct:.4f}, F_RL = {record.f_rl:.4f}, "
      f"reward = {record.reward:+.4f}")

# a crude hand-made policy: push mode 1 of drive 1 proportionally to the
# first normalized offset
def hand_policy(obs):
    a = np.zeros(40)
    a[0] = np.clip(-0.3 * obs[0], -1, 1)
    return a

rewards = [env.episode(hand_policy).reward for _ in range(20)]
print(f"hand-made policy over 20 devices: mean reward {np.mean(rewards):+.5f}")
print("guessing the right correction is hard; demo 05 trains an agent that finds it")
