"""Short residual-calibration training and its effect on a device ensemble.

Trains TD3 for 5000 bandit episodes on top of a nominal pulse (a scaled-down
version of the full 1e5-interaction protocol), then compares OCT and the
trained policy on a held-out 100-device ensemble.  Takes ~5 minutes; use the
quditcal CLI for full-size runs and artifact files.
"""

from threadpoolctl import threadpool_limits

from quditcal import GrapeConfig, NOMINAL_PARAMS, NoiseConfig, grape_multistart, target_cz3
from quditcal.agents import AgentConfig, make_agent, train
from quditcal.env import CalibrationEnv, EnvConfig
from quditcal.evaluate import eval_ensemble, eval_nominal, eval_single, zero_policy

threadpool_limits(limits=1)

print("== baseline pulse ==")
oct_result = grape_multistart(GrapeConfig(), NOMINAL_PARAMS, target_cz3(), restarts=3)
print(f"GRAPE infidelity: {oct_result.final_infidelity:.2e}")

config = EnvConfig(
    baseline=oct_result.pulse,
    nominal=NOMINAL_PARAMS,
    target=target_cz3(),
    noise=NoiseConfig(seed=42),
)
env = CalibrationEnv(config)

print("\n== training TD3 for 5000 episodes ==")
agent = make_agent(AgentConfig(algorithm="td3", action_dim=env.action_dim, seed=7))
curve = train(agent, env, total_steps=5000)
for i in (500, 2000, 4999):
    print(f"  episode {i}: running best F = {curve.running_best[i]:.4f}")

policy = lambda obs: agent.act(obs, deterministic=True)

print("\n== evaluation ==")
f_oct_nom = eval_nominal(zero_policy(40), config)
f_rl_nom = eval_nominal(policy, config)
print(f"nominal device:   OCT {f_oct_nom:.6f}   TD3 {f_rl_nom:.6f}")

f_oct_single = eval_single(zero_policy(40), config)
f_rl_single = eval_single(policy, config)
print(f"fixed device:     OCT {f_oct_single:.4f}     TD3 {f_rl_single:.4f}")

oct_stats = eval_ensemble(zero_policy(40), config, m=100, seed=999, method="oct")
rl_stats = eval_ensemble(policy, config, m=100, seed=999, method="td3")
print(f"100-device ensemble: OCT {oct_stats.mean:.4f} +- {oct_stats.std:.4f}")
print(f"                     TD3 {rl_stats.mean:.4f} +- {rl_stats.std:.4f}")
cut = 1.0 - (1.0 - rl_stats.mean) / (1.0 - oct_stats.mean)
print(f"mean infidelity reduced by {100 * cut:.0f}%, spread by "
      f"{oct_stats.std / rl_stats.std:.1f}x")
