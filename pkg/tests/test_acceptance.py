"""End-to-end acceptance suite.

Each test is one acceptance criterion at its stated tolerance; run with -v to
get one pass/fail line per criterion.  The training-based criteria share
session-scoped fixtures (one GRAPE pulse and one 2e4-interaction training per
agent and gate), so the whole module runs in a couple of hours on a desktop.
"""

import json

import numpy as np
import pytest

from quditcal.agents import AgentConfig, make_agent, train
from quditcal.cli import main as cli_main
from quditcal.dynamics import (
    NOMINAL_PARAMS,
    PulseSet,
    avg_gate_fidelity,
    gate_target,
    max_unitarity_defect,
    propagate,
    target_alt,
    target_cz3,
)
from quditcal.env import CalibrationEnv, EnvConfig, cosine_basis
from quditcal.evaluate import (
    eval_ensemble,
    eval_nominal,
    eval_single,
    obs_noise_sweep,
    zero_policy,
)
from quditcal.grape import (
    GrapeConfig,
    grape_fidelity,
    grape_gradient,
    grape_multistart,
    grape_optimize,
)
from quditcal.noise import (
    STREAM_DEVICE,
    NoiseConfig,
    make_stream,
    sample_offsets,
)

from conftest import random_params

pytestmark = pytest.mark.acceptance

TRAIN_STEPS = 20_000
ENSEMBLE_M = 100
EVAL_SEED = 20_240_901
TRAIN_NOISE_SEED = 42
AGENT_SEED = 7


# ---------------------------------------------------------------------------
# Shared heavy artifacts

@pytest.fixture(scope="session")
def oct_pulse():
    result = grape_multistart(GrapeConfig(), NOMINAL_PARAMS, target_cz3(), restarts=3)
    assert result.converged, "nominal GRAPE must converge for downstream criteria"
    return result


@pytest.fixture(scope="session")
def oct_pulse_alt():
    result = grape_multistart(GrapeConfig(), NOMINAL_PARAMS, target_alt(), restarts=3)
    assert result.converged
    return result


def _residual_env(baseline, gate="cz3"):
    return CalibrationEnv(
        EnvConfig(
            baseline=baseline,
            nominal=NOMINAL_PARAMS,
            target=gate_target(gate),
            noise=NoiseConfig(seed=TRAIN_NOISE_SEED),
        )
    )


def _train_residual(algorithm, baseline, gate="cz3"):
    env = _residual_env(baseline, gate)
    agent = make_agent(
        AgentConfig(algorithm=algorithm, action_dim=env.action_dim, seed=AGENT_SEED)
    )
    rewards = []
    train(agent, env, TRAIN_STEPS,
          episode_callback=lambda i, rec: rewards.append(rec.reward))
    agent.training_rewards = np.array(rewards)
    return agent


@pytest.fixture(scope="session")
def td3_cz3(oct_pulse):
    return _train_residual("td3", oct_pulse.pulse)


@pytest.fixture(scope="session")
def sac_cz3(oct_pulse):
    return _train_residual("sac", oct_pulse.pulse)


@pytest.fixture(scope="session")
def td3_alt(oct_pulse_alt):
    return _train_residual("td3", oct_pulse_alt.pulse, gate="alt")


@pytest.fixture(scope="session")
def sac_alt(oct_pulse_alt):
    return _train_residual("sac", oct_pulse_alt.pulse, gate="alt")


def _policy(agent):
    return lambda obs: agent.act(obs, deterministic=True)


def _env_config(baseline, gate="cz3", **kw):
    defaults = dict(
        baseline=baseline,
        nominal=NOMINAL_PARAMS,
        target=gate_target(gate),
        noise=NoiseConfig(seed=TRAIN_NOISE_SEED),
    )
    defaults.update(kw)
    return EnvConfig(**defaults)


def _efficacy(agent, baseline, gate="cz3"):
    cfg = _env_config(baseline, gate)
    oct_stats = eval_ensemble(zero_policy(40), cfg, ENSEMBLE_M, EVAL_SEED, method="oct")
    rl_stats = eval_ensemble(_policy(agent), cfg, ENSEMBLE_M, EVAL_SEED,
                             method=agent.algorithm)
    return oct_stats, rl_stats


# ---------------------------------------------------------------------------
# Criteria

def test_criterion_fidelity_identities():
    cz = target_cz3()
    assert abs(avg_gate_fidelity(cz, cz) - 1.0) <= 1e-12
    assert abs(avg_gate_fidelity(np.eye(9), cz) - 0.2) <= 1e-12
    assert abs(avg_gate_fidelity(np.eye(9), target_alt()) - 58.0 / 90.0) <= 1e-12


def test_criterion_unitarity_and_composition():
    rng = np.random.default_rng(1001)
    for _ in range(100):
        n = int(rng.integers(2, 16))
        channels = rng.uniform(-0.3, 0.3, (2, n))
        pulse = PulseSet(dt=float(rng.uniform(1.0, 12.0)), channels=channels,
                         amp_bound=0.3)
        params = random_params(rng)
        u = propagate(pulse, params)
        assert max_unitarity_defect(u) <= 1e-10
        half = n // 2
        if half >= 1:
            first = PulseSet(dt=pulse.dt, channels=channels[:, :half], amp_bound=0.3)
            last = PulseSet(dt=pulse.dt, channels=channels[:, half:], amp_bound=0.3)
            split = propagate(last, params) @ propagate(first, params)
            assert np.max(np.abs(u - split)) <= 1e-11


def test_criterion_gradient_vs_finite_differences():
    rng = np.random.default_rng(1002)
    target = target_cz3()
    worst = 0.0
    for _ in range(20):
        params = random_params(rng)
        pulse = PulseSet(dt=float(rng.uniform(3.0, 12.0)),
                         channels=rng.uniform(-0.25, 0.25, (2, 8)), amp_bound=1.0)
        grad = grape_gradient(pulse, params, target)
        step = 1e-6
        for i in range(2):
            for j in range(8):
                cp = pulse.channels.copy(); cp[i, j] += step
                cm = pulse.channels.copy(); cm[i, j] -= step
                fp = grape_fidelity(PulseSet(dt=pulse.dt, channels=cp, amp_bound=1.0),
                                    params, target)
                fm = grape_fidelity(PulseSet(dt=pulse.dt, channels=cm, amp_bound=1.0),
                                    params, target)
                fd = (fp - fm) / (2 * step)
                worst = max(worst, abs(grad[i, j] - fd) / max(abs(fd), 1e-9))
    assert worst <= 1e-6


def test_criterion_nominal_grape_convergence(oct_pulse):
    # defaults: g = 0.0025, T = 1600, N = 160, |eps| <= 0.3, best of 3 seeds
    assert oct_pulse.iterations_used <= 5001
    assert oct_pulse.final_infidelity <= 1e-5


def test_criterion_speed_limit_failure():
    for seed in range(3):
        cfg = GrapeConfig(total_time=300.0, seed=seed)
        result = grape_optimize(cfg, NOMINAL_PARAMS, target_cz3())
        assert not result.converged
        assert result.final_infidelity > 1e-2


def test_criterion_noise_statistics():
    cfg = NoiseConfig()
    rng = make_stream(555, STREAM_DEVICE)
    arr = np.array([sample_offsets(rng, cfg).as_array() for _ in range(100_000)])
    assert abs(arr[:, 0].std() - cfg.sigma_omega) / cfg.sigma_omega <= 0.02
    assert abs(arr[:, 1].std() - cfg.sigma_omega) / cfg.sigma_omega <= 0.02
    assert abs(arr[:, 2].std() - cfg.sigma_g) / cfg.sigma_g <= 0.02
    for col, sigma in ((0, cfg.sigma_omega), (1, cfg.sigma_omega), (2, cfg.sigma_g)):
        outside = np.mean(np.abs(arr[:, col]) > 3.0 * sigma)
        assert abs(outside - 0.0027) <= 0.0016


def test_criterion_environment_identities(oct_pulse):
    env = _residual_env(oct_pulse.pulse)
    for _ in range(100):
        record = env.episode(lambda obs: np.zeros(40))
        assert record.reward == 0.0
    rng = np.random.default_rng(1003)
    for _ in range(20):
        record = env.episode(lambda obs: rng.uniform(-1, 1, 40))
        assert abs(record.reward - (record.f_rl - record.f_oct)) <= 1e-14
    basis = cosine_basis(160, 20)
    gram = basis.matrix.T @ basis.matrix
    assert np.max(np.abs(gram - np.eye(20))) <= 1e-12


@pytest.mark.slow
@pytest.mark.parametrize("agent_fixture", ["td3_cz3", "sac_cz3"])
def test_criterion_calibration_efficacy(agent_fixture, oct_pulse, request):
    agent = request.getfixturevalue(agent_fixture)
    if agent.algorithm == "td3":
        # even with exploration noise on, late-training corrections are net positive
        assert np.mean(agent.training_rewards[-1000:]) > 0.0
    oct_stats, rl_stats = _efficacy(agent, oct_pulse.pulse)
    assert rl_stats.mean > oct_stats.mean
    assert (1.0 - rl_stats.mean) <= 0.5 * (1.0 - oct_stats.mean)
    assert rl_stats.std <= 0.5 * oct_stats.std


@pytest.mark.slow
@pytest.mark.parametrize("agent_fixture", ["td3_cz3", "sac_cz3"])
def test_criterion_nominal_preservation(agent_fixture, oct_pulse, request):
    agent = request.getfixturevalue(agent_fixture)
    cfg = _env_config(oct_pulse.pulse)
    f_oct = eval_nominal(zero_policy(40), cfg)
    f_rl = eval_nominal(_policy(agent), cfg)
    assert f_oct - f_rl <= 0.03


@pytest.mark.slow
@pytest.mark.parametrize("algorithm", ["td3", "ddpg"])
def test_criterion_from_scratch_plateau(algorithm, oct_pulse):
    env = CalibrationEnv(_env_config(
        PulseSet(dt=10.0, channels=np.zeros((2, 160)), amp_bound=0.3),
        mode="direct",
    ))
    agent = make_agent(AgentConfig(algorithm=algorithm, action_dim=env.action_dim,
                                   seed=AGENT_SEED))
    curve = train(agent, env, TRAIN_STEPS)
    f = curve.fidelities
    quarter = len(f) // 4
    assert np.max(f) < 0.9
    # plateau: the last quarter improves on the one before it by at most 0.05
    assert np.mean(f[-quarter:]) - np.mean(f[-2 * quarter:-quarter]) <= 0.05
    # while the OCT pulse on the same task exceeds 1 - 1e-5
    assert 1.0 - grape_fidelity(oct_pulse.pulse, NOMINAL_PARAMS, target_cz3()) <= 1e-5


@pytest.mark.slow
def test_criterion_estimation_noise_robustness(td3_cz3, oct_pulse):
    cfg = _env_config(oct_pulse.pulse)
    policy = _policy(td3_cz3)
    base = eval_ensemble(policy, cfg, ENSEMBLE_M, EVAL_SEED)
    sweep = obs_noise_sweep(policy, cfg, [1e-4, 1e-3, 1e-2, 1e-1], "omega",
                            ENSEMBLE_M, EVAL_SEED)
    for stats in sweep.stats:
        assert abs(stats.mean - base.mean) <= 0.01
    extended = obs_noise_sweep(policy, cfg, [0.25, 0.5, 1.0], "omega",
                               ENSEMBLE_M, EVAL_SEED)
    means = [s.mean for s in extended.stats]
    assert means[0] >= means[1] >= means[2]
    assert means[2] < base.mean


@pytest.mark.slow
def test_criterion_alt_gate_grape(oct_pulse_alt):
    assert oct_pulse_alt.final_infidelity <= 1e-5


@pytest.mark.slow
def test_criterion_alt_gate_zero_action_identity(oct_pulse_alt):
    env = _residual_env(oct_pulse_alt.pulse, gate="alt")
    for _ in range(100):
        record = env.episode(lambda obs: np.zeros(40))
        assert record.reward == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("agent_fixture", ["td3_alt", "sac_alt"])
def test_criterion_alt_gate_calibration_efficacy(agent_fixture, oct_pulse_alt, request):
    agent = request.getfixturevalue(agent_fixture)
    oct_stats, rl_stats = _efficacy(agent, oct_pulse_alt.pulse, gate="alt")
    assert rl_stats.mean > oct_stats.mean
    assert (1.0 - rl_stats.mean) <= 0.5 * (1.0 - oct_stats.mean)
    assert rl_stats.std <= 0.5 * oct_stats.std


def test_criterion_manifest_determinism(tmp_path):
    """Every pipeline stage rerun from its manifest reproduces byte-identical CSVs."""
    config = {
        "seed": 77,
        "grape": {"n_slices": 16, "total_time": 160.0, "max_iterations": 30,
                  "target_infidelity": 1e-6},
        "env": {"n_modes": 4},
        "agents": {"td3": {"hidden": [16, 16], "batch_size": 16,
                           "warmup_steps": 20, "buffer_capacity": 500}},
        "eval": {"m": 4, "seed": 5},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))

    def rerun_and_compare(first_args, csv_names):
        out1 = tmp_path / f"{first_args[0]}-1"
        out2 = tmp_path / f"{first_args[0]}-2"
        rc = cli_main(first_args + ["--out", str(out1)])
        assert rc == 0, f"{first_args[0]} failed with exit {rc}"
        rc = cli_main([first_args[0], "--config", str(out1 / "manifest.json"),
                       "--out", str(out2)])
        assert rc == 0
        for name in csv_names:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    rerun_and_compare(
        ["grape", "--config", str(cfg_path), "--allow-unconverged"],
        ["grape_history.csv", "oct_pulse.json"],
    )
    pulse = str(tmp_path / "grape-1" / "oct_pulse.json")
    rerun_and_compare(
        ["sample-noise", "--config", str(cfg_path), "--count", "500", "--bins", "8"],
        ["noise_samples.csv", "noise_hist.csv"],
    )
    rerun_and_compare(
        ["train", "--config", str(cfg_path), "--algorithm", "td3",
         "--steps", "40", "--pulse", pulse, "--episode-log"],
        ["learning_curve.csv", "episodes.csv"],
    )
    ck = str(tmp_path / "train-1" / "checkpoint_final")
    rerun_and_compare(
        ["eval", "--config", str(cfg_path), "--pulse", pulse, "--checkpoint", ck],
        ["nominal.csv", "single.csv", "ensemble.csv", "ensemble_devices.csv",
         "pulse_overlay.csv"],
    )
    rerun_and_compare(
        ["sweep", "--config", str(cfg_path), "--pulse", pulse, "--checkpoint", ck,
         "--levels", "0.001,0.01"],
        ["sweep.csv"],
    )
