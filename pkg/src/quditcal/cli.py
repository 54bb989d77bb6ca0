"""quditcal command line: grape | sample-noise | train | eval | sweep.

A single JSON config feeds every stage; each run writes its artifacts plus a
manifest.json capturing the resolved config and arguments.  Passing a manifest
as --config reruns that stage, reproducing its CSV outputs byte for byte.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import artifacts
from .agents import (
    AgentConfig,
    TrainingError,
    load_training_checkpoint,
    make_agent,
    policy_import,
    train,
)
from .dynamics import DeviceParams, NOMINAL_PARAMS, PulseSet, gate_target
from .env import (
    EPISODE_LOG_HEADER,
    CalibrationEnv,
    EnvConfig,
    EpisodeError,
    episode_log_row,
)
from .evaluate import (
    DEFAULT_SWEEP_LEVELS,
    corrected_pulse,
    cosine_basis,
    eval_ensemble,
    eval_nominal,
    eval_single,
    obs_noise_sweep,
    pulse_overlay_table,
    zero_policy,
)
from .grape import GrapeConfig, GrapeNumericalError, grape_multistart
from .noise import (
    STREAM_DEVICE,
    NoiseConfig,
    fixed_single_device,
    make_stream,
    offset_histogram,
    sample_offsets,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_UNCONVERGED = 4

SEED_ENV_VAR = "QUDITCAL_SEED"
DEFAULT_MASTER_SEED = 1234
ALGORITHMS = ("sac", "td3", "ddpg", "ppo")

AGENT_OVERRIDE_KEYS = {
    "hidden", "lr", "gamma", "tau", "batch_size", "buffer_capacity",
    "warmup_steps", "exploration_sigma", "sac_entropy_target",
    "ppo_rollout", "ppo_epochs", "ppo_clip", "ppo_value_coef", "seed",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str
    nominal: DeviceParams
    grape: GrapeConfig
    noise: NoiseConfig
    n_modes: int
    alpha: float
    obs_clip: float
    est_eta_omega: float
    est_eta_g: float
    agents: dict
    train_steps: int
    eval_m: int
    eval_seed: int


def _take(doc: dict, section: str, allowed: set[str]) -> dict:
    sub = doc.get(section, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return sub


def resolve_config(doc: dict) -> RunConfig:
    """Fill every omitted field with its default; reject unknown keys."""
    top_allowed = {
        "seed", "output_dir", "nominal", "grape", "noise", "env",
        "agents", "train_steps", "eval",
    }
    unknown = set(doc) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    master = doc.get("seed", DEFAULT_MASTER_SEED)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            master = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")

    nom = _take(doc, "nominal", {"omega1", "omega2", "chi1", "chi2", "g"})
    nominal = DeviceParams(
        omega1=nom.get("omega1", NOMINAL_PARAMS.omega1),
        omega2=nom.get("omega2", NOMINAL_PARAMS.omega2),
        chi1=nom.get("chi1", NOMINAL_PARAMS.chi1),
        chi2=nom.get("chi2", NOMINAL_PARAMS.chi2),
        g=nom.get("g", NOMINAL_PARAMS.g),
    )

    gr = _take(doc, "grape", {
        "n_slices", "total_time", "amp_bound", "target_infidelity",
        "max_iterations", "seed", "init_amplitude",
    })
    grape_cfg = GrapeConfig(**gr)

    nz = _take(doc, "noise", {"sigma_omega", "sigma_g", "seed"})
    noise = NoiseConfig(
        sigma_omega=nz.get("sigma_omega", 1e-3),
        sigma_g=nz.get("sigma_g", 5e-5),
        seed=nz.get("seed", master),
    )

    ev = _take(doc, "env", {"n_modes", "alpha", "obs_clip", "est_eta_omega", "est_eta_g"})
    agents_doc = doc.get("agents", {})
    if not isinstance(agents_doc, dict):
        raise ConfigError("config section 'agents' must be an object")
    unknown_algos = set(agents_doc) - set(ALGORITHMS)
    if unknown_algos:
        raise ConfigError(f"unknown agent sections: {sorted(unknown_algos)}")
    agents = {}
    for algo in ALGORITHMS:
        sub = agents_doc.get(algo, {})
        unknown = set(sub) - AGENT_OVERRIDE_KEYS
        if unknown:
            raise ConfigError(f"unknown keys in agents.{algo}: {sorted(unknown)}")
        agents[algo] = dict(sub)
        agents[algo].setdefault("seed", master)

    evl = _take(doc, "eval", {"m", "seed"})
    try:
        return RunConfig(
            seed=int(master),
            output_dir=str(doc.get("output_dir", "runs")),
            nominal=nominal,
            grape=grape_cfg,
            noise=noise,
            n_modes=int(ev.get("n_modes", 20)),
            alpha=float(ev.get("alpha", 0.03)),
            obs_clip=float(ev.get("obs_clip", 3.0)),
            est_eta_omega=float(ev.get("est_eta_omega", 0.0)),
            est_eta_g=float(ev.get("est_eta_g", 0.0)),
            agents=agents,
            train_steps=int(doc.get("train_steps", 100_000)),
            eval_m=int(evl.get("m", 100)),
            eval_seed=int(evl.get("seed", master)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def config_to_doc(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "nominal": {
            "omega1": cfg.nominal.omega1, "omega2": cfg.nominal.omega2,
            "chi1": cfg.nominal.chi1, "chi2": cfg.nominal.chi2, "g": cfg.nominal.g,
        },
        "grape": {
            "n_slices": cfg.grape.n_slices, "total_time": cfg.grape.total_time,
            "amp_bound": cfg.grape.amp_bound,
            "target_infidelity": cfg.grape.target_infidelity,
            "max_iterations": cfg.grape.max_iterations, "seed": cfg.grape.seed,
            "init_amplitude": cfg.grape.init_amplitude,
        },
        "noise": {
            "sigma_omega": cfg.noise.sigma_omega, "sigma_g": cfg.noise.sigma_g,
            "seed": cfg.noise.seed,
        },
        "env": {
            "n_modes": cfg.n_modes, "alpha": cfg.alpha, "obs_clip": cfg.obs_clip,
            "est_eta_omega": cfg.est_eta_omega, "est_eta_g": cfg.est_eta_g,
        },
        "agents": cfg.agents,
        "train_steps": cfg.train_steps,
        "eval": {"m": cfg.eval_m, "seed": cfg.eval_seed},
    }


def load_config_file(path: str | None) -> tuple[RunConfig, dict]:
    """Read a config or manifest file; returns (config, manifest_args)."""
    if path is None:
        return resolve_config({}), {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if artifacts.maybe_manifest(doc):
        return resolve_config(doc.get("config", {})), dict(doc.get("args", {}))
    return resolve_config(doc), {}


def _arg(cli_value, manifest_args: dict, name: str, default):
    """CLI flag > manifest-recorded argument > built-in default."""
    if cli_value is not None:
        return cli_value
    if name in manifest_args and manifest_args[name] is not None:
        return manifest_args[name]
    return default


def _out_dir(cli_out, manifest_args, cfg: RunConfig, command: str) -> Path:
    out = Path(_arg(cli_out, manifest_args, "out", Path(cfg.output_dir) / command))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _agent_config(cfg: RunConfig, algorithm: str, action_dim: int) -> AgentConfig:
    overrides = dict(cfg.agents[algorithm])
    if "hidden" in overrides:
        overrides["hidden"] = tuple(overrides["hidden"])
    return AgentConfig(algorithm=algorithm, obs_dim=3, action_dim=action_dim, **overrides)


def _env_config(cfg: RunConfig, baseline: PulseSet, gate: str, mode: str) -> EnvConfig:
    return EnvConfig(
        baseline=baseline,
        nominal=cfg.nominal,
        target=gate_target(gate),
        noise=cfg.noise,
        n_modes=cfg.n_modes,
        alpha=cfg.alpha,
        obs_clip=cfg.obs_clip,
        est_eta_omega=cfg.est_eta_omega,
        est_eta_g=cfg.est_eta_g,
        mode=mode,
    )


def _load_baseline(pulse_path, cfg: RunConfig) -> PulseSet:
    if pulse_path is None:
        raise ConfigError("this command needs --pulse pointing at an oct_pulse.json")
    try:
        return artifacts.load_pulse(pulse_path)
    except FileNotFoundError:
        raise ConfigError(f"pulse file not found: {pulse_path}")
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad pulse file {pulse_path}: {exc}")


def _policies_for(checkpoints, action_dim) -> dict:
    """OCT baseline plus one deterministic policy per checkpoint."""
    methods = {"oct": zero_policy(action_dim)}
    for path in checkpoints or []:
        policy = policy_import(path)
        label = policy.algorithm
        if label in methods:
            label = f"{label}_{len(methods)}"
        methods[label] = policy
    return methods


# ---------------------------------------------------------------------------
# Subcommands

def cmd_grape(cfg: RunConfig, args, manifest_args) -> int:
    gate = _arg(args.gate, manifest_args, "gate", "cz3")
    restarts = int(_arg(args.restarts, manifest_args, "restarts", 3))
    allow = bool(_arg(args.allow_unconverged, manifest_args, "allow_unconverged", False))
    out = _out_dir(args.out, manifest_args, cfg, "grape")

    result = grape_multistart(cfg.grape, cfg.nominal, gate_target(gate), restarts)
    artifacts.save_pulse(
        out / "oct_pulse.json",
        result.pulse,
        meta={
            "gate": gate,
            "final_infidelity": result.final_infidelity,
            "converged": result.converged,
            "seed": result.seed,
            "iterations_used": result.iterations_used,
        },
    )
    artifacts.write_csv(
        out / "grape_history.csv",
        ["iteration", "infidelity"],
        [(i, v) for i, v in enumerate(result.infidelity_history)],
    )
    artifacts.write_manifest(
        out / "manifest.json", "grape",
        {"gate": gate, "restarts": restarts, "allow_unconverged": allow,
         "out": str(out), "threads": args.threads or 1},
        config_to_doc(cfg),
    )
    print(f"grape: gate={gate} infidelity={result.final_infidelity:.3e} "
          f"converged={result.converged} iterations={result.iterations_used} -> {out}")
    if not result.converged and not allow:
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_sample_noise(cfg: RunConfig, args, manifest_args) -> int:
    count = int(_arg(args.count, manifest_args, "count", 100_000))
    bins = int(_arg(args.bins, manifest_args, "bins", 60))
    out = _out_dir(args.out, manifest_args, cfg, "sample-noise")

    rng = make_stream(cfg.noise.seed, STREAM_DEVICE)
    samples = [sample_offsets(rng, cfg.noise) for _ in range(count)]
    artifacts.write_csv(
        out / "noise_samples.csv",
        ["index", "d_omega1", "d_omega2", "d_g"],
        [(i, s.d_omega1, s.d_omega2, s.d_g) for i, s in enumerate(samples)],
    )
    hist = offset_histogram(samples, bins, cfg.noise)
    rows = []
    for name, h in hist.items():
        for b in range(len(h.counts)):
            rows.append((name, h.bin_edges[b], h.bin_edges[b + 1], int(h.counts[b])))
    artifacts.write_csv(out / "noise_hist.csv",
                        ["parameter", "bin_left", "bin_right", "count"], rows)
    artifacts.write_manifest(
        out / "manifest.json", "sample-noise",
        {"count": count, "bins": bins, "out": str(out), "threads": args.threads or 1},
        config_to_doc(cfg),
    )
    print(f"sample-noise: {count} samples, {bins} bins -> {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args, manifest_args) -> int:
    algorithm = _arg(args.algorithm, manifest_args, "algorithm", None)
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"--algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    gate = _arg(args.gate, manifest_args, "gate", "cz3")
    steps = int(_arg(args.steps, manifest_args, "steps", cfg.train_steps))
    direct = bool(_arg(args.direct, manifest_args, "direct", False))
    episode_log = bool(_arg(args.episode_log, manifest_args, "episode_log", False))
    pulse_path = _arg(args.pulse, manifest_args, "pulse", None)
    out = _out_dir(args.out, manifest_args, cfg, f"train-{algorithm}")

    if direct:
        # the baseline pulse only defines N, dt and the bound in direct mode
        baseline = PulseSet(
            dt=cfg.grape.dt,
            channels=np.zeros((2, cfg.grape.n_slices)),
            amp_bound=cfg.grape.amp_bound,
        )
    else:
        baseline = _load_baseline(pulse_path, cfg)
    env_cfg = _env_config(cfg, baseline, gate, "direct" if direct else "residual")
    env = CalibrationEnv(env_cfg)

    resume = None
    if args.resume is not None:
        agent, ck_manifest, ck_named = load_training_checkpoint(args.resume)
        if agent.algorithm != algorithm:
            raise ConfigError(
                f"checkpoint algorithm {agent.algorithm!r} != requested {algorithm!r}"
            )
        resume = (ck_manifest, ck_named)
    else:
        agent = make_agent(_agent_config(cfg, algorithm, env.action_dim))

    log_rows = []

    def on_episode(i, record):
        if episode_log:
            log_rows.append(episode_log_row(i, record))

    curve = train(
        agent, env, steps,
        checkpoint_dir=out, checkpoint_every=10_000,
        episode_callback=on_episode, resume=resume,
    )
    artifacts.write_csv(
        out / "learning_curve.csv",
        ["episode", "f_rl", "running_best"],
        [(i, f, b) for i, (f, b) in
         enumerate(zip(curve.fidelities, curve.running_best))],
    )
    if episode_log:
        artifacts.write_csv(out / "episodes.csv", EPISODE_LOG_HEADER, log_rows)
    artifacts.write_manifest(
        out / "manifest.json", "train",
        {"algorithm": algorithm, "gate": gate, "steps": steps, "direct": direct,
         "pulse": None if pulse_path is None else str(pulse_path),
         "episode_log": episode_log, "out": str(out), "threads": args.threads or 1},
        config_to_doc(cfg),
    )
    tail = curve.fidelities[-min(1000, len(curve.fidelities)):]
    print(f"train: {algorithm} gate={gate} steps={steps} "
          f"mean F (last {len(tail)}) = {np.mean(tail):.4f} -> {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args, manifest_args) -> int:
    gate = _arg(args.gate, manifest_args, "gate", "cz3")
    pulse_path = _arg(args.pulse, manifest_args, "pulse", None)
    checkpoints = args.checkpoint or manifest_args.get("checkpoints") or []
    overlay_channel = int(_arg(args.overlay_channel, manifest_args, "overlay_channel", 1))
    out = _out_dir(args.out, manifest_args, cfg, "eval")

    baseline = _load_baseline(pulse_path, cfg)
    env_cfg = _env_config(cfg, baseline, gate, "residual")
    methods = _policies_for(checkpoints, env_cfg.action_dim)

    nominal_rows, single_rows, ens_rows, dev_rows = [], [], [], []
    single_offsets = fixed_single_device()
    corrected = {}
    basis = cosine_basis(baseline.n_slices, cfg.n_modes)
    for name, policy in methods.items():
        act = policy if callable(policy) else policy.act
        nominal_rows.append((name, eval_nominal(act, env_cfg)))
        single_rows.append((
            name, single_offsets.d_omega1, single_offsets.d_omega2,
            single_offsets.d_g, eval_single(act, env_cfg),
        ))
        stats = eval_ensemble(act, env_cfg, cfg.eval_m, cfg.eval_seed, method=name)
        ens_rows.append((name, stats.m, stats.seed, stats.mean, stats.std))
        for i, (f, off) in enumerate(zip(stats.fidelities, stats.offsets)):
            dev_rows.append((name, i, off.d_omega1, off.d_omega2, off.d_g, f))
        if name != "oct":
            corrected[name], _ = corrected_pulse(act, single_offsets, env_cfg, basis)

    artifacts.write_csv(out / "nominal.csv", ["method", "fidelity"], nominal_rows)
    artifacts.write_csv(
        out / "single.csv",
        ["method", "d_omega1", "d_omega2", "d_g", "fidelity"], single_rows)
    artifacts.write_csv(
        out / "ensemble.csv", ["method", "M", "seed", "mean", "std"], ens_rows)
    artifacts.write_csv(
        out / "ensemble_devices.csv",
        ["method", "device_index", "d_omega1", "d_omega2", "d_g", "fidelity"],
        dev_rows)
    header, table = pulse_overlay_table(baseline, corrected, overlay_channel)
    artifacts.write_csv(out / "pulse_overlay.csv", header, table)
    artifacts.write_manifest(
        out / "manifest.json", "eval",
        {"gate": gate, "pulse": str(pulse_path), "checkpoints": [str(c) for c in checkpoints],
         "overlay_channel": overlay_channel, "out": str(out),
         "threads": args.threads or 1},
        config_to_doc(cfg),
    )
    print(f"eval: gate={gate} methods={list(methods)} M={cfg.eval_m} -> {out}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args, manifest_args) -> int:
    gate = _arg(args.gate, manifest_args, "gate", "cz3")
    pulse_path = _arg(args.pulse, manifest_args, "pulse", None)
    checkpoints = args.checkpoint or manifest_args.get("checkpoints") or []
    axis = _arg(args.axis, manifest_args, "axis", "omega")
    if axis not in ("omega", "g"):
        raise ConfigError(f"--axis must be 'omega' or 'g', got {axis!r}")
    levels_arg = _arg(args.levels, manifest_args, "levels", None)
    if levels_arg is None:
        levels = list(DEFAULT_SWEEP_LEVELS)
    elif isinstance(levels_arg, str):
        try:
            levels = [float(x) for x in levels_arg.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad --levels list: {levels_arg!r}")
    else:
        levels = [float(x) for x in levels_arg]
    if not levels or any(np.diff(levels) <= 0):
        raise ConfigError("levels must be a non-empty strictly increasing list")
    out = _out_dir(args.out, manifest_args, cfg, "sweep")

    baseline = _load_baseline(pulse_path, cfg)
    env_cfg = _env_config(cfg, baseline, gate, "residual")
    methods = _policies_for(checkpoints, env_cfg.action_dim)

    rows = []
    for name, policy in methods.items():
        act = policy if callable(policy) else policy.act
        result = obs_noise_sweep(
            act, env_cfg, levels, axis, cfg.eval_m, cfg.eval_seed, method=name)
        for level, stats in zip(result.levels, result.stats):
            rows.append((name, stats.m, stats.seed, stats.mean, stats.std, axis, level))
    artifacts.write_csv(
        out / "sweep.csv",
        ["method", "M", "seed", "mean", "std", "axis", "level"], rows)
    artifacts.write_manifest(
        out / "manifest.json", "sweep",
        {"gate": gate, "pulse": str(pulse_path),
         "checkpoints": [str(c) for c in checkpoints], "axis": axis,
         "levels": ",".join(repr(float(l)) for l in levels), "out": str(out),
         "threads": args.threads or 1},
        config_to_doc(cfg),
    )
    print(f"sweep: axis={axis} levels={levels} methods={list(methods)} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quditcal",
        description="Two-qutrit gate pulse synthesis and RL residual calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file or a manifest.json from a previous run")
        p.add_argument("--out", help="output directory (default: <output_dir>/<command>)")
        p.add_argument("--gate", choices=["cz3", "alt"], default=None,
                       help="target gate (default cz3)")
        p.add_argument("--threads", type=int, default=None,
                       help="cap on internal parallelism (default 1; execution is sequential)")

    p = sub.add_parser("grape", help="synthesize the nominal OCT pulse")
    common(p)
    p.add_argument("--restarts", type=int, default=None,
                   help="random restarts, seeds 0..R-1 (default 3)")
    p.add_argument("--allow-unconverged", action=argparse.BooleanOptionalAction,
                   default=None, help="exit 0 even if the target infidelity is not reached")

    p = sub.add_parser("sample-noise", help="sample the device-disorder distribution")
    common(p)
    p.add_argument("--count", type=int, default=None, help="number of samples (default 1e5)")
    p.add_argument("--bins", type=int, default=None, help="histogram bins (default 60)")

    p = sub.add_parser("train", help="train one RL agent")
    common(p)
    p.add_argument("--algorithm", choices=list(ALGORITHMS), default=None)
    p.add_argument("--steps", type=int, default=None,
                   help="environment interactions (default config train_steps)")
    p.add_argument("--pulse", default=None, help="oct_pulse.json baseline (residual mode)")
    p.add_argument("--direct", action=argparse.BooleanOptionalAction, default=None,
                   help="train raw pulse amplitudes on the nominal device")
    p.add_argument("--episode-log", action=argparse.BooleanOptionalAction, default=None,
                   help="also write per-episode records to episodes.csv")
    p.add_argument("--resume", default=None, help="checkpoint directory to resume from")

    p = sub.add_parser("eval", help="evaluate OCT and trained policies")
    common(p)
    p.add_argument("--pulse", default=None, help="oct_pulse.json baseline")
    p.add_argument("--checkpoint", action="append", default=None,
                   help="policy checkpoint directory (repeatable)")
    p.add_argument("--overlay-channel", type=int, choices=[1, 2], default=None,
                   help="drive channel for pulse_overlay.csv (default 1)")

    p = sub.add_parser("sweep", help="estimation-noise robustness sweep")
    common(p)
    p.add_argument("--pulse", default=None, help="oct_pulse.json baseline")
    p.add_argument("--checkpoint", action="append", default=None,
                   help="policy checkpoint directory (repeatable)")
    p.add_argument("--axis", choices=["omega", "g"], default=None)
    p.add_argument("--levels", default=None,
                   help="comma-separated relative noise levels eta/sigma")
    return parser


COMMANDS = {
    "grape": cmd_grape,
    "sample-noise": cmd_sample_noise,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, manifest_args = load_config_file(args.config)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        # default 1: all computation is sequential and BLAS kernels stay
        # single-threaded, which keeps artifacts bitwise reproducible
        with threadpool_limits(limits=args.threads or 1):
            return COMMANDS[args.command](cfg, args, manifest_args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GrapeNumericalError, TrainingError, EpisodeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
