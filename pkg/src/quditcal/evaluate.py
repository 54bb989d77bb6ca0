"""Evaluation harness: nominal / single-device / ensemble settings and noise sweeps.

Policies enter as plain callables obs -> action (deterministic; exploration
noise never reaches evaluation).  The OCT baseline is the zero policy.
Ensemble devices are freshly drawn from a held-out seed on the evaluation
streams, which are disjoint from every training stream id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import avg_gate_fidelity, propagate_channel_sets
from .env import (
    EnvConfig,
    CosineBasis,
    compose_pulse,
    cosine_basis,
    make_observation,
    residual_from_action,
)
from .noise import (
    EVAL_STREAMS,
    STREAM_EVAL_DEVICE,
    STREAM_EVAL_ESTIMATION,
    TRAINING_STREAMS,
    DeviceOffsets,
    ZERO_OFFSETS,
    apply_offsets,
    fixed_single_device,
    make_stream,
    sample_offsets,
)
from .dynamics import PulseSet


@dataclass(frozen=True)
class EnsembleStats:
    """Fidelity statistics over M devices; std is the population deviation."""

    method: str
    fidelities: np.ndarray
    mean: float
    std: float
    seed: int
    offsets: tuple = ()

    @classmethod
    def from_fidelities(
        cls, method: str, fidelities, seed: int, offsets: tuple = ()
    ) -> "EnsembleStats":
        f = np.asarray(fidelities, dtype=float)
        if f.size < 1:
            raise ValueError("need at least one fidelity")
        if np.any((f < 0) | (f > 1)):
            raise ValueError("fidelities must lie in [0, 1]")
        return cls(
            method=method,
            fidelities=f,
            mean=float(f.mean()),
            std=float(f.std()),
            seed=seed,
            offsets=tuple(offsets),
        )

    @property
    def m(self) -> int:
        return int(self.fidelities.size)


@dataclass(frozen=True)
class SweepResult:
    """EnsembleStats of one method at each estimation-noise level."""

    method: str
    axis: str
    levels: np.ndarray
    stats: list

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.size != len(self.stats):
            raise ValueError("one stats entry per level required")
        if lv.size > 1 and not np.all(np.diff(lv) > 0):
            raise ValueError("levels must be strictly increasing")
        object.__setattr__(self, "levels", lv)


def zero_policy(action_dim: int):
    """The OCT baseline: emit zero residual coefficients for any observation."""

    def act(_obs):
        return np.zeros(action_dim)

    return act


def corrected_pulse(
    action_fn, offsets: DeviceOffsets, config: EnvConfig, basis: CosineBasis,
    est_rng: np.random.Generator | None = None,
) -> tuple[PulseSet, np.ndarray]:
    """The pulse a policy produces for a device, and the observation it saw.

    With est_rng=None the observation is exact (eta treated as zero).
    """
    obs = make_observation(offsets, config, est_rng)
    action = np.clip(np.asarray(action_fn(obs), dtype=float), -1.0, 1.0)
    residual, _ = residual_from_action(action, basis, config.alpha)
    return compose_pulse(config.baseline, residual, config.baseline.amp_bound), obs


def _fidelity_on_device(action_fn, offsets, config, basis, est_rng=None) -> float:
    pulse, _ = corrected_pulse(action_fn, offsets, config, basis, est_rng)
    dev = apply_offsets(config.nominal, offsets)
    u = propagate_channel_sets(pulse.channels[None], pulse.dt, dev)[0]
    return avg_gate_fidelity(u, config.target)


def eval_nominal(action_fn, config: EnvConfig) -> float:
    """Deterministic fidelity at zero parameter offsets."""
    basis = cosine_basis(config.baseline.n_slices, config.n_modes)
    return _fidelity_on_device(action_fn, ZERO_OFFSETS, config, basis)


def eval_single(action_fn, config: EnvConfig, offsets: DeviceOffsets | None = None) -> float:
    """Deterministic fidelity on the fixed representative noisy device."""
    if offsets is None:
        offsets = fixed_single_device()
    basis = cosine_basis(config.baseline.n_slices, config.n_modes)
    return _fidelity_on_device(action_fn, offsets, config, basis)


def eval_ensemble(
    action_fn,
    config: EnvConfig,
    m: int,
    seed: int,
    eta_omega: float = 0.0,
    eta_g: float = 0.0,
    method: str = "",
) -> EnsembleStats:
    """Fidelity statistics over M freshly drawn devices under a held-out seed.

    Estimation noise (if any) corrupts only the observations; the dynamics
    always use the true offsets.  Exactly three estimation normals are drawn
    per device whatever the eta values, so sweeps over eta reuse the same
    underlying draws.
    """
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    assert STREAM_EVAL_DEVICE not in TRAINING_STREAMS and STREAM_EVAL_DEVICE in EVAL_STREAMS
    device_rng = make_stream(seed, STREAM_EVAL_DEVICE)
    est_rng = make_stream(seed, STREAM_EVAL_ESTIMATION)
    noisy_cfg = EnvConfig(
        baseline=config.baseline, nominal=config.nominal, target=config.target,
        noise=config.noise, n_modes=config.n_modes, alpha=config.alpha,
        obs_clip=config.obs_clip, est_eta_omega=eta_omega, est_eta_g=eta_g,
        mode=config.mode,
    )
    basis = cosine_basis(config.baseline.n_slices, config.n_modes)
    fids = np.empty(m)
    offsets_list = []
    for i in range(m):
        offsets = sample_offsets(device_rng, config.noise)
        offsets_list.append(offsets)
        fids[i] = _fidelity_on_device(action_fn, offsets, noisy_cfg, basis, est_rng)
    return EnsembleStats.from_fidelities(method, fids, seed, offsets=offsets_list)


def obs_noise_sweep(
    action_fn,
    config: EnvConfig,
    levels,
    axis: str,
    m: int,
    seed: int,
    method: str = "",
) -> SweepResult:
    """Ensemble statistics at each relative estimation-noise level eta/sigma.

    axis 'omega' scales eta_omega = level * sigma_omega with eta_g = 0;
    axis 'g' does the converse.
    """
    if axis not in ("omega", "g"):
        raise ValueError(f"axis must be 'omega' or 'g', got {axis!r}")
    levels = np.asarray(levels, dtype=float)
    stats = []
    for level in levels:
        if axis == "omega":
            eta_omega, eta_g = level * config.noise.sigma_omega, 0.0
        else:
            eta_omega, eta_g = 0.0, level * config.noise.sigma_g
        stats.append(
            eval_ensemble(
                action_fn, config, m, seed,
                eta_omega=eta_omega, eta_g=eta_g, method=method,
            )
        )
    return SweepResult(method=method, axis=axis, levels=levels, stats=stats)


DEFAULT_SWEEP_LEVELS = (1e-4, 1e-3, 1e-2, 1e-1)
EXTENDED_SWEEP_LEVELS = (1e-1, 0.25, 0.5, 1.0)


def pulse_overlay_table(
    baseline: PulseSet, corrected: dict[str, PulseSet], channel: int
) -> tuple[list[str], np.ndarray]:
    """Figure-ready table: slice midpoints, baseline column, one column per method."""
    if channel not in (1, 2):
        raise ValueError(f"channel must be 1 or 2, got {channel}")
    header = ["time", "baseline"] + list(corrected)
    cols = [baseline.slice_midpoints(), baseline.channels[channel - 1]]
    for name, pulse in corrected.items():
        if pulse.n_slices != baseline.n_slices:
            raise ValueError(f"pulse {name!r} has {pulse.n_slices} slices, expected {baseline.n_slices}")
        cols.append(pulse.channels[channel - 1])
    return header, np.column_stack(cols)
