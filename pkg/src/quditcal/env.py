"""One-step contextual-bandit environment for residual pulse calibration.

Each episode: sample a noisy device, show the agent the normalized (optionally
noise-corrupted) parameter offsets, decode its action into smooth cosine-basis
residual waveforms added to the baseline pulse, and reward the fidelity gain
over the uncorrected baseline on that same device.

A `direct` mode replaces the residual parametrization with raw slice
amplitudes on the nominal device, for the RL-from-scratch baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DeviceParams,
    PulseSet,
    avg_gate_fidelity,
    propagate,
    propagate_channel_sets,
)
from .noise import (
    STREAM_DEVICE,
    STREAM_ESTIMATION,
    DeviceOffsets,
    NoiseConfig,
    apply_offsets,
    make_stream,
    sample_offsets,
    standard_normal,
)


class EpisodeError(RuntimeError):
    """An episode could not be completed; never silently skipped."""


@dataclass(frozen=True)
class CosineBasis:
    """Column-normalized discrete cosine basis mapping K coefficients to N samples."""

    n_slices: int
    n_modes: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.n_slices, self.n_modes):
            raise ValueError(f"basis matrix shape {m.shape} != (N, K)")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def cosine_basis(n_slices: int, n_modes: int) -> CosineBasis:
    """C_jk = cos[pi k (j + 1/2) / N] for k = 1..K, columns scaled to unit L2 norm."""
    if not 1 <= n_modes <= n_slices:
        raise ValueError(f"need 1 <= K <= N, got K={n_modes}, N={n_slices}")
    j = np.arange(n_slices)[:, None]
    k = np.arange(1, n_modes + 1)[None, :]
    c = np.cos(np.pi * k * (j + 0.5) / n_slices)
    c = c / np.linalg.norm(c, axis=0)
    return CosineBasis(n_slices=n_slices, n_modes=n_modes, matrix=c)


@dataclass(frozen=True)
class EnvConfig:
    baseline: PulseSet
    nominal: DeviceParams
    target: np.ndarray
    noise: NoiseConfig = NoiseConfig()
    n_modes: int = 20
    alpha: float = 0.03
    obs_clip: float = 3.0
    est_eta_omega: float = 0.0
    est_eta_g: float = 0.0
    mode: str = "residual"

    def __post_init__(self):
        if self.mode not in ("residual", "direct"):
            raise ValueError(f"mode must be 'residual' or 'direct', got {self.mode!r}")
        if not 1 <= self.n_modes <= self.baseline.n_slices:
            raise ValueError(
                f"need 1 <= K <= N, got K={self.n_modes}, N={self.baseline.n_slices}"
            )
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.obs_clip > 0:
            raise ValueError(f"obs_clip must be positive, got {self.obs_clip}")
        if self.est_eta_omega < 0 or self.est_eta_g < 0:
            raise ValueError("estimation-noise widths must be >= 0")
        t = np.array(self.target, dtype=complex)
        t.flags.writeable = False
        object.__setattr__(self, "target", t)

    @property
    def action_dim(self) -> int:
        if self.mode == "direct":
            return 2 * self.baseline.n_slices
        return 2 * self.n_modes


@dataclass(frozen=True)
class EpisodeRecord:
    """One bandit interaction; reward == f_rl - f_oct by construction."""

    offsets: DeviceOffsets
    observation: np.ndarray
    action: np.ndarray
    f_oct: float
    f_rl: float
    reward: float


def clamp_action(action: np.ndarray) -> tuple[np.ndarray, int]:
    """Clamp to [-1, 1]; returns the clamped copy and how many components moved."""
    a = np.asarray(action, dtype=float)
    if not np.all(np.isfinite(a)):
        raise EpisodeError("action contains non-finite components")
    clamped = np.clip(a, -1.0, 1.0)
    return clamped, int(np.sum(clamped != a))


def residual_from_action(
    action: np.ndarray, basis: CosineBasis, alpha: float
) -> tuple[np.ndarray, int]:
    """Decode a 2K action into two residual waveforms, shape (2, N).

    Out-of-range components are clamped; the count is returned so callers can
    track a warning counter.
    """
    a, n_clamped = clamp_action(action)
    k = basis.n_modes
    if a.shape != (2 * k,):
        raise ValueError(f"action must have shape ({2 * k},), got {a.shape}")
    coeffs = alpha * a.reshape(2, k)
    return coeffs @ basis.matrix.T, n_clamped


def compose_pulse(baseline: PulseSet, residual: np.ndarray, bound: float) -> PulseSet:
    """Baseline plus residual, clipped elementwise to [-bound, bound]."""
    residual = np.asarray(residual, dtype=float)
    if residual.shape != baseline.channels.shape:
        raise ValueError(
            f"residual shape {residual.shape} != baseline {baseline.channels.shape}"
        )
    total = np.clip(baseline.channels + residual, -bound, bound)
    return PulseSet(dt=baseline.dt, channels=total, amp_bound=bound)


def make_observation(
    offsets: DeviceOffsets,
    config: EnvConfig,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Normalized context (d_omega1, d_omega2, d_g)/(sigma), with estimation noise.

    When an rng is given, exactly three standard normals are consumed per call
    regardless of the eta values, so observations at different noise levels
    share the same draws.  rng=None yields the exact observation.
    """
    z = standard_normal(rng, 3) if rng is not None else np.zeros(3)
    eta = np.array([config.est_eta_omega, config.est_eta_omega, config.est_eta_g])
    noisy = offsets.as_array() + eta * z
    sigma = np.array(
        [config.noise.sigma_omega, config.noise.sigma_omega, config.noise.sigma_g]
    )
    obs = np.zeros(3)
    for i in range(3):
        if sigma[i] == 0.0:
            if noisy[i] != 0.0:
                raise EpisodeError(
                    "zero noise width with a nonzero offset: normalization undefined"
                )
            continue
        obs[i] = noisy[i] / sigma[i]
    return np.clip(obs, -config.obs_clip, config.obs_clip)


class CalibrationEnv:
    """Stateful wrapper owning the RNG streams, basis, and clamp-warning counter.

    Device offsets come from (noise.seed, STREAM_DEVICE) and estimation noise
    from (noise.seed, STREAM_ESTIMATION); both advance by exactly three draws
    per episode, so the episode stream is reproducible from the seed alone.
    """

    def __init__(self, config: EnvConfig):
        self.config = config
        self.basis = cosine_basis(config.baseline.n_slices, config.n_modes)
        self.clamp_warnings = 0
        self._device_rng = make_stream(config.noise.seed, STREAM_DEVICE)
        self._est_rng = make_stream(config.noise.seed, STREAM_ESTIMATION)

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    @property
    def obs_dim(self) -> int:
        return 3

    def stream_states(self) -> dict:
        """Exact positions of the device/estimation streams (for checkpoints)."""
        return {
            "device": self._device_rng.bit_generator.state,
            "estimation": self._est_rng.bit_generator.state,
        }

    def restore_stream_states(self, states: dict):
        self._device_rng.bit_generator.state = states["device"]
        self._est_rng.bit_generator.state = states["estimation"]

    def episode(self, action_provider) -> EpisodeRecord:
        if self.config.mode == "direct":
            return self._direct_episode(action_provider)
        return self._residual_episode(action_provider)

    def _residual_episode(self, action_provider) -> EpisodeRecord:
        cfg = self.config
        offsets = sample_offsets(self._device_rng, cfg.noise)
        true_params = apply_offsets(cfg.nominal, offsets)
        observation = make_observation(offsets, cfg, self._est_rng)
        action, n_clamped = clamp_action(action_provider(observation))
        self.clamp_warnings += n_clamped
        residual, _ = residual_from_action(action, self.basis, cfg.alpha)
        total = compose_pulse(cfg.baseline, residual, cfg.baseline.amp_bound)
        try:
            u_oct, u_rl = propagate_channel_sets(
                np.stack([cfg.baseline.channels, total.channels]),
                cfg.baseline.dt,
                true_params,
            )
        except np.linalg.LinAlgError as exc:
            raise EpisodeError(f"propagation failed on offsets {offsets}: {exc}") from exc
        f_oct = avg_gate_fidelity(u_oct, cfg.target)
        f_rl = avg_gate_fidelity(u_rl, cfg.target)
        return EpisodeRecord(
            offsets=offsets,
            observation=observation,
            action=action,
            f_oct=f_oct,
            f_rl=f_rl,
            reward=f_rl - f_oct,
        )

    def _direct_episode(self, action_provider) -> EpisodeRecord:
        cfg = self.config
        observation = np.zeros(3)
        action, n_clamped = clamp_action(action_provider(observation))
        self.clamp_warnings += n_clamped
        n = cfg.baseline.n_slices
        if action.shape != (2 * n,):
            raise ValueError(f"direct-mode action must have shape ({2 * n},)")
        bound = cfg.baseline.amp_bound
        pulse = PulseSet(dt=cfg.baseline.dt, channels=bound * action.reshape(2, n),
                         amp_bound=bound)
        try:
            u = propagate(pulse, cfg.nominal)
        except np.linalg.LinAlgError as exc:
            raise EpisodeError(f"propagation failed in direct mode: {exc}") from exc
        f_rl = avg_gate_fidelity(u, cfg.target)
        return EpisodeRecord(
            offsets=DeviceOffsets(0.0, 0.0, 0.0),
            observation=observation,
            action=action,
            f_oct=0.0,
            f_rl=f_rl,
            reward=f_rl,
        )


EPISODE_LOG_HEADER = [
    "episode", "d_omega1", "d_omega2", "d_g",
    "o1", "o2", "o3", "f_oct", "f_rl", "reward",
]


def episode_log_row(index: int, record: EpisodeRecord) -> list:
    o = record.offsets
    return [
        index, o.d_omega1, o.d_omega2, o.d_g,
        record.observation[0], record.observation[1], record.observation[2],
        record.f_oct, record.f_rl, record.reward,
    ]
