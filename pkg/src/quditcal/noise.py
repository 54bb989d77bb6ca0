"""Static device-parameter disorder and reproducible random streams.

Each device realization differs from the nominal model by Gaussian offsets
(d_omega1, d_omega2, d_g); anharmonicities stay fixed.  All randomness in the
toolkit flows through counter-based Philox streams keyed by (seed, stream id),
with Gaussians generated by inverse CDF, so every artifact is reproducible
bit-for-bit from the seeds recorded in a run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .dynamics import DeviceParams

# Stream ids: one fixed id per consumer of randomness.  Training and
# evaluation use disjoint ids, so a shared seed never aliases their draws.
STREAM_DEVICE = 0          # device offsets seen during training
STREAM_PULSE_INIT = 1      # GRAPE initial-guess pulses
STREAM_AGENT_INIT = 2      # network weight initialization
STREAM_EXPLORATION = 3     # action noise / warmup actions / policy sampling
STREAM_ESTIMATION = 4      # observation (parameter-estimation) noise
STREAM_REPLAY = 5          # replay-buffer minibatch indices
STREAM_AGENT_UPDATE = 6    # update-time sampling (SAC reparam, PPO shuffles)

STREAM_EVAL_DEVICE = 10    # held-out evaluation devices
STREAM_EVAL_ESTIMATION = 11

TRAINING_STREAMS = frozenset(
    {
        STREAM_DEVICE,
        STREAM_PULSE_INIT,
        STREAM_AGENT_INIT,
        STREAM_EXPLORATION,
        STREAM_ESTIMATION,
        STREAM_REPLAY,
        STREAM_AGENT_UPDATE,
    }
)
EVAL_STREAMS = frozenset({STREAM_EVAL_DEVICE, STREAM_EVAL_ESTIMATION})
assert not (TRAINING_STREAMS & EVAL_STREAMS)

_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def make_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Philox generator keyed by (seed, stream id)."""
    key = np.array([np.uint64(int(seed) & int(_U64)), np.uint64(stream_id)])
    return np.random.Generator(np.random.Philox(key=key))


def standard_normal(rng: np.random.Generator, size=None) -> np.ndarray:
    """Standard normals via inverse CDF of Philox uniforms.

    rng.random() yields k / 2^53; the half-step offset maps it to the open
    interval (0, 1) so ndtri never sees 0.  Unlike ziggurat sampling, the
    inverse CDF consumes exactly one uniform per normal, which keeps stream
    positions easy to reason about.
    """
    u = rng.random(size)
    return ndtri(u + 2.0 ** -54)


@dataclass(frozen=True)
class NoiseConfig:
    """Widths of the Gaussian device-parameter disorder."""

    sigma_omega: float = 1e-3
    sigma_g: float = 5e-5
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.sigma_omega) and self.sigma_omega >= 0):
            raise ValueError(f"sigma_omega must be finite and >= 0, got {self.sigma_omega}")
        if not (np.isfinite(self.sigma_g) and self.sigma_g >= 0):
            raise ValueError(f"sigma_g must be finite and >= 0, got {self.sigma_g}")


@dataclass(frozen=True)
class DeviceOffsets:
    """Static offsets of one device from the nominal model."""

    d_omega1: float
    d_omega2: float
    d_g: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.d_omega1, self.d_omega2, self.d_g)):
            raise ValueError("offsets must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.d_omega1, self.d_omega2, self.d_g])


ZERO_OFFSETS = DeviceOffsets(0.0, 0.0, 0.0)


def sample_offsets(rng: np.random.Generator, config: NoiseConfig) -> DeviceOffsets:
    """Draw one device: d_omega1, d_omega2 ~ N(0, sigma_omega^2), d_g ~ N(0, sigma_g^2).

    Always consumes exactly three normals, in that order.
    """
    z = standard_normal(rng, 3)
    return DeviceOffsets(
        d_omega1=config.sigma_omega * z[0],
        d_omega2=config.sigma_omega * z[1],
        d_g=config.sigma_g * z[2],
    )


def apply_offsets(nominal: DeviceParams, offsets: DeviceOffsets) -> DeviceParams:
    """True device parameters: offsets shift omega1, omega2, g; chi stays nominal."""
    return DeviceParams(
        omega1=nominal.omega1 + offsets.d_omega1,
        omega2=nominal.omega2 + offsets.d_omega2,
        chi1=nominal.chi1,
        chi2=nominal.chi2,
        g=nominal.g + offsets.d_g,
    )


def fixed_single_device() -> DeviceOffsets:
    """The fixed representative single-device realization used in evaluations."""
    return DeviceOffsets(d_omega1=-3.0744e-4, d_omega2=-8.3866e-4, d_g=6.2819e-6)


@dataclass(frozen=True)
class HistogramSummary:
    """Histogram of one offset parameter plus mean and +-3 sigma markers."""

    parameter: str
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    marker_lo: float
    marker_hi: float


def offset_histogram(
    samples: list[DeviceOffsets], bins: int, config: NoiseConfig
) -> dict[str, HistogramSummary]:
    """Per-parameter histograms with markers at sample mean +- 3 * configured sigma."""
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    if bins < 1:
        raise ValueError("need at least one bin")
    arr = np.array([s.as_array() for s in samples])
    sigmas = (config.sigma_omega, config.sigma_omega, config.sigma_g)
    out = {}
    for col, (name, sigma) in enumerate(
        zip(("d_omega1", "d_omega2", "d_g"), sigmas)
    ):
        counts, edges = np.histogram(arr[:, col], bins=bins)
        mean = float(arr[:, col].mean())
        out[name] = HistogramSummary(
            parameter=name,
            bin_edges=edges,
            counts=counts,
            mean=mean,
            marker_lo=mean - 3.0 * sigma,
            marker_hi=mean + 3.0 * sigma,
        )
    return out
