"""Robust two-qutrit gate calibration: GRAPE pulses plus contextual-bandit residual RL."""

from .dynamics import (
    HILBERT_DIM,
    NOMINAL_PARAMS,
    DeviceParams,
    PulseSet,
    avg_gate_fidelity,
    build_control_ops,
    build_drift,
    gate_target,
    herm_expm,
    ladder_op,
    propagate,
    target_alt,
    target_cz3,
)
from .grape import (
    GrapeConfig,
    GrapeResult,
    grape_gradient,
    grape_multistart,
    grape_optimize,
    init_pulse,
    min_time_estimate,
)
from .noise import (
    DeviceOffsets,
    NoiseConfig,
    apply_offsets,
    fixed_single_device,
    make_stream,
    offset_histogram,
    sample_offsets,
)

__version__ = "0.1.0"
