"""Exact dynamics of two coupled driven qutrits.

Everything downstream (pulse optimization, the calibration environment, the
evaluation harness) is built on the operators and propagators defined here.
The model is two anharmonic oscillators truncated to three levels,

    H = sum_i (omega_i n_i + chi_i a_i^dag^2 a_i^2)
        + g (a_1 + a_1^dag)(a_2 + a_2^dag)
        + eps_1(t) (a_1 + a_1^dag) + eps_2(t) (a_2 + a_2^dag),

in dimensionless angular-frequency units (hbar = 1), with piecewise-constant
drives eps_i(t).  Basis ordering is lexicographic |q1 q2>, q1 the slow index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUTRIT_DIM = 3
HILBERT_DIM = QUTRIT_DIM * QUTRIT_DIM

# Hermiticity / unitarity contract tolerances.
HERM_TOL = 1e-12
UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class DeviceParams:
    """Hamiltonian parameters of one device: frequencies, anharmonicities, coupling."""

    omega1: float
    omega2: float
    chi1: float
    chi2: float
    g: float

    def __post_init__(self):
        vals = (self.omega1, self.omega2, self.chi1, self.chi2, self.g)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"device parameters must be finite, got {vals}")
        if self.g < 0:
            raise ValueError(f"coupling g must be non-negative, got {self.g}")

    def as_tuple(self):
        return (self.omega1, self.omega2, self.chi1, self.chi2, self.g)


#: Default nominal device: weakly anharmonic, detuned pair with g = 0.0025.
#: Frequencies sit below the piecewise-constant control bandwidth pi/dt so the
#: drives can echo out static frequency offsets; far-detuned choices leave the
#: optimized pulses uncorrectably sensitive to them.
NOMINAL_PARAMS = DeviceParams(omega1=0.15, omega2=0.18, chi1=-0.05, chi2=-0.05, g=0.0025)


@dataclass(frozen=True)
class PulseSet:
    """Two-channel piecewise-constant drive: channels[i, j] = eps_i over slice j.

    Slice j covers t in [j*dt, (j+1)*dt); total duration is n_slices * dt.
    Amplitudes must respect |eps| <= amp_bound on both channels.
    """

    dt: float
    channels: np.ndarray
    amp_bound: float

    def __post_init__(self):
        ch = np.array(self.channels, dtype=float)
        if ch.ndim != 2 or ch.shape[0] != 2 or ch.shape[1] < 1:
            raise ValueError(f"channels must have shape (2, N), got {ch.shape}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"slice duration dt must be positive, got {self.dt}")
        if not (np.isfinite(self.amp_bound) and self.amp_bound > 0):
            raise ValueError(f"amp_bound must be positive, got {self.amp_bound}")
        if not np.all(np.isfinite(ch)):
            raise ValueError("pulse amplitudes must be finite")
        if np.max(np.abs(ch)) > self.amp_bound:
            raise ValueError(
                f"pulse amplitudes exceed bound {self.amp_bound}: "
                f"max |eps| = {np.max(np.abs(ch))}"
            )
        ch.flags.writeable = False
        object.__setattr__(self, "channels", ch)

    @property
    def n_slices(self) -> int:
        return self.channels.shape[1]

    @property
    def total_time(self) -> float:
        return self.n_slices * self.dt

    def slice_midpoints(self) -> np.ndarray:
        """Midpoint times (j + 1/2) * dt of each slice."""
        return (np.arange(self.n_slices) + 0.5) * self.dt


def ladder_op(dim: int) -> np.ndarray:
    """Truncated annihilation operator: <k-1|a|k> = sqrt(k)."""
    if dim < 2:
        raise ValueError(f"ladder operator needs dim >= 2, got {dim}")
    a = np.zeros((dim, dim), dtype=complex)
    k = np.arange(1, dim)
    a[k - 1, k] = np.sqrt(k)
    return a


def _single_qutrit_ops():
    a = ladder_op(QUTRIT_DIM)
    n = a.conj().T @ a
    anh = a.conj().T @ a.conj().T @ a @ a
    x = a + a.conj().T
    return n, anh, x


_N1Q, _ANH1Q, _X1Q = _single_qutrit_ops()
_I3 = np.eye(QUTRIT_DIM, dtype=complex)


def build_drift(params: DeviceParams) -> np.ndarray:
    """Drift Hamiltonian H0 on the 9-dimensional two-qutrit space."""
    h = (
        params.omega1 * np.kron(_N1Q, _I3)
        + params.chi1 * np.kron(_ANH1Q, _I3)
        + params.omega2 * np.kron(_I3, _N1Q)
        + params.chi2 * np.kron(_I3, _ANH1Q)
        + params.g * np.kron(_X1Q, _X1Q)
    )
    return h


def build_control_ops() -> tuple[np.ndarray, np.ndarray]:
    """Drive operators (a1 + a1^dag) x I and I x (a2 + a2^dag)."""
    return np.kron(_X1Q, _I3), np.kron(_I3, _X1Q)


_HC1, _HC2 = build_control_ops()


def herm_expm(hamiltonian: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) for Hermitian H via spectral decomposition.

    H is symmetrized as (H + H^dag)/2 before decomposition; inputs whose
    asymmetry exceeds HERM_TOL are rejected.  Valid for arbitrarily large t,
    unlike series or splitting methods.
    """
    h = np.asarray(hamiltonian, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    asym = np.max(np.abs(h - h.conj().T))
    if asym > HERM_TOL:
        raise ValueError(f"matrix is not Hermitian: max |H - H^dag| = {asym:.3e}")
    h = 0.5 * (h + h.conj().T)
    evals, evecs = np.linalg.eigh(h)
    phases = np.exp(-1j * evals * t)
    return (evecs * phases) @ evecs.conj().T


def slice_hamiltonians(channels: np.ndarray, params: DeviceParams) -> np.ndarray:
    """Stack of per-slice generators H^(j) = H0 + eps_1^(j) Hc1 + eps_2^(j) Hc2."""
    ch = np.asarray(channels, dtype=float)
    h0 = build_drift(params)
    return (
        h0[None, :, :]
        + ch[0][:, None, None] * _HC1[None, :, :]
        + ch[1][:, None, None] * _HC2[None, :, :]
    )


def _expm_stack(h_stack: np.ndarray, dt: float):
    """Eigendecompose a stack of Hermitian matrices and return (evals, evecs, U)."""
    evals, evecs = np.linalg.eigh(h_stack)
    phases = np.exp(-1j * dt * evals)
    u = (evecs * phases[..., None, :]) @ np.conjugate(np.swapaxes(evecs, -1, -2))
    return evals, evecs, u


def _ordered_product(slice_props: np.ndarray) -> np.ndarray:
    """Time-ordered product U_{N-1} ... U_1 U_0 of a stack of slice propagators."""
    u = slice_props[0]
    for j in range(1, slice_props.shape[0]):
        u = slice_props[j] @ u
    return u


def propagate(pulse: PulseSet, params: DeviceParams) -> np.ndarray:
    """Total propagator of a piecewise-constant pulse: later slices act from the left."""
    h_stack = slice_hamiltonians(pulse.channels, params)
    _, _, u_slices = _expm_stack(h_stack, pulse.dt)
    return _ordered_product(u_slices)


def propagate_channel_sets(
    channel_sets: np.ndarray, dt: float, params: DeviceParams
) -> np.ndarray:
    """Propagators for several pulses sharing dt on one device.

    channel_sets has shape (B, 2, N); all B * N slice exponentials are computed
    in a single stacked eigendecomposition.  Returns a (B, 9, 9) stack.
    """
    ch = np.asarray(channel_sets, dtype=float)
    if ch.ndim != 3 or ch.shape[1] != 2:
        raise ValueError(f"expected shape (B, 2, N), got {ch.shape}")
    b, _, n = ch.shape
    h0 = build_drift(params)
    h_stack = (
        h0[None, None, :, :]
        + ch[:, 0, :, None, None] * _HC1[None, None, :, :]
        + ch[:, 1, :, None, None] * _HC2[None, None, :, :]
    ).reshape(b * n, HILBERT_DIM, HILBERT_DIM)
    _, _, u = _expm_stack(h_stack, dt)
    u = u.reshape(b, n, HILBERT_DIM, HILBERT_DIM)
    return np.stack([_ordered_product(u[i]) for i in range(b)])


def avg_gate_fidelity(u: np.ndarray, v_target: np.ndarray) -> float:
    """Average gate fidelity F = (|Tr(V^dag U)|^2 + D) / (D (D + 1)).

    D is the full Hilbert-space dimension (9 for two qutrits), which makes
    F(U, U) = 1 exactly.  Global-phase invariant.
    """
    u = np.asarray(u)
    v = np.asarray(v_target)
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    d = u.shape[0]
    tr = np.trace(v.conj().T @ u)
    return float((abs(tr) ** 2 + d) / (d * (d + 1)))


def target_cz3() -> np.ndarray:
    """Two-qutrit controlled-phase gate with phases exp(+-2 pi i/3) on |11>,|12>,|21>,|22>."""
    w = np.exp(2j * np.pi / 3)
    return np.diag(
        np.array([1, 1, 1, 1, w, w.conjugate(), 1, w.conjugate(), w], dtype=complex)
    )


def target_alt() -> np.ndarray:
    """Alternative controlled-phase gate: a pi phase on |22> only."""
    d = np.ones(HILBERT_DIM, dtype=complex)
    d[-1] = -1.0
    return np.diag(d)


GATE_TARGETS = {"cz3": target_cz3, "alt": target_alt}


def gate_target(name: str) -> np.ndarray:
    """Look up a named target gate ('cz3' or 'alt')."""
    try:
        return GATE_TARGETS[name]()
    except KeyError:
        raise ValueError(f"unknown gate {name!r}; expected one of {sorted(GATE_TARGETS)}")


def max_unitarity_defect(u: np.ndarray) -> float:
    """max |U^dag U - I|, the unitarity defect used in contracts and tests."""
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
