"""Two coupled qutrits: operators, propagation, and average gate fidelity.

Walks through the building blocks every later stage uses: the truncated
ladder operators, the drift and control Hamiltonians, exact piecewise-constant
propagation, and the trace-overlap gate fidelity with its handy closed-form
values.  Runs in well under a second.
"""

import numpy as np

from quditcal import (
    NOMINAL_PARAMS,
    avg_gate_fidelity,
    build_control_ops,
    build_drift,
    herm_expm,
    ladder_op,
    propagate,
    target_alt,
    target_cz3,
)
from quditcal.dynamics import PulseSet, max_unitarity_defect

np.set_printoptions(precision=4, suppress=True)

print("== operators ==")
a = ladder_op(3)
print("annihilation operator a:\n", a.real)
print("number operator a^dag a:", np.diag(a.conj().T @ a).real)

print("\n== drift Hamiltonian at the nominal device ==")
h0 = build_drift(NOMINAL_PARAMS)
print("nominal parameters:", NOMINAL_PARAMS)
print("eigenvalues:", np.linalg.eigvalsh(h0))

hc1, hc2 = build_control_ops()
print("drive 1 couples |00> <-> |10>:", hc1[0, 3].real)

print("\n== propagation ==")
rng = np.random.default_rng(0)
pulse = PulseSet(dt=10.0, channels=rng.uniform(-0.3, 0.3, (2, 40)), amp_bound=0.3)
u = propagate(pulse, NOMINAL_PARAMS)
print(f"random 40-slice pulse: unitarity defect {max_unitarity_defect(u):.2e}")

# a constant zero pulse is just the drift exponential
zero = PulseSet(dt=10.0, channels=np.zeros((2, 40)), amp_bound=0.3)
u_zero = propagate(zero, NOMINAL_PARAMS)
u_drift = herm_expm(h0, 400.0)
print(f"zero pulse vs drift exponential: max diff {np.max(np.abs(u_zero - u_drift)):.2e}")

print("\n== average gate fidelity ==")
cz3 = target_cz3()
print(f"F(CZ3, CZ3)      = {avg_gate_fidelity(cz3, cz3):.12f}")
print(f"F(I, CZ3)        = {avg_gate_fidelity(np.eye(9), cz3):.12f}  (analytic 0.2)")
print(f"F(I, U_alt)      = {avg_gate_fidelity(np.eye(9), target_alt()):.12f}  (analytic 58/90)")
phase = np.exp(1j * 1.234)
print(f"global-phase invariance: {abs(avg_gate_fidelity(phase * cz3, cz3) - 1.0):.2e}")
