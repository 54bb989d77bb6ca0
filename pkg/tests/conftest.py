import pytest
from threadpoolctl import threadpool_limits

from quditcal.dynamics import DeviceParams, PulseSet, NOMINAL_PARAMS
from quditcal.grape import GrapeConfig, grape_optimize

# small-matrix workloads run fastest (and bit-reproducibly) single-threaded
threadpool_limits(limits=1)


def random_pulse(rng, n_slices=8, dt=7.0, amp_bound=0.3, amp=0.25):
    channels = rng.uniform(-amp, amp, (2, n_slices))
    return PulseSet(dt=dt, channels=channels, amp_bound=amp_bound)


def random_params(rng):
    return DeviceParams(
        omega1=rng.uniform(0.05, 0.3),
        omega2=rng.uniform(0.05, 0.3),
        chi1=rng.uniform(-0.1, 0.0),
        chi2=rng.uniform(-0.1, 0.0),
        g=rng.uniform(1e-3, 5e-3),
    )


@pytest.fixture(scope="session")
def small_baseline():
    """A short optimized-ish pulse for fast environment tests (not converged)."""
    cfg = GrapeConfig(
        n_slices=20, total_time=200.0, max_iterations=60,
        target_infidelity=1e-4, seed=0,
    )
    from quditcal.dynamics import target_cz3

    return grape_optimize(cfg, NOMINAL_PARAMS, target_cz3()).pulse
