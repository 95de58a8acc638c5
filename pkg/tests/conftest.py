import numpy as np
import pytest

from hartreekit.spectral import Grid, Field
from hartreekit.potentials import PotentialSpec
from hartreekit.ground_state import solve_ground_state

GAMMA = 2.5


@pytest.fixture(scope="session")
def grid32():
    return Grid(3, 32, 10.0)


@pytest.fixture(scope="session")
def grid48():
    return Grid(3, 48, 10.0)


@pytest.fixture(scope="session")
def grid64():
    # half_length 10.6 sits where box-truncation and kernel-regularization
    # errors cancel: dilation identities hold to ~3e-6 there vs ~6e-5 at 10.0.
    return Grid(3, 64, 10.6)


@pytest.fixture(scope="session")
def gs48(grid48):
    gs = solve_ground_state(grid48, PotentialSpec(kind="zero"), GAMMA)
    assert gs.converged
    return gs


@pytest.fixture(scope="session")
def gs64(grid64):
    gs = solve_ground_state(grid64, PotentialSpec(kind="zero"), GAMMA)
    assert gs.converged
    return gs


def smooth_field(grid, rng, amplitude=0.5, n_bumps=3):
    """Random superposition of off-center complex Gaussians; decays well inside the box."""
    vals = np.zeros(grid.shape, dtype=complex)
    for _ in range(n_bumps):
        c = rng.uniform(-0.2 * grid.half_length, 0.2 * grid.half_length, size=grid.dim)
        w = rng.uniform(0.8, 1.8)
        amp = amplitude * rng.uniform(0.4, 1.0)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
        vals += amp * np.exp(1j * ph) * np.exp(-r2 / (2.0 * w * w))
    return Field(grid, vals)
