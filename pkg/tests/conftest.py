import numpy as np
import pytest

from mks.grid import Field6, make_grid, random_field, to_physical, to_spectral
from mks.multipliers import CutoffLevel, sharp_cutoff


@pytest.fixture(scope="session")
def grid4():
    return make_grid(4, 2.0 * np.pi)


@pytest.fixture(scope="session")
def grid8():
    return make_grid(8, 2.0 * np.pi)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 2.0 * np.pi)


def banded_field(grid, seed, scale=1.0, level=1):
    """Random field band-limited to the cube |k_i| <= 2^level."""
    f = random_field(grid, seed=seed, scale=scale)
    return to_physical(sharp_cutoff(to_spectral(f), CutoffLevel(level)))


def coords(grid):
    x = grid.axes()
    n = grid.points_per_axis
    return x.reshape(n, 1, 1), x.reshape(1, n, 1), x.reshape(1, 1, n)


def plane_wave(grid, mode, component=0, amplitude=1.0):
    """amplitude * exp(i k.x) in one component; mode in integer units."""
    n = grid.points_per_axis
    kx, ky, kz = (2.0 * np.pi * m / grid.box_length for m in mode)
    x, y, z = coords(grid)
    data = np.zeros((6, n, n, n), dtype=np.complex128)
    data[component] = amplitude * np.exp(1j * (kx * x + ky * y + kz * z))
    return Field6(grid, "physical", data)
