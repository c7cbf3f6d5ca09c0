import numpy as np
import pytest

from slipchannel.grid import Grid, Parity
from slipchannel.spectral import SpectralScalar, dealias, transform_forward


@pytest.fixture
def grid() -> Grid:
    return Grid(16, 16, 16)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_scalar(grid: Grid, parity: Parity, rng: np.random.Generator) -> SpectralScalar:
    """Random band-limited field inside the dealias cutoff."""
    samples = rng.standard_normal(grid.shape)
    if parity is Parity.ODD:
        samples[:, :, 0] = 0.0
        samples[:, :, -1] = 0.0
    return dealias(transform_forward(samples, parity, grid))


def random_velocity(grid: Grid, rng: np.random.Generator):
    """Random divergence-free, BC-compliant, dealiased velocity state."""
    from slipchannel.spectral import leray_project

    f1 = random_scalar(grid, Parity.EVEN, rng)
    f2 = random_scalar(grid, Parity.EVEN, rng)
    f3 = random_scalar(grid, Parity.ODD, rng)
    return leray_project(f1, f2, f3)


def _low_pass(field: SpectralScalar, kmax: int) -> SpectralScalar:
    g = field.grid
    keep = (
        (np.abs(g.kx) <= kmax)[:, None, None]
        & (np.abs(g.ky) <= kmax)[None, :, None]
        & (g.kz <= kmax)[None, None, :]
    )
    return SpectralScalar(g, field.parity, field.coeffs * keep)


def smooth_scalar(
    grid: Grid, parity: Parity, rng: np.random.Generator, kmax: int = 2
) -> SpectralScalar:
    """Random field supported on modes |k| <= kmax (spectrally smooth)."""
    return _low_pass(random_scalar(grid, parity, rng), kmax)


def smooth_velocity(grid: Grid, rng: np.random.Generator, kmax: int = 2):
    """Smooth random divergence-free velocity for transport-accuracy tests."""
    from slipchannel.spectral import leray_project

    return leray_project(
        smooth_scalar(grid, Parity.EVEN, rng, kmax),
        smooth_scalar(grid, Parity.EVEN, rng, kmax),
        smooth_scalar(grid, Parity.ODD, rng, kmax),
    )


def quad_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Collocation-quadrature inner product, the oracle for Parseval."""
    return grid.integrate_samples(a * b)
