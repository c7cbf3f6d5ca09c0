"""Collocation grid for the slip channel [0, 2pi)^2 x [0, 1].

The channel is periodic in x and y and bounded by flat walls at z = 0 and
z = 1 (outward normals -e3 and +e3).  Wall-normal structure is represented
in a parity basis: cosine modes cos(k*pi*z) for even fields, sine modes
sin(k*pi*z) for odd fields.  Odd fields therefore vanish identically on
both walls, which is how the impermeability and vorticity-slip wall
conditions are enforced structurally rather than numerically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["Parity", "Grid", "GridMismatchError", "sinpi", "cospi"]

LX = 2.0 * np.pi
LY = 2.0 * np.pi
HEIGHT = 1.0


class GridMismatchError(ValueError):
    """Raised when two fields on incompatible grids are combined."""


class Parity(enum.Enum):
    """Wall-normal expansion family of a scalar field."""

    EVEN = "even"   # cos(k*pi*z): Neumann-like, generally nonzero at walls
    ODD = "odd"     # sin(k*pi*z): vanishes exactly at z = 0 and z = 1

    def flipped(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN


def sinpi(t: np.ndarray) -> np.ndarray:
    """sin(pi*t) with exact zeros at integer t.

    np.sin(np.pi * k) is O(k * eps) rather than zero; particle and trace
    logic relies on odd basis functions being *exactly* zero on the walls,
    so the argument is reduced to [-0.5, 0.5] before calling np.sin.
    """
    t = np.asarray(t, dtype=float)
    n = np.round(t)
    r = t - n
    sign = np.where(np.mod(n, 2.0) == 0.0, 1.0, -1.0)
    return sign * np.sin(np.pi * r)


def cospi(t: np.ndarray) -> np.ndarray:
    """cos(pi*t) with exact zeros at half-integer t."""
    t = np.asarray(t, dtype=float)
    # cos(pi*t) = sin(pi*(t + 1/2)); t + 0.5 is exact for the t we care about
    return sinpi(t + 0.5)


@dataclass(frozen=True)
class Grid:
    """Mode counts for the slip channel.

    Parameters
    ----------
    nx, ny : int
        Horizontal mode counts; must be even and >= 4.
    nz : int
        Wall-normal mode count; must be >= 4.  Collocation uses the
        nz + 1 endpoint nodes z_l = l / nz, so the walls are grid planes.
    """

    nx: int
    ny: int
    nz: int

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if n < 4 or n % 2 != 0:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        if self.nz < 4:
            raise ValueError(f"nz must be >= 4, got {self.nz}")

    # -- shapes ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int, int]:
        """Shape of both coefficient and sample arrays: (nx, ny, nz + 1)."""
        return (self.nx, self.ny, self.nz + 1)

    @property
    def volume(self) -> float:
        return LX * LY * HEIGHT

    @property
    def min_spacing(self) -> float:
        return min(LX / self.nx, LY / self.ny, HEIGHT / self.nz)

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatchError(f"grids differ: {self} vs {other}")

    # -- nodes ----------------------------------------------------------

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (LX / self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * (LY / self.ny)

    @cached_property
    def z(self) -> np.ndarray:
        return np.arange(self.nz + 1) / self.nz

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    # -- wavenumbers ----------------------------------------------------

    @cached_property
    def kx(self) -> np.ndarray:
        """Integer x-wavenumbers in FFT order, kx in [-nx/2, nx/2)."""
        return np.fft.fftfreq(self.nx) * self.nx

    @cached_property
    def ky(self) -> np.ndarray:
        return np.fft.fftfreq(self.ny) * self.ny

    @cached_property
    def kz(self) -> np.ndarray:
        """Wall-normal mode index 0..nz (physical wavenumber is kz*pi)."""
        return np.arange(self.nz + 1, dtype=float)

    @cached_property
    def ksq(self) -> np.ndarray:
        """Laplacian symbol kx^2 + ky^2 + (kz*pi)^2, shape (nx, ny, nz+1)."""
        return (
            self.kx[:, None, None] ** 2
            + self.ky[None, :, None] ** 2
            + (np.pi * self.kz[None, None, :]) ** 2
        )

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        """1 / ksq with the (0, 0, 0) mean mode mapped to zero."""
        inv = np.empty(self.shape)
        inv[:] = self.ksq
        inv[0, 0, 0] = 1.0
        np.reciprocal(inv, out=inv)
        inv[0, 0, 0] = 0.0
        return inv

    # -- dealiasing (two-thirds rule) ------------------------------------

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True where a mode survives dealiasing of quadratic products."""
        keep_x = np.abs(self.kx) <= self.nx / 3.0
        keep_y = np.abs(self.ky) <= self.ny / 3.0
        keep_z = self.kz <= 2.0 * self.nz / 3.0
        return (
            keep_x[:, None, None] & keep_y[None, :, None] & keep_z[None, None, :]
        )

    @cached_property
    def dealias_block(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index arrays gathering the retained modes into a dense block."""
        ix = np.where(np.abs(self.kx) <= self.nx / 3.0)[0]
        iy = np.where(np.abs(self.ky) <= self.ny / 3.0)[0]
        iz = np.where(self.kz <= 2.0 * self.nz / 3.0)[0]
        return ix, iy, iz

    # -- quadrature -------------------------------------------------------

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Per-kz weight in ||f||^2 = vol * sum w_kz |c|^2 (w = 1, 1/2, ...)."""
        w = np.full(self.nz + 1, 0.5)
        w[0] = 1.0
        return w

    @cached_property
    def quadrature_weights_z(self) -> np.ndarray:
        """Trapezoid weights on the endpoint z-nodes (sum to 1)."""
        w = np.full(self.nz + 1, 1.0 / self.nz)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def integrate_samples(self, samples: np.ndarray) -> float:
        """Volume integral of a sampled field by trapezoid-in-z quadrature.

        Exact for band-limited integrands below the z-mode 2*nz and the
        horizontal Nyquist; used as the independent oracle against the
        coefficient-space (Parseval) route.
        """
        if samples.shape != self.shape:
            raise GridMismatchError(
                f"sample shape {samples.shape} != grid shape {self.shape}"
            )
        cell = (LX / self.nx) * (LY / self.ny)
        return float(cell * np.sum(samples @ self.quadrature_weights_z))
