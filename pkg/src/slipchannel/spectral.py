"""Band-limited scalar fields on the slip channel and their transforms.

A field of even parity is represented as

    f(x, y, z) = sum_{kx, ky, kz}  c[kx, ky, kz] * exp(i(kx x + ky y)) * cos(kz pi z)

and odd parity uses sin(kz pi z).  Coefficients are stored as a complex
array of shape (nx, ny, nz + 1) with FFT ordering in kx, ky and kz = 0..nz.
Conjugate symmetry in (kx, ky) keeps physical samples real.  The constant
mode c[0, 0, 0] of an even field equals the domain mean.

Conventions:

* odd fields have no kz = 0 mode; that slot is kept identically zero;
* the odd kz = nz mode sin(nz pi z) vanishes at every collocation node,
  so it never appears in forward transforms and contributes nothing to
  inverse transforms (off-grid evaluation does include it);
* products of fields must be dealiased with the two-thirds rule before
  they are used in any conservation-sensitive balance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import Grid, Parity

__all__ = [
    "SpectralScalar",
    "ParityMismatchError",
    "ShapeMismatchError",
    "transform_forward",
    "transform_inverse",
    "derivative",
    "dealias",
    "laplacian",
    "inner",
    "l2_norm_scalar",
    "zeros",
    "single_mode",
    "set_fft_workers",
    "get_fft_workers",
]


class ParityMismatchError(ValueError):
    """Raised when an operation receives a field of the wrong parity."""


class ShapeMismatchError(ValueError):
    """Raised when a sample or coefficient array has the wrong shape."""


_fft_workers: int = 1


def set_fft_workers(n: int) -> None:
    """Set the worker count passed to scipy.fft (results are identical
    for any count; this only affects speed)."""
    global _fft_workers
    if n < 1:
        raise ValueError("worker count must be >= 1")
    _fft_workers = int(n)


def get_fft_workers() -> int:
    return _fft_workers


@dataclass(frozen=True)
class SpectralScalar:
    """Immutable band-limited scalar field in coefficient space."""

    grid: Grid
    parity: Parity
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.coeffs.shape != self.grid.shape:
            raise ShapeMismatchError(
                f"coefficient shape {self.coeffs.shape} != grid shape {self.grid.shape}"
            )
        if self.coeffs.dtype != np.complex128:
            raise ShapeMismatchError(f"coefficients must be complex128, got {self.coeffs.dtype}")
        self.coeffs.setflags(write=False)

    # Convenience wrappers around the module-level operations.

    def samples(self) -> np.ndarray:
        return transform_inverse(self)

    def deriv(self, axis: str) -> "SpectralScalar":
        return derivative(self, axis)

    def dealiased(self) -> "SpectralScalar":
        return dealias(self)

    def l2(self) -> float:
        return l2_norm_scalar(self)

    def _like(self, coeffs: np.ndarray, parity: Parity | None = None) -> "SpectralScalar":
        return SpectralScalar(self.grid, parity or self.parity, coeffs)

    def __add__(self, other: "SpectralScalar") -> "SpectralScalar":
        self._check_compatible(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralScalar") -> "SpectralScalar":
        self._check_compatible(other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralScalar":
        return self._like(self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralScalar":
        return self._like(-self.coeffs)

    def _check_compatible(self, other: "SpectralScalar") -> None:
        self.grid.check_same(other.grid)
        if self.parity is not other.parity:
            raise ParityMismatchError(
                f"parity mismatch: {self.parity.value} vs {other.parity.value}"
            )


def zeros(grid: Grid, parity: Parity) -> SpectralScalar:
    return SpectralScalar(grid, parity, np.zeros(grid.shape, dtype=np.complex128))


def single_mode(
    grid: Grid,
    parity: Parity,
    kx: int,
    ky: int,
    kz: int,
    amplitude: float = 1.0,
    phase: float = 0.0,
) -> SpectralScalar:
    """Field amplitude * cos(kx x + ky y + phase) * basis_kz(z).

    The conjugate (kx, ky) pair is populated so samples are real; for
    (kx, ky) = (0, 0) the horizontal factor is the constant cos(phase).
    """
    if not (0 <= kz <= grid.nz):
        raise ValueError(f"kz out of range: {kz}")
    if parity is Parity.ODD and kz == 0:
        raise ValueError("odd fields have no kz = 0 mode")
    c = np.zeros(grid.shape, dtype=np.complex128)
    if kx == 0 and ky == 0:
        c[0, 0, kz] = amplitude * np.cos(phase)
    else:
        half = 0.5 * amplitude * np.exp(1j * phase)
        c[kx % grid.nx, ky % grid.ny, kz] = half
        c[(-kx) % grid.nx, (-ky) % grid.ny, kz] = np.conj(half)
    return SpectralScalar(grid, parity, c)


# ---------------------------------------------------------------------------
# Transforms.  The z-direction uses DCT-I / DST-I on the endpoint nodes;
# the horizontal directions use the FFT with forward normalization, so the
# (0, 0, 0) even coefficient is the domain mean.
# ---------------------------------------------------------------------------


def _forward_z_even(fxy: np.ndarray, nz: int) -> np.ndarray:
    out = sfft.dct(fxy, type=1, axis=-1, workers=_fft_workers)
    out /= nz
    out[..., 0] *= 0.5
    out[..., nz] *= 0.5
    return out


def _forward_z_odd(fxy: np.ndarray, nz: int) -> np.ndarray:
    out = np.zeros_like(fxy)
    if nz > 1:
        out[..., 1:nz] = sfft.dst(
            np.ascontiguousarray(fxy[..., 1:nz]), type=1, axis=-1, workers=_fft_workers
        )
        out[..., 1:nz] /= nz
    return out


def _inverse_z_even(coeffs: np.ndarray, nz: int) -> np.ndarray:
    tmp = coeffs.copy()
    tmp[..., 1:nz] *= 0.5
    return sfft.dct(tmp, type=1, axis=-1, workers=_fft_workers)


def _inverse_z_odd(coeffs: np.ndarray, nz: int) -> np.ndarray:
    out = np.zeros_like(coeffs)
    if nz > 1:
        out[..., 1:nz] = 0.5 * sfft.dst(
            np.ascontiguousarray(coeffs[..., 1:nz]), type=1, axis=-1, workers=_fft_workers
        )
    return out


def _forward_stack(samples: np.ndarray, parities: tuple[Parity, ...], grid: Grid) -> np.ndarray:
    """Forward transform of a (C, nx, ny, nz+1) stack of sample arrays."""
    fxy = sfft.fft2(samples, axes=(-3, -2), norm="forward", workers=_fft_workers)
    out = np.empty_like(fxy)
    for i, p in enumerate(parities):
        if p is Parity.EVEN:
            out[i] = _forward_z_even(fxy[i], grid.nz)
        else:
            out[i] = _forward_z_odd(fxy[i], grid.nz)
    return out


def _inverse_stack(coeffs: np.ndarray, parities: tuple[Parity, ...], grid: Grid) -> np.ndarray:
    """Inverse transform of a (C, nx, ny, nz+1) coefficient stack to samples."""
    tmp = np.empty_like(coeffs)
    for i, p in enumerate(parities):
        if p is Parity.EVEN:
            tmp[i] = _inverse_z_even(coeffs[i], grid.nz)
        else:
            tmp[i] = _inverse_z_odd(coeffs[i], grid.nz)
    phys = sfft.ifft2(tmp, axes=(-3, -2), norm="forward", workers=_fft_workers)
    return np.ascontiguousarray(phys.real)


def transform_forward(samples: np.ndarray, parity: Parity, grid: Grid) -> SpectralScalar:
    """Expand collocation samples in the parity basis.

    For odd parity the wall planes l = 0 and l = nz carry no information
    (every sine basis function vanishes there) and are ignored.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.shape:
        raise ShapeMismatchError(
            f"sample shape {samples.shape} != grid shape {grid.shape}"
        )
    coeffs = _forward_stack(samples[None], (parity,), grid)[0]
    return SpectralScalar(grid, parity, coeffs)


def transform_inverse(field: SpectralScalar) -> np.ndarray:
    """Evaluate the field on the collocation nodes.

    Odd fields come back exactly zero on the wall planes.
    """
    return _inverse_stack(field.coeffs[None], (field.parity,), field.grid)[0]


# ---------------------------------------------------------------------------
# Calculus
# ---------------------------------------------------------------------------


def _deriv_x(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return coeffs * (1j * grid.kx)[:, None, None]


def _deriv_y(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return coeffs * (1j * grid.ky)[None, :, None]


def _deriv_z(coeffs: np.ndarray, grid: Grid, parity: Parity) -> np.ndarray:
    # d/dz cos(k pi z) = -k pi sin(k pi z);  d/dz sin(k pi z) = +k pi cos(k pi z)
    factor = np.pi * grid.kz
    if parity is Parity.EVEN:
        return coeffs * (-factor)
    return coeffs * factor


def derivative(field: SpectralScalar, axis: str) -> SpectralScalar:
    """Spectral derivative along 'x', 'y' or 'z'.

    Horizontal derivatives preserve parity; the z-derivative flips it.
    """
    g = field.grid
    if axis == "x":
        return SpectralScalar(g, field.parity, _deriv_x(field.coeffs, g))
    if axis == "y":
        return SpectralScalar(g, field.parity, _deriv_y(field.coeffs, g))
    if axis == "z":
        out = _deriv_z(field.coeffs, g, field.parity)
        return SpectralScalar(g, field.parity.flipped(), out)
    raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")


def dealias(field: SpectralScalar) -> SpectralScalar:
    """Two-thirds rule: zero all modes with |kx| > nx/3, |ky| > ny/3 or
    kz > 2 nz / 3.  Idempotent."""
    return SpectralScalar(
        field.grid, field.parity, field.coeffs * field.grid.dealias_mask
    )


def laplacian(field: SpectralScalar) -> SpectralScalar:
    return SpectralScalar(field.grid, field.parity, field.coeffs * (-field.grid.ksq))


# ---------------------------------------------------------------------------
# Inner products (Parseval)
# ---------------------------------------------------------------------------


def inner(f: SpectralScalar, g: SpectralScalar) -> float:
    """L2 inner product of two real fields of equal parity."""
    f._check_compatible(g)
    w = f.grid.parseval_weights
    s = np.sum((np.conj(f.coeffs) * g.coeffs).real @ w)
    return float(f.grid.volume * s)


def _norm_sq(coeffs: np.ndarray, grid: Grid) -> float:
    w = grid.parseval_weights
    mag = (coeffs.real**2 + coeffs.imag**2) @ w
    return float(grid.volume * np.sum(mag))


def l2_norm_scalar(f: SpectralScalar) -> float:
    return float(np.sqrt(_norm_sq(f.coeffs, f.grid)))


# ---------------------------------------------------------------------------
# Leray projection
# ---------------------------------------------------------------------------


def leray_project(f1: SpectralScalar, f2: SpectralScalar, f3: SpectralScalar):
    """Project a vector field with parities (even, even, odd) onto its
    divergence-free part, removing a gradient of an even pressure field.

    Returns the projected components; divergence of the result vanishes
    coefficientwise.  Gradients are annihilated, divergence-free fields
    are fixed points and parities are preserved.
    """
    from .fields import VelocityState  # cycle-free: fields imports nothing back

    if f1.parity is not Parity.EVEN or f2.parity is not Parity.EVEN:
        raise ParityMismatchError("horizontal components must have even parity")
    if f3.parity is not Parity.ODD:
        raise ParityMismatchError("wall-normal component must have odd parity")
    f1.grid.check_same(f2.grid)
    f1.grid.check_same(f3.grid)
    g = f1.grid
    c1, c2, c3 = _project_stack(np.stack([f1.coeffs, f2.coeffs, f3.coeffs]), g)
    return VelocityState(
        SpectralScalar(g, Parity.EVEN, c1),
        SpectralScalar(g, Parity.EVEN, c2),
        SpectralScalar(g, Parity.ODD, c3),
    )


def _project_stack(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Leray projection on a raw (3, nx, ny, nz+1) coefficient stack."""
    ikx = (1j * grid.kx)[:, None, None]
    iky = (1j * grid.ky)[None, :, None]
    kzp = (np.pi * grid.kz)[None, None, :]
    div = ikx * c[0] + iky * c[1] + kzp * c[2]
    q = div * grid.inv_ksq
    out = np.empty_like(c)
    out[0] = c[0] + ikx * q
    out[1] = c[1] + iky * q
    out[2] = c[2] - kzp * q
    return out


def divergence_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence coefficients (even parity) of a velocity-parity stack."""
    ikx = (1j * grid.kx)[:, None, None]
    iky = (1j * grid.ky)[None, :, None]
    kzp = (np.pi * grid.kz)[None, None, :]
    return ikx * c[0] + iky * c[1] + kzp * c[2]
