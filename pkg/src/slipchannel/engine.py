"""Half-spectrum computation engine for the solver hot path.

Physical samples are real, so the solver stores only the ky >= 0 half of
the spectrum (rfft over y) and runs its transforms as

    forward:  real z-cosine/sine transform, then rfft2 over (x, y)
    inverse:  irfft2 over (x, y), then real z-synthesis

which works because the wall-normal basis map has real coefficients and
acts on a different axis than the horizontal FFTs.  All operators
(projection, curl, dealiasing, Parseval sums) have half-spectrum forms;
results are bit-identical to the full-spectrum reference path, which
remains the public representation (conversion helpers below).
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .grid import Grid, Parity
from . import spectral as _sp

__all__ = ["HalfSpectrumEngine"]

VEL_PARITIES = (Parity.EVEN, Parity.EVEN, Parity.ODD)


class HalfSpectrumEngine:
    """Transforms and operators on (C, nx, ny//2 + 1, nz + 1) stacks."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.nyh = grid.ny // 2 + 1
        self.kx = grid.kx  # full FFT order
        self.ky = np.arange(self.nyh, dtype=float)
        self.kz = grid.kz

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.grid.nx, self.nyh, self.grid.nz + 1)

    # -- cached operator symbols -----------------------------------------

    @cached_property
    def ikx(self) -> np.ndarray:
        return (1j * self.kx)[:, None, None]

    @cached_property
    def iky(self) -> np.ndarray:
        return (1j * self.ky)[None, :, None]

    @cached_property
    def kzpi(self) -> np.ndarray:
        return (np.pi * self.kz)[None, None, :]

    @cached_property
    def ksq(self) -> np.ndarray:
        return (
            self.kx[:, None, None] ** 2
            + self.ky[None, :, None] ** 2
            + (np.pi * self.kz[None, None, :]) ** 2
        )

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        inv = self.ksq.copy()
        inv[0, 0, 0] = 1.0
        np.reciprocal(inv, out=inv)
        inv[0, 0, 0] = 0.0
        return inv

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        g = self.grid
        keep_x = np.abs(self.kx) <= g.nx / 3.0
        keep_y = self.ky <= g.ny / 3.0
        keep_z = self.kz <= 2.0 * g.nz / 3.0
        return keep_x[:, None, None] & keep_y[None, :, None] & keep_z[None, None, :]

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Combined column/kz weights: ||f||^2 = vol * sum w |c|^2."""
        wy = np.full(self.nyh, 2.0)
        wy[0] = 1.0
        wy[-1] = 1.0
        wz = self.grid.parseval_weights
        return wy[None, :, None] * wz[None, None, :] * np.ones((self.grid.nx, 1, 1))

    @cached_property
    def enstrophy_weights(self) -> np.ndarray:
        """Weights turning sum w |c|^2 into ||grad f||^2 (= ||curl u||^2
        summed over a divergence-free stack)."""
        return self.parseval_weights * self.ksq

    # -- transforms --------------------------------------------------------

    @staticmethod
    def _parity_runs(parities) -> list[tuple[int, int, Parity]]:
        """Contiguous runs of equal parity, as (start, stop, parity)."""
        runs = []
        start = 0
        for i in range(1, len(parities) + 1):
            if i == len(parities) or parities[i] is not parities[start]:
                runs.append((start, i, parities[start]))
                start = i
        return runs

    def _z_forward(self, samples: np.ndarray, parities) -> np.ndarray:
        nz = self.grid.nz
        out = np.empty_like(samples)
        w = _sp.get_fft_workers()
        for a, b, p in self._parity_runs(parities):
            if p is Parity.EVEN:
                t = sfft.dct(samples[a:b], type=1, axis=-1, workers=w)
                t /= nz
                t[..., 0] *= 0.5
                t[..., nz] *= 0.5
                out[a:b] = t
            else:
                out[a:b, :, :, 0] = 0.0
                out[a:b, :, :, nz] = 0.0
                out[a:b, :, :, 1:nz] = sfft.dst(
                    samples[a:b, :, :, 1:nz], type=1, axis=-1, workers=w
                ) / nz
        return out

    def _z_inverse(self, coeffs: np.ndarray, parities) -> np.ndarray:
        nz = self.grid.nz
        out = np.empty_like(coeffs)
        w = _sp.get_fft_workers()
        for a, b, p in self._parity_runs(parities):
            if p is Parity.EVEN:
                t = coeffs[a:b].copy()
                t[..., 1:nz] *= 0.5
                out[a:b] = sfft.dct(t, type=1, axis=-1, workers=w)
            else:
                out[a:b, :, :, 0] = 0.0
                out[a:b, :, :, nz] = 0.0
                out[a:b, :, :, 1:nz] = 0.5 * sfft.dst(
                    coeffs[a:b, :, :, 1:nz], type=1, axis=-1, workers=w
                )
        return out

    def forward(self, samples: np.ndarray, parities) -> np.ndarray:
        """Real (C, nx, ny, nz+1) samples to half-spectrum coefficients."""
        zed = self._z_forward(samples, parities)
        return sfft.rfftn(zed, axes=(1, 2), norm="forward",
                          workers=_sp.get_fft_workers())

    def inverse(self, coeffs: np.ndarray, parities) -> np.ndarray:
        """Half-spectrum coefficients to real collocation samples."""
        phys = sfft.irfftn(coeffs, s=(self.grid.nx, self.grid.ny), axes=(1, 2),
                           norm="forward", workers=_sp.get_fft_workers())
        return self._z_inverse(phys, parities)

    # -- representation conversion -----------------------------------------

    def to_half(self, full: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(full[..., : self.nyh, :])

    @cached_property
    def _mirror_x(self) -> np.ndarray:
        return (-np.arange(self.grid.nx)) % self.grid.nx

    def to_full(self, half: np.ndarray) -> np.ndarray:
        """Rebuild the full spectrum using conjugate symmetry."""
        single = half.ndim == 3
        h = half[None] if single else half
        ny = self.grid.ny
        full = np.empty(h.shape[:-3] + (self.grid.nx, ny, self.grid.nz + 1),
                        dtype=np.complex128)
        full[..., : self.nyh, :] = h
        js = np.arange(self.nyh, ny)
        full[..., js, :] = np.conj(h[..., self._mirror_x, :, :][..., ny - js, :])
        return full[0] if single else full

    # -- operators ----------------------------------------------------------

    def curl(self, c: np.ndarray, parities) -> np.ndarray:
        sz = [(-self.kzpi if p is Parity.EVEN else self.kzpi) for p in parities]
        out = np.empty_like(c)
        out[0] = self.iky * c[2] - sz[1] * c[1]
        out[1] = sz[0] * c[0] - self.ikx * c[2]
        out[2] = self.ikx * c[1] - self.iky * c[0]
        return out

    def project(self, c: np.ndarray) -> np.ndarray:
        div = self.ikx * c[0] + self.iky * c[1] + self.kzpi * c[2]
        div *= self.inv_ksq
        c[0] += self.ikx * div
        c[1] += self.iky * div
        c[2] -= self.kzpi * div
        return c

    def norm_sq(self, c: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            mag = c.real**2 + c.imag**2
            if mag.ndim == 4:
                return float(self.grid.volume
                             * np.einsum("cxyz,xyz->", mag, self.parseval_weights))
            return float(self.grid.volume
                         * np.einsum("xyz,xyz->", mag, self.parseval_weights))

    def grad_norm_sq(self, c: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            mag = c.real**2 + c.imag**2
            if mag.ndim == 4:
                return float(self.grid.volume
                             * np.einsum("cxyz,xyz->", mag, self.enstrophy_weights))
            return float(self.grid.volume
                         * np.einsum("xyz,xyz->", mag, self.enstrophy_weights))

    def max_speed(self, c_vel: np.ndarray) -> float:
        s = self.inverse(c_vel, VEL_PARITIES)
        return float(np.max(np.sqrt(np.sum(s * s, axis=0))))


_ENGINES: dict[Grid, HalfSpectrumEngine] = {}


def engine_for(grid: Grid) -> HalfSpectrumEngine:
    """Shared engine per grid (caches operator symbols and FFT sizes)."""
    eng = _ENGINES.get(grid)
    if eng is None:
        eng = _ENGINES[grid] = HalfSpectrumEngine(grid)
    return eng
