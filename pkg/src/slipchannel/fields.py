"""Vector calculus, norms, wall traces and energy-balance diagnostics.

Velocity fields carry parities (even, even, odd) so that the wall-normal
component and the tangential vorticity vanish identically at the walls;
vorticity fields carry the complementary (odd, odd, even) layout.  All
norms are computed in coefficient space via Parseval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft

from .grid import Grid, Parity
from .spectral import (
    SpectralScalar,
    ParityMismatchError,
    _norm_sq,
    derivative,
    divergence_coeffs,
    get_fft_workers,
    inner,
    l2_norm_scalar,
)

__all__ = [
    "VelocityState",
    "VorticityState",
    "BoussinesqState",
    "curl",
    "curl_vorticity",
    "l2_norm",
    "h1_seminorm",
    "grad_inner",
    "ibp_residual",
    "wall_trace",
    "boundary_vorticity_trace",
    "normal_vorticity_trace",
    "TangentialWallTrace",
    "energy_balance_residual",
    "energy_balance_table",
    "boussinesq_balance_residual",
    "boussinesq_balance_table",
    "cumulative_integral",
]

VELOCITY_PARITIES = (Parity.EVEN, Parity.EVEN, Parity.ODD)
VORTICITY_PARITIES = (Parity.ODD, Parity.ODD, Parity.EVEN)


def _check_triple(c1, c2, c3, parities) -> None:
    for f, p in zip((c1, c2, c3), parities):
        if f.parity is not p:
            raise ParityMismatchError(
                f"expected parity {p.value}, got {f.parity.value}"
            )
    c1.grid.check_same(c2.grid)
    c1.grid.check_same(c3.grid)


@dataclass(frozen=True)
class VelocityState:
    """Divergence-free velocity with impermeable, vorticity-slip walls."""

    u1: SpectralScalar
    u2: SpectralScalar
    u3: SpectralScalar

    def __post_init__(self) -> None:
        _check_triple(self.u1, self.u2, self.u3, VELOCITY_PARITIES)

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    def components(self) -> tuple[SpectralScalar, SpectralScalar, SpectralScalar]:
        return (self.u1, self.u2, self.u3)

    def stack(self) -> np.ndarray:
        return np.stack([self.u1.coeffs, self.u2.coeffs, self.u3.coeffs])

    @classmethod
    def from_stack(cls, grid: Grid, c: np.ndarray) -> "VelocityState":
        return cls(*(SpectralScalar(grid, p, np.ascontiguousarray(c[i]))
                     for i, p in enumerate(VELOCITY_PARITIES)))

    def divergence_max(self) -> float:
        return float(np.max(np.abs(divergence_coeffs(self.stack(), self.grid))))

    def l2(self) -> float:
        return l2_norm(self)

    def max_speed(self) -> float:
        from .spectral import _inverse_stack

        s = _inverse_stack(self.stack(), VELOCITY_PARITIES, self.grid)
        return float(np.max(np.sqrt(np.sum(s * s, axis=0))))

    def __add__(self, other: "VelocityState") -> "VelocityState":
        return VelocityState(self.u1 + other.u1, self.u2 + other.u2, self.u3 + other.u3)

    def __sub__(self, other: "VelocityState") -> "VelocityState":
        return VelocityState(self.u1 - other.u1, self.u2 - other.u2, self.u3 - other.u3)

    def __mul__(self, a: float) -> "VelocityState":
        return VelocityState(self.u1 * a, self.u2 * a, self.u3 * a)

    __rmul__ = __mul__

    def __neg__(self) -> "VelocityState":
        return self * -1.0


@dataclass(frozen=True)
class VorticityState:
    """curl of a velocity state; tangential components vanish at the walls."""

    w1: SpectralScalar
    w2: SpectralScalar
    w3: SpectralScalar

    def __post_init__(self) -> None:
        _check_triple(self.w1, self.w2, self.w3, VORTICITY_PARITIES)

    @property
    def grid(self) -> Grid:
        return self.w1.grid

    def components(self) -> tuple[SpectralScalar, SpectralScalar, SpectralScalar]:
        return (self.w1, self.w2, self.w3)

    def stack(self) -> np.ndarray:
        return np.stack([self.w1.coeffs, self.w2.coeffs, self.w3.coeffs])

    @classmethod
    def from_stack(cls, grid: Grid, c: np.ndarray) -> "VorticityState":
        return cls(*(SpectralScalar(grid, p, np.ascontiguousarray(c[i]))
                     for i, p in enumerate(VORTICITY_PARITIES)))

    def l2(self) -> float:
        return l2_norm(self)


@dataclass(frozen=True)
class BoussinesqState:
    """Velocity plus an odd-parity density perturbation (zero at walls)."""

    vel: VelocityState
    rho: SpectralScalar

    def __post_init__(self) -> None:
        if self.rho.parity is not Parity.ODD:
            raise ParityMismatchError("density perturbation must have odd parity")
        self.vel.grid.check_same(self.rho.grid)

    @property
    def grid(self) -> Grid:
        return self.vel.grid

    def stack(self) -> np.ndarray:
        return np.concatenate([self.vel.stack(), self.rho.coeffs[None]])

    @classmethod
    def from_stack(cls, grid: Grid, c: np.ndarray) -> "BoussinesqState":
        return cls(
            VelocityState.from_stack(grid, c[:3]),
            SpectralScalar(grid, Parity.ODD, np.ascontiguousarray(c[3])),
        )

    def __sub__(self, other: "BoussinesqState") -> "BoussinesqState":
        return BoussinesqState(self.vel - other.vel, self.rho - other.rho)


State = Union[SpectralScalar, VelocityState, BoussinesqState, VorticityState]


# ---------------------------------------------------------------------------
# curl
# ---------------------------------------------------------------------------


def _curl_stack(c: np.ndarray, grid: Grid, parities) -> np.ndarray:
    """Curl of a 3-component coefficient stack with the given parities."""
    ikx = (1j * grid.kx)[:, None, None]
    iky = (1j * grid.ky)[None, :, None]
    kzp = (np.pi * grid.kz)[None, None, :]
    # d/dz multiplies by -kz*pi on even input, +kz*pi on odd input
    sz = [(-kzp if p is Parity.EVEN else kzp) for p in parities]
    out = np.empty_like(c)
    out[0] = iky * c[2] - sz[1] * c[1]
    out[1] = sz[0] * c[0] - ikx * c[2]
    out[2] = ikx * c[1] - iky * c[0]
    return out


def curl(v: VelocityState) -> VorticityState:
    """Vorticity of a velocity state."""
    return VorticityState.from_stack(
        v.grid, _curl_stack(v.stack(), v.grid, VELOCITY_PARITIES)
    )


def curl_vorticity(w: VorticityState) -> VelocityState:
    """curl of a vorticity state; equals -laplacian(u) when w = curl u."""
    return VelocityState.from_stack(
        w.grid, _curl_stack(w.stack(), w.grid, VORTICITY_PARITIES)
    )


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def l2_norm(f: State) -> float:
    """L2 norm over the channel; for states, the root-sum-square of components."""
    if isinstance(f, SpectralScalar):
        return l2_norm_scalar(f)
    if isinstance(f, BoussinesqState):
        return float(np.sqrt(l2_norm(f.vel) ** 2 + l2_norm_scalar(f.rho) ** 2))
    total = sum(_norm_sq(c.coeffs, c.grid) for c in f.components())
    return float(np.sqrt(total))


def _grad_norm_sq_scalar(f: SpectralScalar) -> float:
    g = f.grid
    c2 = f.coeffs.real**2 + f.coeffs.imag**2
    # |df/dx|^2 + |df/dy|^2 + |df/dz|^2 summed with Parseval weights;
    # the z-derivative flips parity but the weight pattern is unchanged
    sym = (
        g.kx[:, None, None] ** 2
        + g.ky[None, :, None] ** 2
        + (np.pi * g.kz[None, None, :]) ** 2
    )
    return float(g.volume * np.sum((c2 * sym) @ g.parseval_weights))


def h1_seminorm(v: State) -> float:
    """L2 norm of the full gradient (tensor) computed spectrally."""
    if isinstance(v, SpectralScalar):
        return float(np.sqrt(_grad_norm_sq_scalar(v)))
    if isinstance(v, BoussinesqState):
        return float(np.sqrt(h1_seminorm(v.vel) ** 2 + _grad_norm_sq_scalar(v.rho)))
    return float(np.sqrt(sum(_grad_norm_sq_scalar(c) for c in v.components())))


def grad_inner(u: VelocityState, phi: VelocityState) -> float:
    """int grad(u) : grad(phi) dx."""
    total = 0.0
    for a, b in zip(u.components(), phi.components()):
        for axis in ("x", "y", "z"):
            total += inner(derivative(a, axis), derivative(b, axis))
    return total


def ibp_residual(u: VelocityState, phi: VelocityState) -> float:
    """int grad(u):grad(phi) - int curl(u).curl(phi).

    Vanishes for divergence-free fields satisfying the slip conditions:
    on flat walls every boundary term of the integration-by-parts identity
    is identically zero (tangential vorticity trace is zero by parity and
    the wall normal is constant).
    """
    u.grid.check_same(phi.grid)
    wu, wphi = curl(u), curl(phi)
    curl_part = sum(inner(a, b) for a, b in zip(wu.components(), wphi.components()))
    return grad_inner(u, phi) - curl_part


# ---------------------------------------------------------------------------
# Wall traces
# ---------------------------------------------------------------------------


def wall_trace(f: SpectralScalar) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise values of f on the z = 0 and z = 1 collocation planes.

    Odd fields return exact-zero planes.
    """
    g = f.grid
    if f.parity is Parity.ODD:
        zero = np.zeros((g.nx, g.ny))
        return zero, zero.copy()
    signs = np.where(np.arange(g.nz + 1) % 2 == 0, 1.0, -1.0)
    bottom_hat = np.sum(f.coeffs, axis=2)
    top_hat = f.coeffs @ signs
    plane = sfft.ifft2(
        np.stack([bottom_hat, top_hat]), axes=(-2, -1), norm="forward",
        workers=get_fft_workers(),
    ).real
    return plane[0], plane[1]


@dataclass(frozen=True)
class TangentialWallTrace:
    """Tangential vorticity samples on both walls, shape (2, nx, ny) each."""

    bottom: np.ndarray
    top: np.ndarray

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.bottom)), np.max(np.abs(self.top))))


def boundary_vorticity_trace(w: VorticityState) -> TangentialWallTrace:
    """Tangential vorticity (w1, w2) on both walls.

    Identically zero for any vorticity produced by curl() - this is the
    executable witness of the vorticity-slip wall condition.
    """
    b1, t1 = wall_trace(w.w1)
    b2, t2 = wall_trace(w.w2)
    return TangentialWallTrace(np.stack([b1, b2]), np.stack([t1, t2]))


def normal_vorticity_trace(w: VorticityState) -> tuple[np.ndarray, np.ndarray]:
    """Normal vorticity w3 on both walls (generically nonzero)."""
    return wall_trace(w.w3)


# ---------------------------------------------------------------------------
# Time quadrature and energy balances
# ---------------------------------------------------------------------------


def cumulative_integral(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order cumulative integral of uniformly sampled values.

    Entry i approximates the integral from t_0 to t_i.  Even prefixes use
    composite Simpson; odd prefixes splice in a 3/8 panel; the very first
    interval integrates the cubic through the first four samples.
    """
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 3:
        raise ValueError("need at least 3 samples for the balance quadrature")
    out = np.zeros(n)
    # cumulative Simpson pair sums: I[2m] = I[2m-2] + h/3 (y[2m-2] + 4 y[2m-1] + y[2m])
    pair = dt / 3.0 * (y[:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(pair)
    if n >= 4:
        # odd index i >= 3: 3/8 panel over the first three intervals,
        # then Simpson over the remaining even count
        three8 = 3.0 * dt / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3])
        rest = dt / 3.0 * (y[3:-2:2] + 4.0 * y[4:-1:2] + y[5::2])
        out[3::2] = three8 + np.concatenate([[0.0], np.cumsum(rest)])
        # first interval from the cubic through samples 0..3
        out[1] = dt * (9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3]) / 24.0
    else:
        out[1] = dt * (5.0 * y[0] + 8.0 * y[1] - y[2]) / 12.0
    return out


def _check_snapshots(snapshots) -> float:
    if len(snapshots) < 3:
        raise ValueError("need at least 3 snapshots")
    times = np.array([t for t, _ in snapshots])
    steps = np.diff(times)
    if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1e-30):
        raise ValueError("snapshots must be at uniform, increasing times")
    return float(steps[0])


def energy_balance_table(
    snapshots: Sequence[tuple[float, VelocityState]], nu: float
) -> dict[str, np.ndarray]:
    """Time series of the discrete energy balance
    1/2 ||u(t)||^2 + nu int_0^t ||curl u||^2 - 1/2 ||u(0)||^2."""
    h = _check_snapshots(snapshots)
    times = np.array([t for t, _ in snapshots])
    energy = np.array([0.5 * l2_norm(u) ** 2 for _, u in snapshots])
    enstrophy = np.array([l2_norm(curl(u)) ** 2 for _, u in snapshots])
    dissipation = nu * cumulative_integral(enstrophy, h)
    residual = energy + dissipation - energy[0]
    return {
        "time": times,
        "kinetic_energy": energy,
        "dissipation_integral": dissipation,
        "residual": residual,
    }


def energy_balance_residual(
    snapshots: Sequence[tuple[float, VelocityState]], nu: float
) -> float:
    """Max over snapshot times of the absolute energy-balance residual."""
    return float(np.max(np.abs(energy_balance_table(snapshots, nu)["residual"])))


def boussinesq_balance_table(
    snapshots: Sequence[tuple[float, BoussinesqState]], nu: float, epsilon: float
) -> dict[str, np.ndarray]:
    """Exact semi-discrete balance for the buoyant system:

        d/dt 1/2 (||v||^2 + ||rho||^2) + nu ||curl v||^2
            + eps ||grad rho||^2 + int rho v3 dx = 0.

    The buoyancy cross term int rho v3 is reported as its own column; it
    is part of the exact balance even though the energy *inequality* for
    the viscous system does not display it.
    """
    h = _check_snapshots(snapshots)
    times = np.array([t for t, _ in snapshots])
    energy = np.array(
        [0.5 * (l2_norm(s.vel) ** 2 + l2_norm_scalar(s.rho) ** 2) for _, s in snapshots]
    )
    enstrophy = np.array([l2_norm(curl(s.vel)) ** 2 for _, s in snapshots])
    grad_rho = np.array([_grad_norm_sq_scalar(s.rho) for _, s in snapshots])
    cross = np.array([inner(s.rho, s.vel.u3) for _, s in snapshots])
    visc_int = nu * cumulative_integral(enstrophy, h)
    diff_int = epsilon * cumulative_integral(grad_rho, h)
    cross_int = cumulative_integral(cross, h)
    residual = energy + visc_int + diff_int + cross_int - energy[0]
    return {
        "time": times,
        "total_energy": energy,
        "viscous_integral": visc_int,
        "diffusive_integral": diff_int,
        "buoyancy_cross_integral": cross_int,
        "residual": residual,
    }


def boussinesq_balance_residual(
    snapshots: Sequence[tuple[float, BoussinesqState]], nu: float, epsilon: float
) -> float:
    return float(
        np.max(np.abs(boussinesq_balance_table(snapshots, nu, epsilon)["residual"]))
    )
