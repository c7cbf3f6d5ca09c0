"""Path-line integration with flow-map gradients and transport-formula checks.

Particles carry their seed position, current position X(alpha, t) and the
flow-map gradient dX/dalpha, advanced by the variational equation
d/dt (dX/dalpha) = grad_u(X) . dX/dalpha.  The production path co-advects
particles inside the fluid time loop using the four RK stage velocity
fields, so fluid and particles form one coupled RK4 system and no time
interpolation enters the error budget.

Velocity and gradients at particle positions are evaluated by direct
trigonometric summation over the coefficient block inside the dealias
cutoff (exact for solver states, which live inside the cutoff by
construction).  Sine factors are computed with exact zeros at the walls,
so wall-seeded particles experience exactly zero normal velocity and stay
on their wall bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .grid import Grid, Parity, cospi, sinpi
from .fields import (
    BoussinesqState,
    VELOCITY_PARITIES,
    VelocityState,
    VorticityState,
)
from .spectral import SpectralScalar
from .dynamics import SolverConfig, Trajectory, integrate

__all__ = [
    "ParticleSet",
    "VelocitySampler",
    "StateSampler",
    "AnalyticSampler",
    "eval_velocity_at",
    "evaluate_scalar",
    "evaluate_scalar_gradient",
    "advect",
    "transport",
    "TransportResult",
    "cauchy_residual",
    "forced_cauchy_residual",
    "density_gradient_residual",
    "DensityResiduals",
    "backward_forward_error",
    "interior_grid_seeds",
    "wall_seeds",
]

DEGENERATE_DET = 1e-8


# ---------------------------------------------------------------------------
# Off-grid evaluation
# ---------------------------------------------------------------------------


class _FieldEvaluator:
    """Direct trigonometric summation at arbitrary points.

    With ``block=True`` the sum runs over the dealias block only, which is
    exact whenever the coefficients vanish outside it (true for all solver
    states and RK stage fields).  With ``half=True`` the coefficients are
    in the solver's internal ky >= 0 layout; the missing mirror modes are
    folded in through column weights and the real part.
    """

    def __init__(self, grid: Grid, block: bool = True, half: bool = False):
        self.grid = grid
        nyh = grid.ny // 2 + 1
        ky_all = np.arange(nyh, dtype=float) if half else grid.ky
        if half:
            wy = np.full(nyh, 2.0)
            wy[0] = 1.0
            wy[-1] = 1.0
        else:
            wy = np.ones(grid.ny)
        if block:
            ix = np.where(np.abs(grid.kx) <= grid.nx / 3.0)[0]
            iy = np.where(ky_all <= grid.ny / 3.0)[0] if half else grid.dealias_block[1]
            iz = grid.dealias_block[2]
        else:
            ix = np.arange(grid.nx)
            iy = np.arange(len(ky_all))
            iz = np.arange(grid.nz + 1)
        self.ix, self.iy, self.iz = ix, iy, iz
        self.kx = grid.kx[ix]
        self.ky = ky_all[iy]
        self.kz = grid.kz[iz]
        self.wy = wy[iy]

    def gather(self, coeffs: np.ndarray) -> np.ndarray:
        """Restrict a coefficient array (or stack) to the block."""
        mesh = np.ix_(self.ix, self.iy, self.iz)
        return coeffs[(...,) + mesh]

    def basis(self, points: np.ndarray):
        """Phase and wall-normal basis factors at the given points."""
        pts = np.asarray(points, dtype=float)
        ex = np.exp(1j * pts[:, 0, None] * self.kx)          # (P, BX)
        ey = np.exp(1j * pts[:, 1, None] * self.ky) * self.wy  # (P, BY)
        arg = pts[:, 2, None] * self.kz                      # (P, BZ)
        zc = cospi(arg)
        zs = sinpi(arg)
        return ex, ey, zc, zs

    def values_and_gradients(
        self, cblock: np.ndarray, parities: Sequence[Parity], points: np.ndarray
    ):
        """Values (P, C) and gradients (P, C, 3) of a block-coefficient stack."""
        pts = np.asarray(points, dtype=float)
        ex, ey, zc, zs = self.basis(pts)
        kzpi = np.pi * self.kz
        vals = np.empty((pts.shape[0], cblock.shape[0]))
        grads = np.empty((pts.shape[0], cblock.shape[0], 3))
        flat = cblock.reshape(cblock.shape[0], -1, cblock.shape[-1])  # (C, BX*BY, BZ)
        for i, parity in enumerate(parities):
            if parity is Parity.EVEN:
                z0, z1 = zc, -kzpi * zs
            else:
                z0, z1 = zs, kzpi * zc
            t0 = (flat[i] @ z0.T).reshape(len(self.kx), len(self.ky), -1)  # (BX,BY,P)
            t1 = (flat[i] @ z1.T).reshape(len(self.kx), len(self.ky), -1)
            s0 = np.einsum("xyp,py->xp", t0, ey)
            sy = np.einsum("xyp,py->xp", t0, ey * (1j * self.ky))
            sz = np.einsum("xyp,py->xp", t1, ey)
            vals[:, i] = np.einsum("xp,px->p", s0, ex).real
            grads[:, i, 0] = np.einsum("xp,px->p", s0, ex * (1j * self.kx)).real
            grads[:, i, 1] = np.einsum("xp,px->p", sy, ex).real
            grads[:, i, 2] = np.einsum("xp,px->p", sz, ex).real
        return vals, grads

    def values(self, cblock: np.ndarray, parities: Sequence[Parity], points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        ex, ey, zc, zs = self.basis(pts)
        vals = np.empty((pts.shape[0], cblock.shape[0]))
        flat = cblock.reshape(cblock.shape[0], -1, cblock.shape[-1])
        for i, parity in enumerate(parities):
            z0 = zc if parity is Parity.EVEN else zs
            t0 = (flat[i] @ z0.T).reshape(len(self.kx), len(self.ky), -1)
            s0 = np.einsum("xyp,py->xp", t0, ey)
            vals[:, i] = np.einsum("xp,px->p", s0, ex).real
        return vals


def _check_points(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    z = pts[:, 2]
    if np.any(z < -tol) or np.any(z > 1.0 + tol):
        bad = z[(z < -tol) | (z > 1.0 + tol)][0]
        raise ValueError(f"point with z = {bad!r} outside the channel [0, 1]")
    out = pts.copy()
    out[:, 2] = np.clip(z, 0.0, 1.0)
    return out


def evaluate_scalar(f: SpectralScalar, points: np.ndarray) -> np.ndarray:
    """Exact pointwise evaluation of a band-limited scalar field."""
    pts = _check_points(points)
    ev = _FieldEvaluator(f.grid, block=False)
    return ev.values(f.coeffs[None], (f.parity,), pts)[:, 0]


def evaluate_scalar_gradient(f: SpectralScalar, points: np.ndarray) -> np.ndarray:
    pts = _check_points(points)
    ev = _FieldEvaluator(f.grid, block=False)
    _, g = ev.values_and_gradients(f.coeffs[None], (f.parity,), pts)
    return g[:, 0, :]


def eval_velocity_at(v: VelocityState, points: np.ndarray) -> np.ndarray:
    """Velocity vectors at arbitrary channel points, shape (n, 3).

    x and y wrap periodically; z must lie in [0, 1] up to 1e-12.
    """
    pts = _check_points(points)
    ev = _FieldEvaluator(v.grid, block=False)
    return ev.values(v.stack(), VELOCITY_PARITIES, pts)


def _eval_vorticity(w: VorticityState, points: np.ndarray) -> np.ndarray:
    ev = _FieldEvaluator(w.grid, block=False)
    parities = (Parity.ODD, Parity.ODD, Parity.EVEN)
    return ev.values(w.stack(), parities, np.atleast_2d(points))


# ---------------------------------------------------------------------------
# Particles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticleSet:
    """Lagrangian markers with positions and flow-map gradients."""

    alphas: np.ndarray      # (P, 3) seed positions
    positions: np.ndarray   # (P, 3) current X(alpha, t)
    grads: np.ndarray       # (P, 3, 3) dX_i / dalpha_j
    time: float

    def __post_init__(self) -> None:
        if self.alphas.ndim != 2 or self.alphas.shape[1] != 3:
            raise ValueError("alphas must have shape (P, 3)")
        if self.positions.shape != self.alphas.shape:
            raise ValueError("positions shape mismatch")
        if self.grads.shape != (len(self.alphas), 3, 3):
            raise ValueError("grads shape mismatch")

    @classmethod
    def seed(cls, alphas: np.ndarray) -> "ParticleSet":
        alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
        eye = np.broadcast_to(np.eye(3), (len(alphas), 3, 3)).copy()
        return cls(alphas=alphas, positions=alphas.copy(), grads=eye, time=0.0)

    def __len__(self) -> int:
        return len(self.alphas)

    def det_grads(self) -> np.ndarray:
        return np.linalg.det(self.grads)

    def wall_distance(self) -> np.ndarray:
        """Distance of each particle's z to the nearest wall value in {0, 1}."""
        z = self.positions[:, 2]
        return np.minimum(np.abs(z), np.abs(z - 1.0))

    def wall_seeded_mask(self) -> np.ndarray:
        return (self.alphas[:, 2] == 0.0) | (self.alphas[:, 2] == 1.0)


def interior_grid_seeds(n: int, margin: float = 0.25) -> np.ndarray:
    """n^3 seeds on a uniform lattice inside [0,2pi)^2 x [margin, 1-margin]."""
    xs = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    zs = np.linspace(margin, 1.0 - margin, n)
    pts = np.stack(np.meshgrid(xs, xs, zs, indexing="ij"), axis=-1)
    return pts.reshape(-1, 3)


def wall_seeds(n: int) -> np.ndarray:
    """n^2 seeds on each wall (z = 0 and z = 1)."""
    xs = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    flat = np.stack([X.ravel(), Y.ravel()], axis=-1)
    bottom = np.concatenate([flat, np.zeros((len(flat), 1))], axis=1)
    top = np.concatenate([flat, np.ones((len(flat), 1))], axis=1)
    return np.concatenate([bottom, top])


# ---------------------------------------------------------------------------
# Velocity samplers
# ---------------------------------------------------------------------------


class VelocitySampler(Protocol):
    """Evaluates u and grad u at arbitrary points and RK stage times."""

    def sample(self, points: np.ndarray, t: float, stage: int):
        """Return (velocities (P, 3), gradients (P, 3, 3))."""
        ...


class StateSampler:
    """Sampler for a frozen (time-independent) velocity state."""

    def __init__(self, state: VelocityState):
        self._ev = _FieldEvaluator(state.grid, block=False)
        self._stack = state.stack()

    def sample(self, points, t, stage):
        return self._ev.values_and_gradients(self._stack, VELOCITY_PARITIES, points)


class AnalyticSampler:
    """Sampler built from closed-form velocity and gradient callables."""

    def __init__(
        self,
        velocity: Callable[[np.ndarray, float], np.ndarray],
        gradient: Callable[[np.ndarray, float], np.ndarray],
        t_max: float = np.inf,
    ):
        self.velocity = velocity
        self.gradient = gradient
        self.t_max = t_max

    def sample(self, points, t, stage):
        if t > self.t_max + 1e-12 or t < -1e-12:
            raise ValueError(f"sampler time range exceeded: t = {t}")
        return self.velocity(points, t), self.gradient(points, t)


class _StageSampler:
    """Serves the four RK stage fields of one fluid step."""

    def __init__(self, ev: _FieldEvaluator, stage_blocks, t: float, dt: float):
        self.ev = ev
        self.blocks = stage_blocks
        self.times = (t, t + 0.5 * dt, t + 0.5 * dt, t + dt)

    def sample(self, points, t, stage):
        if abs(t - self.times[stage]) > 1e-9:
            raise ValueError("stage time does not match the fluid step")
        return self.ev.values_and_gradients(
            self.blocks[stage], VELOCITY_PARITIES, points
        )


# ---------------------------------------------------------------------------
# Advection
# ---------------------------------------------------------------------------


def advect(particles: ParticleSet, sampler: VelocitySampler, dt: float) -> ParticleSet:
    """One RK4 step of the path-line and variational equations."""
    t = particles.time
    x, g = particles.positions, particles.grads

    u1, j1 = sampler.sample(x, t, 0)
    k1x, k1g = u1, np.einsum("pij,pjk->pik", j1, g)
    u2, j2 = sampler.sample(x + 0.5 * dt * k1x, t + 0.5 * dt, 1)
    k2x, k2g = u2, np.einsum("pij,pjk->pik", j2, g + 0.5 * dt * k1g)
    u3, j3 = sampler.sample(x + 0.5 * dt * k2x, t + 0.5 * dt, 2)
    k3x, k3g = u3, np.einsum("pij,pjk->pik", j3, g + 0.5 * dt * k2g)
    u4, j4 = sampler.sample(x + dt * k3x, t + dt, 3)
    k4x, k4g = u4, np.einsum("pij,pjk->pik", j4, g + dt * k3g)

    new_x = x + dt / 6.0 * (k1x + 2.0 * (k2x + k3x) + k4x)
    new_g = g + dt / 6.0 * (k1g + 2.0 * (k2g + k3g) + k4g)
    return ParticleSet(particles.alphas, new_x, new_g, t + dt)


@dataclass(frozen=True)
class TransportResult:
    """Outcome of a coupled fluid + particle run."""

    trajectory: Trajectory
    particles: ParticleSet
    force_curl_integral: Optional[np.ndarray]  # (P, 3) path integral of curl(-rho e3)


def transport(
    initial,
    config: SolverConfig,
    seeds: np.ndarray,
    *,
    store_fields: bool = True,
    track_buoyancy_torque: bool = False,
) -> TransportResult:
    """Integrate the fluid and co-advect particles with the RK stage fields.

    For Boussinesq runs with ``track_buoyancy_torque=True`` the path
    integral of curl(-rho e3) along each particle history is accumulated
    with the same RK4 stage quadrature (the forced transport formula's
    source term).
    """
    grid = config.grid
    # stage stacks arrive in the solver's half-spectrum layout
    ev = _FieldEvaluator(grid, block=True, half=True)
    particles = ParticleSet.seed(seeds)
    is_boussinesq = isinstance(initial, BoussinesqState)
    if track_buoyancy_torque and not is_boussinesq:
        raise ValueError("buoyancy torque tracking requires a Boussinesq run")
    force_int = np.zeros((len(particles), 3)) if track_buoyancy_torque else None

    box: dict = {"particles": particles}

    def torque_at(block4, pts):
        # curl(-rho e3) = (-d rho/dy, d rho/dx, 0)
        rho = block4[3:4]
        _, g = ev.values_and_gradients(rho, (Parity.ODD,), pts)
        out = np.zeros((len(pts), 3))
        out[:, 0] = -g[:, 0, 1]
        out[:, 1] = g[:, 0, 0]
        return out

    def hook(t, dt, stages):
        nonlocal force_int
        blocks = [ev.gather(s) for s in stages]
        vel_blocks = [b[:3] for b in blocks]
        sampler = _StageSampler(ev, vel_blocks, t, dt)
        p = box["particles"]
        if force_int is not None:
            # stage positions mirror those used inside advect
            x = p.positions
            u1, _ = sampler.sample(x, t, 0)
            x2 = x + 0.5 * dt * u1
            u2, _ = sampler.sample(x2, t + 0.5 * dt, 1)
            x3 = x + 0.5 * dt * u2
            u3, _ = sampler.sample(x3, t + 0.5 * dt, 2)
            x4 = x + dt * u3
            g1 = torque_at(blocks[0], x)
            g2 = torque_at(blocks[1], x2)
            g3 = torque_at(blocks[2], x3)
            g4 = torque_at(blocks[3], x4)
            force_int += dt / 6.0 * (g1 + 2.0 * (g2 + g3) + g4)
        box["particles"] = advect(p, sampler, dt)

    traj = integrate(initial, config, store_fields=store_fields, stage_hook=hook)
    return TransportResult(traj, box["particles"], force_int)


# ---------------------------------------------------------------------------
# Transport-formula residuals
# ---------------------------------------------------------------------------


def cauchy_residual(
    particles: ParticleSet, w_now: VorticityState, w0: VorticityState
) -> np.ndarray:
    """Per-particle norm of  w(X(a,t), t) - gradX(a,t) . w(a, 0)."""
    w_at_x = _eval_vorticity(w_now, particles.positions)
    w_at_a = _eval_vorticity(w0, particles.alphas)
    stretched = np.einsum("pij,pj->pi", particles.grads, w_at_a)
    return np.linalg.norm(w_at_x - stretched, axis=1)


def forced_cauchy_residual(
    particles: ParticleSet,
    w_now: VorticityState,
    w0: VorticityState,
    force_curl_integral: np.ndarray,
) -> np.ndarray:
    """Residual of the forced transport formula
    w(X, t) = gradX . w0(a) + int_0^t curl f(X(a, s), s) ds.

    The path integral must have been accumulated along the same run (see
    ``transport``).  Reported, not asserted: whether the source term needs
    a stretching factor is left open, so magnitudes are published as-is.
    """
    w_at_x = _eval_vorticity(w_now, particles.positions)
    w_at_a = _eval_vorticity(w0, particles.alphas)
    stretched = np.einsum("pij,pj->pi", particles.grads, w_at_a)
    return np.linalg.norm(w_at_x - stretched - force_curl_integral, axis=1)


@dataclass(frozen=True)
class DensityResiduals:
    """Per-particle density-transport and gradient-formula residuals."""

    value: np.ndarray      # |rho(X, t) - rho0(a)|
    gradient: np.ndarray   # ||grad rho(X, t) . gradX - grad rho0(a)||
    degenerate: np.ndarray  # det(gradX) below threshold: residuals unreliable


def density_gradient_residual(
    particles: ParticleSet, rho_now: SpectralScalar, rho0: SpectralScalar
) -> DensityResiduals:
    """Residuals of rho(X(a,t), t) = rho0(a) and of the transported
    gradient identity grad rho(X, t) . gradX(a, t) = grad rho0(a)."""
    ev = _FieldEvaluator(rho_now.grid, block=False)
    vals, grads = ev.values_and_gradients(
        rho_now.coeffs[None], (Parity.ODD,), particles.positions
    )
    vals0, grads0 = ev.values_and_gradients(
        rho0.coeffs[None], (Parity.ODD,), particles.alphas
    )
    value_res = np.abs(vals[:, 0] - vals0[:, 0])
    carried = np.einsum("pj,pjk->pk", grads[:, 0, :], particles.grads)
    grad_res = np.linalg.norm(carried - grads0[:, 0, :], axis=1)
    degenerate = np.abs(particles.det_grads()) < DEGENERATE_DET
    return DensityResiduals(value_res, grad_res, degenerate)


def backward_forward_error(
    initial: VelocityState, config: SolverConfig, seeds: np.ndarray
) -> float:
    """Advect to T, then integrate the reversed flow back; returns the
    maximum distance from the recovered positions to the seeds.

    Uses the time-reversal symmetry of the inviscid system (viscous runs
    are not reversible), so nu must be zero.
    """
    if config.nu != 0.0:
        raise ValueError("backward-forward consistency requires nu = 0")
    fwd = transport(initial, config, seeds, store_fields=True)
    final = fwd.trajectory.final_state
    back = transport(-final, config, fwd.particles.positions, store_fields=False)
    dx = back.particles.positions - np.asarray(seeds, dtype=float)
    # x and y are periodic; compare modulo the box
    dx[:, 0] = (dx[:, 0] + np.pi) % (2 * np.pi) - np.pi
    dx[:, 1] = (dx[:, 1] + np.pi) % (2 * np.pi) - np.pi
    return float(np.max(np.linalg.norm(dx, axis=1)))
