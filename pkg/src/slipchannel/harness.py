"""Initial-data classes, viscosity sweeps, rate fits and difference budgets.

Data classes encode the boundary-compatibility hypotheses of the
convergence theory structurally:

* poloidal velocities u = curl curl (0, 0, S e3) with odd S have vorticity
  (-lap dS/dy, lap dS/dx, 0) whose components are all odd in z, so the full
  vorticity vector vanishes *exactly* on both walls (well-prepared data);
* a toroidal addition curl(T e3) with even T contributes normal vorticity
  -lap_H T that is generically nonzero at the walls (the class that
  deliberately violates the wall-vorticity hypothesis while still being a
  legal slip-channel state);
* density profiles are combined sine pairs sin(k1 pi z) - (k1/k2) sin(k2 pi z)
  with k1 = k2 (mod 2), whose z-derivative vanishes exactly at both walls.

Data perturbations u0(nu) = u0 + nu^r w use unit-norm patterns orthogonal
to the reference, so the prepared-data distance is exactly nu^r.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .grid import Grid, LX, LY, Parity
from .fields import (
    BoussinesqState,
    VelocityState,
    cumulative_integral,
    curl,
    h1_seminorm,
    l2_norm,
    normal_vorticity_trace,
    wall_trace,
)
from .dynamics import BlowUpError, SolverConfig, Trajectory, integrate
from .spectral import (
    SpectralScalar,
    derivative,
    inner,
    laplacian,
    single_mode,
    transform_inverse,
    zeros,
)

__all__ = [
    "DataClass",
    "Perturbation",
    "DataClassError",
    "SweepRunError",
    "SweepRow",
    "SweepResult",
    "EpsilonRow",
    "EpsilonSweepResult",
    "RateFit",
    "GronwallBudget",
    "make_initial_data",
    "reference_data",
    "run_sweep",
    "boussinesq_sweep",
    "epsilon_sweep",
    "fit_rate",
    "gronwall_budget",
    "DATA_CLASS_KINDS",
]

DATA_CLASS_KINDS = (
    "shear",
    "interior-blob",
    "generic-boundary-vorticity",
    "boussinesq-blob",
)

WALL_TRACE_TOL = 1e-10
GENERIC_TRACE_MIN = 0.1


class DataClassError(ValueError):
    """A data-class invariant failed after construction."""


class SweepRunError(RuntimeError):
    """A sweep member run aborted."""

    def __init__(self, value: float, cause: BlowUpError, label: str = "nu"):
        super().__init__(f"run at {label} = {value:.6g} aborted: {cause}")
        self.nu = value
        self.cause = cause


@dataclass(frozen=True)
class Perturbation:
    """Data perturbation u0(nu) = u0 + nu^exponent * pattern."""

    exponent: float
    pattern: int = 1

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError("perturbation exponent must be >= 0")


@dataclass(frozen=True)
class DataClass:
    """One of the hypothesis classes for initial data."""

    kind: str
    amplitude: float = 0.5
    rho_amplitude: float = 0.25
    seed: int = 0
    perturbation: Optional[Perturbation] = None

    def __post_init__(self) -> None:
        if self.kind not in DATA_CLASS_KINDS:
            raise ValueError(f"unknown data class kind {self.kind!r}")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")

    @property
    def is_boussinesq(self) -> bool:
        return self.kind == "boussinesq-blob"


# ---------------------------------------------------------------------------
# Field construction
# ---------------------------------------------------------------------------

# mode menus are deliberately low-wavenumber: the vanishing-viscosity error
# of a mode saturates like (1 - exp(-nu k^2 T))^2, so high-k content pushes
# the sweep out of the asymptotic power-law regime at the default nu grid
_BLOB_MODES = ((1, 0), (0, 1), (1, 1), (2, 1))
_PATTERN_MODES = ((2, 2), (0, 2), (2, 1), (1, 2), (2, 0), (1, 0))
_RHO_PROFILES = ((1, 3), (2, 4))


def _random_modal_scalar(grid, parity, rng, modes, kz_choices) -> SpectralScalar:
    out = zeros(grid, parity)
    for kx, ky in modes:
        kz = int(rng.choice(kz_choices))
        amp = float(rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0]))
        phase = float(rng.uniform(0.0, 2 * np.pi))
        out = out + single_mode(grid, parity, kx, ky, kz, amp, phase)
    return out


def _poloidal(grid: Grid, s: SpectralScalar) -> VelocityState:
    """u = curl curl (0, 0, S): divergence-free with exactly wall-free vorticity."""
    dz = derivative(s, "z")
    u1 = derivative(dz, "x")
    u2 = derivative(dz, "y")
    minus_lap_h = SpectralScalar(
        grid,
        s.parity,
        s.coeffs
        * (grid.kx[:, None, None] ** 2 + grid.ky[None, :, None] ** 2),
    )
    return VelocityState(u1, u2, minus_lap_h)


def _toroidal(grid: Grid, t: SpectralScalar) -> VelocityState:
    """u = curl (0, 0, T): horizontal flow with normal vorticity -lap_H T."""
    return VelocityState(derivative(t, "y"), -derivative(t, "x"), zeros(grid, Parity.ODD))


def _wall_flat_density(grid: Grid, rng: np.random.Generator) -> SpectralScalar:
    """Odd scalar whose full gradient vanishes exactly on both walls."""
    c = np.zeros(grid.shape, dtype=np.complex128)
    for kx, ky in _BLOB_MODES[:4]:
        k1, k2 = _RHO_PROFILES[int(rng.integers(len(_RHO_PROFILES)))]
        amp = float(rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0]))
        phase = float(rng.uniform(0.0, 2 * np.pi))
        half = 0.5 * amp * np.exp(1j * phase)
        for kzi, w in ((k1, 1.0), (k2, -k1 / k2)):
            c[kx % grid.nx, ky % grid.ny, kzi] += half * w
            c[(-kx) % grid.nx, (-ky) % grid.ny, kzi] += np.conj(half) * w
    return SpectralScalar(grid, Parity.ODD, c)


def _normalize_max(v: VelocityState, amplitude: float) -> VelocityState:
    speed = v.max_speed()
    if speed == 0.0:
        raise DataClassError("degenerate construction: zero velocity field")
    return v * (amplitude / speed)


def _wall_l2_norm(grid: Grid, bottom: np.ndarray, top: np.ndarray) -> float:
    cell = (LX / grid.nx) * (LY / grid.ny)
    return float(np.sqrt(cell * (np.sum(bottom**2) + np.sum(top**2))))


def _base_velocity(dc: DataClass, grid: Grid) -> VelocityState:
    rng = np.random.default_rng((dc.seed, 17))
    if dc.kind == "shear":
        return VelocityState(
            single_mode(grid, Parity.EVEN, 0, 0, 1, dc.amplitude),
            zeros(grid, Parity.EVEN),
            zeros(grid, Parity.ODD),
        )
    s = _random_modal_scalar(grid, Parity.ODD, rng, _BLOB_MODES, (1,))
    v = _poloidal(grid, s)
    if dc.kind == "generic-boundary-vorticity":
        t = _random_modal_scalar(grid, Parity.EVEN, rng, _BLOB_MODES[:3], (0, 1))
        v = v + _toroidal(grid, t)
    return _normalize_max(v, dc.amplitude)


def _base_density(dc: DataClass, grid: Grid) -> SpectralScalar:
    rng = np.random.default_rng((dc.seed, 23))
    rho = _wall_flat_density(grid, rng)
    peak = float(np.max(np.abs(transform_inverse(rho))))
    if peak == 0.0:
        raise DataClassError("degenerate construction: zero density field")
    return rho * (dc.rho_amplitude / peak)


def _orthonormal_against(w, ref):
    ref_sq = l2_norm(ref) ** 2
    if ref_sq > 0:
        if isinstance(w, SpectralScalar):
            proj = inner(w, ref) / ref_sq
        else:
            proj = sum(inner(a, b) for a, b in zip(w.components(), ref.components())) / ref_sq
        w = w - proj * ref
    norm = l2_norm(w)
    if norm < 1e-12:
        raise DataClassError("perturbation pattern degenerate after orthogonalization")
    return w * (1.0 / norm)


def _velocity_pattern(dc: DataClass, grid: Grid, ref: VelocityState) -> VelocityState:
    pid = dc.perturbation.pattern if dc.perturbation else 1
    rng = np.random.default_rng((dc.seed, 1000 + pid))
    modes = tuple(_PATTERN_MODES[(pid + i) % len(_PATTERN_MODES)] for i in range(4))
    s = _random_modal_scalar(grid, Parity.ODD, rng, modes, (1, 2))
    return _orthonormal_against(_poloidal(grid, s), ref)


def _density_pattern(dc: DataClass, grid: Grid, ref: SpectralScalar) -> SpectralScalar:
    pid = dc.perturbation.pattern if dc.perturbation else 1
    rng = np.random.default_rng((dc.seed, 2000 + pid))
    return _orthonormal_against(_wall_flat_density(grid, rng), ref)


def _verify_invariants(dc: DataClass, state) -> None:
    vel = state.vel if isinstance(state, BoussinesqState) else state
    div = vel.divergence_max()
    if div > 1e-11:
        raise DataClassError(f"divergence-free invariant failed: max |div| = {div:.3e}")
    w = curl(vel)
    tangential = max(
        float(np.max(np.abs(t))) for t in wall_trace(w.w1) + wall_trace(w.w2)
    )
    if tangential > WALL_TRACE_TOL:
        raise DataClassError(
            f"tangential wall vorticity invariant failed: max = {tangential:.3e}"
        )
    bottom, top = normal_vorticity_trace(w)
    if dc.kind in ("shear", "interior-blob", "boussinesq-blob"):
        worst = float(max(np.max(np.abs(bottom)), np.max(np.abs(top))))
        if worst > WALL_TRACE_TOL:
            raise DataClassError(
                f"wall vorticity invariant failed for {dc.kind}: max |w3| = {worst:.3e}"
            )
    else:
        norm = _wall_l2_norm(vel.grid, bottom, top)
        if norm < GENERIC_TRACE_MIN:
            raise DataClassError(
                f"generic class requires wall vorticity >= {GENERIC_TRACE_MIN}, got {norm:.3e}"
            )
    if isinstance(state, BoussinesqState):
        for axis in ("x", "y", "z"):
            b, t = wall_trace(derivative(state.rho, axis))
            worst = float(max(np.max(np.abs(b)), np.max(np.abs(t))))
            if worst > WALL_TRACE_TOL:
                raise DataClassError(
                    f"wall density-gradient invariant failed (d/d{axis}): {worst:.3e}"
                )


def reference_data(dc: DataClass, grid: Grid):
    """The inviscid-limit reference datum of the class (shared across nu)."""
    vel = _base_velocity(dc, grid)
    state = BoussinesqState(vel, _base_density(dc, grid)) if dc.is_boussinesq else vel
    _verify_invariants(dc, state)
    return state


def make_initial_data(dc: DataClass, nu: float, grid: Grid):
    """Reference and viscous initial states.

    With a perturbation (r, pattern), the viscous datum differs from the
    reference by exactly nu^r in L2 (unit-norm pattern, orthogonal to the
    reference and drawn from the same compatibility class).
    """
    ref = reference_data(dc, grid)
    if dc.perturbation is None or nu == 0.0:
        return ref, ref
    eps = nu**dc.perturbation.exponent
    if dc.is_boussinesq:
        vp = _velocity_pattern(dc, grid, ref.vel)
        rp = _density_pattern(dc, grid, ref.rho)
        viscous = BoussinesqState(ref.vel + eps * vp, ref.rho + rp * eps)
    else:
        vp = _velocity_pattern(dc, grid, ref)
        viscous = ref + eps * vp
    _verify_invariants(dc, viscous)
    return ref, viscous


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log(value) against log(nu)."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rate(values: Sequence[tuple[float, float]]) -> RateFit:
    """Fit value ~ C * nu^slope by least squares in log-log coordinates."""
    if len(values) < 4:
        raise ValueError("rate fit requires at least 4 points")
    nus = np.array([v[0] for v in values], dtype=float)
    ys = np.array([v[1] for v in values], dtype=float)
    if np.any(nus <= 0) or np.any(ys <= 0):
        raise ValueError("rate fit requires positive nu and positive values")
    lx, ly = np.log(nus), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r_sq = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), r_sq, len(values))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    nu: float
    sup_err2: float
    grad_err2_int: float
    rho_err2: Optional[float] = None


@dataclass(frozen=True)
class SweepResult:
    data_class: DataClass
    rows: tuple[SweepRow, ...]
    run_summaries: tuple[dict, ...]

    def __post_init__(self) -> None:
        nus = [r.nu for r in self.rows]
        if any(b >= a for a, b in zip(nus, nus[1:])):
            raise ValueError("sweep rows must have strictly decreasing nu")

    def values(self, field: str) -> list[tuple[float, float]]:
        return [(r.nu, getattr(r, field)) for r in self.rows]

    def has_exact_coincidence(self, field: str = "sup_err2") -> bool:
        return any(getattr(r, field) == 0.0 for r in self.rows)


def _validate_nus(nus: Sequence[float]) -> list[float]:
    nus = [float(v) for v in nus]
    if len(nus) < 4:
        raise ValueError("sweeps require at least 4 viscosities")
    if any(v <= 0 for v in nus):
        raise ValueError("viscosities must be positive")
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ValueError("viscosities must be strictly decreasing")
    if nus[0] / nus[-1] < 4.0:
        warnings.warn(
            "viscosity grid spans less than a factor 4; rate fits will be fragile",
            RuntimeWarning,
            stacklevel=3,
        )
    return nus


def _resolution_advisories(config: SolverConfig, nus: Sequence[float]) -> None:
    n_snaps = config.n_steps // config.snapshot_interval + 1
    if n_snaps < 100:
        warnings.warn(
            f"sup over t sampled on only {n_snaps} snapshots (< 100)",
            RuntimeWarning,
            stacklevel=3,
        )
    floor = (np.pi / config.grid.nz) ** 2
    small = [v for v in nus if v < floor]
    if small:
        warnings.warn(
            f"nu values {small} below the resolution heuristic (pi/nz)^2 = {floor:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )


class _ErrorObserver:
    """Streams per-snapshot errors of a run against a stored reference."""

    def __init__(self, reference: Trajectory, boussinesq: bool):
        self.ref_states = reference.states
        self.boussinesq = boussinesq
        self.vel_err2: list[float] = []
        self.grad_err2: list[float] = []
        self.rho_err2: list[float] = []

    def __call__(self, index: int, time: float, state) -> None:
        ref = self.ref_states[index]
        if self.boussinesq:
            dv = state.vel - ref.vel
            self.rho_err2.append(l2_norm(state.rho - ref.rho) ** 2)
        else:
            dv = state - ref
        self.vel_err2.append(l2_norm(dv) ** 2)
        self.grad_err2.append(h1_seminorm(dv) ** 2)


def _sweep(dc: DataClass, nus, config, boussinesq: bool) -> SweepResult:
    nus = _validate_nus(nus)
    _resolution_advisories(config, nus)
    grid = config.grid

    ref_config = replace(config, nu=0.0, epsilon=0.0)
    ref0 = reference_data(dc, grid)
    reference = integrate(ref0, ref_config, store_fields=True)
    snap_dt = config.dt * config.snapshot_interval

    rows: list[SweepRow] = []
    summaries: list[dict] = []
    for nu in nus:
        _, viscous0 = make_initial_data(dc, nu, grid)
        run_config = replace(config, nu=nu, epsilon=0.0)
        obs = _ErrorObserver(reference, boussinesq)
        try:
            traj = integrate(viscous0, run_config, store_fields=False, on_snapshot=obs)
        except BlowUpError as exc:
            raise SweepRunError(nu, exc) from exc
        vel_err2 = np.array(obs.vel_err2)
        grad_int = float(cumulative_integral(np.array(obs.grad_err2), snap_dt)[-1])
        row = SweepRow(
            nu=nu,
            sup_err2=float(np.max(vel_err2)),
            grad_err2_int=grad_int,
            rho_err2=float(np.max(obs.rho_err2)) if boussinesq else None,
        )
        rows.append(row)
        summaries.append(
            {
                "nu": nu,
                "initial_data_distance": l2_norm(
                    (viscous0.vel - ref0.vel) if boussinesq else (viscous0 - ref0)
                ),
                "viscous_dissipation_integral": float(traj.curl_sq_integral[-1]),
                "snapshots": len(traj.times),
            }
        )
    return SweepResult(dc, tuple(rows), tuple(summaries))


def run_sweep(dc: DataClass, nus: Sequence[float], config: SolverConfig) -> SweepResult:
    """Viscous runs against one shared inviscid reference on the same
    grid and time step; rows carry sup_t ||u_nu - u_ref||^2 and the
    Simpson time integral of ||grad(u_nu - u_ref)||^2."""
    if dc.is_boussinesq:
        raise ValueError("use boussinesq_sweep for the buoyant class")
    return _sweep(dc, nus, config, boussinesq=False)


def boussinesq_sweep(dc: DataClass, nus: Sequence[float], config: SolverConfig) -> SweepResult:
    """Vanishing-viscosity sweep of the buoyant system (no density
    diffusion) against the inviscid buoyant reference."""
    if not dc.is_boussinesq:
        raise ValueError("boussinesq_sweep requires the boussinesq-blob class")
    return _sweep(dc, nus, config, boussinesq=True)


# ---------------------------------------------------------------------------
# Density-diffusion (epsilon) sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpsilonRow:
    epsilon: float
    sup_vel_err2: float
    sup_rho_err2: float
    weighted_dissipation: float  # epsilon * int ||grad rho||^2 dt


@dataclass(frozen=True)
class EpsilonSweepResult:
    nu: float
    initial_energy: float  # (||v0||^2 + ||rho0||^2) / 2
    rows: tuple[EpsilonRow, ...]

    def errors_strictly_decreasing(self) -> bool:
        ok = True
        prev: Optional[EpsilonRow] = None
        for row in self.rows:
            if row.epsilon == 0.0:
                continue
            if prev is not None:
                ok = ok and row.sup_vel_err2 < prev.sup_vel_err2
                ok = ok and row.sup_rho_err2 < prev.sup_rho_err2
            prev = row
        return ok

    def dissipation_bounded(self) -> bool:
        return all(r.weighted_dissipation <= self.initial_energy * (1 + 1e-12)
                   for r in self.rows)


def epsilon_sweep(
    dc: DataClass, nu: float, epsilons: Sequence[float], config: SolverConfig
) -> EpsilonSweepResult:
    """Vanishing density diffusion at fixed nu, against the epsilon = 0 run.

    The weighted dissipation eps * int ||grad rho||^2 is bounded by the
    initial energy for every row (the density variance balance), and the
    errors decrease monotonically as epsilon drops.
    """
    if not dc.is_boussinesq:
        raise ValueError("epsilon_sweep requires the boussinesq-blob class")
    epsilons = [float(e) for e in epsilons]
    if len([e for e in epsilons if e > 0]) < 3:
        raise ValueError("epsilon sweep requires at least 3 positive values")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilon values must be strictly decreasing")
    if nu <= 0:
        raise ValueError("epsilon sweep runs at fixed positive nu")
    _resolution_advisories(config, [nu])

    grid = config.grid
    state0 = reference_data(dc, grid)
    base = replace(config, nu=nu, epsilon=0.0)
    reference = integrate(state0, base, store_fields=True)
    e0 = 0.5 * l2_norm(state0) ** 2

    rows = []
    for eps in epsilons:
        if eps == 0.0:
            rows.append(EpsilonRow(0.0, 0.0, 0.0, 0.0))
            continue
        obs = _ErrorObserver(reference, boussinesq=True)
        try:
            traj = integrate(
                state0, replace(config, nu=nu, epsilon=eps),
                store_fields=False, on_snapshot=obs,
            )
        except BlowUpError as exc:
            raise SweepRunError(eps, exc, label="epsilon") from exc
        rows.append(
            EpsilonRow(
                epsilon=eps,
                sup_vel_err2=float(np.max(obs.vel_err2)),
                sup_rho_err2=float(np.max(obs.rho_err2)),
                weighted_dissipation=float(eps * traj.grad_rho_sq_integral[-1]),
            )
        )
    return EpsilonSweepResult(nu=nu, initial_energy=e0, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Gronwall budget
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GronwallBudget:
    """Measured terms of the viscous-inviscid difference energy identity.

    With u = u_nu - u_ref the semi-discrete identity reads

        d/dt 1/2 ||u||^2 = -nu ||grad u||^2 - nonlinear + interior
                           (+ wall terms, identically zero on flat walls),

    where nonlinear = int (u . grad) u_ref . u dx and
    interior = nu int lap(u_ref) . u dx.  ``residual()`` accumulates the
    identity in time; its maximum is O(dt^4) + quadrature noise.
    """

    times: np.ndarray
    energy_sq: np.ndarray            # ||u(t)||^2
    dissipation: np.ndarray          # nu ||grad u(t)||^2
    nonlinear: np.ndarray            # int (u.grad)u_ref . u dx
    interior: np.ndarray             # nu int lap(u_ref) . u dx
    boundary_vorticity: np.ndarray   # nu int_wall (w_ref x n) . u dS
    boundary_curvature: np.ndarray   # nu int_wall u_nu (grad n)^T u dS (flat: 0)

    def residual(self) -> np.ndarray:
        h = float(self.times[1] - self.times[0])
        drive = self.dissipation + self.nonlinear - self.interior \
            + self.boundary_vorticity + self.boundary_curvature
        return 0.5 * (self.energy_sq - self.energy_sq[0]) + cumulative_integral(drive, h)

    def verify(self, tolerance: float) -> tuple[bool, float]:
        """Measured-terms form of the difference energy inequality:
        ||u(t)||^2 + nu int ||grad u||^2 minus the accumulated signed
        sources must stay within ``tolerance`` of ||u(0)||^2."""
        worst = float(np.max(np.abs(self.residual()))) * 2.0
        return worst <= tolerance, worst


def _advective_work(u_ref: VelocityState, u: VelocityState) -> float:
    """int (u . grad) u_ref . u dx via collocation products."""
    from .spectral import _inverse_stack
    from .fields import VELOCITY_PARITIES

    grid = u.grid
    u_samp = _inverse_stack(u.stack(), VELOCITY_PARITIES, grid)
    total = 0.0
    for i, comp in enumerate(u_ref.components()):
        parts = [derivative(comp, ax) for ax in ("x", "y", "z")]
        stacks = np.stack([p.coeffs for p in parts])
        grad_samp = _inverse_stack(stacks, tuple(p.parity for p in parts), grid)
        conv = (
            u_samp[0] * grad_samp[0] + u_samp[1] * grad_samp[1] + u_samp[2] * grad_samp[2]
        )
        total += grid.integrate_samples(conv * u_samp[i])
    return total


def _wall_vorticity_work(nu: float, w_ref, u: VelocityState) -> float:
    """nu int_wall (w_ref x n) . u dS with n = -e3 (bottom), +e3 (top).

    The tangential trace of w_ref is identically zero by parity, so this
    measures an exact zero; it is computed from the traces regardless.
    """
    grid = u.grid
    cell = (LX / grid.nx) * (LY / grid.ny)
    w1b, w1t = wall_trace(w_ref.w1)
    w2b, w2t = wall_trace(w_ref.w2)
    u1b, u1t = wall_trace(u.u1)
    u2b, u2t = wall_trace(u.u2)
    # w x (-e3) = (-w2, w1, 0);  w x (+e3) = (w2, -w1, 0)
    bottom = np.sum(-w2b * u1b + w1b * u2b)
    top = np.sum(w2t * u1t - w1t * u2t)
    return float(nu * cell * (bottom + top))


def gronwall_budget(
    viscous: Trajectory, reference: Trajectory, nu: float
) -> GronwallBudget:
    """Term-by-term difference budget of a viscous run against its reference."""
    tv, tr = viscous.times, reference.times
    if len(tv) != len(tr) or np.max(np.abs(tv - tr)) > 1e-12:
        raise ValueError("trajectories must share snapshot times")
    if viscous.states is None or reference.states is None:
        raise ValueError("budget requires stored field snapshots")

    energy, diss, nl, interior, bvort, bcurv = [], [], [], [], [], []
    for (_, sv), (_, sr) in zip(viscous.velocity_items(), reference.velocity_items()):
        u = sv - sr
        energy.append(l2_norm(u) ** 2)
        diss.append(nu * h1_seminorm(u) ** 2)
        nl.append(_advective_work(sr, u))
        interior.append(
            nu * sum(inner(laplacian(a), b)
                     for a, b in zip(sr.components(), u.components()))
        )
        bvort.append(_wall_vorticity_work(nu, curl(sr), u))
        # flat walls: grad(n) vanishes identically, so the curvature term
        # is zero by geometry rather than by measurement
        bcurv.append(0.0)
    return GronwallBudget(
        times=tv,
        energy_sq=np.array(energy),
        dissipation=np.array(diss),
        nonlinear=np.array(nl),
        interior=np.array(interior),
        boundary_vorticity=np.array(bvort),
        boundary_curvature=np.array(bcurv),
    )
