"""Pseudospectral slip-channel laboratory for vanishing-viscosity studies."""

from .grid import Grid, Parity
from .spectral import (
    SpectralScalar,
    dealias,
    derivative,
    leray_project,
    set_fft_workers,
    transform_forward,
    transform_inverse,
)
from .fields import (
    BoussinesqState,
    VelocityState,
    VorticityState,
    boussinesq_balance_residual,
    curl,
    energy_balance_residual,
    h1_seminorm,
    ibp_residual,
    l2_norm,
)
from .dynamics import (
    BlowUpError,
    SolverConfig,
    Trajectory,
    boussinesq_rhs,
    exact_shear_solution,
    integrate,
    nse_rhs,
    step,
)
from .harness import (
    DataClass,
    Perturbation,
    RateFit,
    boussinesq_sweep,
    epsilon_sweep,
    fit_rate,
    gronwall_budget,
    make_initial_data,
    run_sweep,
)
from .lagrangian import (
    ParticleSet,
    advect,
    cauchy_residual,
    density_gradient_residual,
    eval_velocity_at,
    transport,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "Parity",
    "SpectralScalar",
    "VelocityState",
    "VorticityState",
    "BoussinesqState",
    "transform_forward",
    "transform_inverse",
    "derivative",
    "dealias",
    "leray_project",
    "set_fft_workers",
    "curl",
    "l2_norm",
    "h1_seminorm",
    "ibp_residual",
    "energy_balance_residual",
    "boussinesq_balance_residual",
    "SolverConfig",
    "Trajectory",
    "BlowUpError",
    "nse_rhs",
    "boussinesq_rhs",
    "step",
    "integrate",
    "exact_shear_solution",
    "DataClass",
    "Perturbation",
    "RateFit",
    "make_initial_data",
    "run_sweep",
    "boussinesq_sweep",
    "epsilon_sweep",
    "fit_rate",
    "gronwall_budget",
    "ParticleSet",
    "advect",
    "transport",
    "eval_velocity_at",
    "cauchy_residual",
    "density_gradient_residual",
    "__version__",
]
