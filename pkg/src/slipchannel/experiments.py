"""Experiment execution: from a validated config to artifacts on disk.

Every experiment writes its results as CSV (plus rate-fit JSON where
relevant), a binary final-state snapshot where meaningful, and a
manifest.json recording the config echo, artifact checksums and the
evaluated threshold checks.  Exit status: 0 all checks passed, 2 the run
aborted (blow-up), 3 a check failed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .dynamics import BlowUpError, integrate
from .fields import (
    boundary_vorticity_trace,
    boussinesq_balance_table,
    curl,
    energy_balance_table,
    normal_vorticity_trace,
)
from .harness import (
    DataClassError,
    SweepRunError,
    boussinesq_sweep,
    epsilon_sweep,
    fit_rate,
    gronwall_budget,
    make_initial_data,
    run_sweep,
)
from .lagrangian import (
    _eval_vorticity,
    backward_forward_error,
    cauchy_residual,
    density_gradient_residual,
    forced_cauchy_residual,
    interior_grid_seeds,
    transport,
    wall_seeds,
)
from .manifest import Check, RunManifest, write_csv
from .snapshots import save_state

__all__ = ["dispatch", "DispatchResult"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CHECKS = 3


class DispatchResult:
    def __init__(self, exit_code: int, run_dir: Path, manifest: RunManifest):
        self.exit_code = exit_code
        self.run_dir = run_dir
        self.manifest = manifest


def _threshold_check(
    manifest: RunManifest,
    checks_cfg: dict,
    key: str,
    value: float,
    op: str,
    artifact: Optional[str],
    derive: Optional[str],
    default: Optional[float] = None,
) -> None:
    threshold = checks_cfg.get(key, default)
    if threshold is None:
        return
    manifest.add_check(
        Check(name=key, value=float(value), threshold=float(threshold), op=op,
              artifact=artifact, derive=derive)
    )


def _write_rate_json(run_dir: Path, name: str, values, exact_coincidence: bool):
    path = run_dir / name
    if exact_coincidence:
        payload = {"status": "exact coincidence", "fit": None}
        fit = None
    else:
        fit = fit_rate(values)
        payload = {
            "status": "ok",
            "fit": {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "n_points": fit.n_points,
            },
        }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return fit


# ---------------------------------------------------------------------------
# Experiment bodies
# ---------------------------------------------------------------------------


def _run_single(cfg: ExperimentConfig, run_dir: Path, manifest: RunManifest) -> None:
    _, state0 = make_initial_data(cfg.data, cfg.nu, cfg.grid)
    traj = integrate(state0, cfg.solver_config())
    boussinesq = cfg.data.is_boussinesq

    if boussinesq:
        table = boussinesq_balance_table(traj.items(), cfg.nu, cfg.epsilon)
        columns = ["time", "total_energy", "viscous_integral", "diffusive_integral",
                   "buoyancy_cross_integral", "residual"]
        csv_name = f"{cfg.run_id}_boussinesq_balance.csv"
    else:
        table = energy_balance_table(traj.items(), cfg.nu)
        columns = ["time", "kinetic_energy", "dissipation_integral", "residual"]
        csv_name = f"{cfg.run_id}_energy_balance.csv"
    write_csv(run_dir / csv_name, columns, zip(*(table[c] for c in columns)))
    manifest.add_artifact(run_dir, csv_name)

    state_name = "final_state.scfs"
    save_state(run_dir / state_name, traj.final_state)
    manifest.add_artifact(run_dir, state_name)

    # wall-vorticity trace diagnostic: the tangential trace is the
    # executable witness of the slip condition (identically zero), the
    # normal trace is the quantity that separates the data classes
    trace_rows = []
    cell = 4.0 * np.pi**2 / (cfg.grid.nx * cfg.grid.ny)
    for t, s in traj.velocity_items():
        w = curl(s)
        tr = boundary_vorticity_trace(w)
        bottom, top = normal_vorticity_trace(w)
        normal_l2 = float(np.sqrt(cell * (np.sum(bottom**2) + np.sum(top**2))))
        trace_rows.append((t, tr.max_abs(), normal_l2))
    trace_name = f"{cfg.run_id}_wall_vorticity.csv"
    write_csv(run_dir / trace_name,
              ["time", "tangential_max", "normal_l2"], trace_rows)
    manifest.add_artifact(run_dir, trace_name)
    tangential_worst = max(r[1] for r in trace_rows)
    manifest.summary["tangential_trace_max"] = tangential_worst
    _threshold_check(manifest, cfg.checks, "max_tangential_trace", tangential_worst,
                     "<=", trace_name, "max_abs:tangential_max", default=1e-12)

    residual = float(np.max(np.abs(table["residual"])))
    final = traj.final_state
    div = (final.vel if boussinesq else final).divergence_max()
    manifest.summary.update(
        {
            "balance_residual": residual,
            "final_divergence": div,
            "viscous_dissipation_integral": float(traj.curl_sq_integral[-1]),
            "snapshots": len(traj.times),
        }
    )
    _threshold_check(manifest, cfg.checks, "max_balance_residual", residual, "<=",
                     csv_name, "max_abs:residual", default=1e-8)
    _threshold_check(manifest, cfg.checks, "max_divergence", div, "<=",
                     None, None, default=1e-11)


def _run_sweep_kind(cfg: ExperimentConfig, run_dir: Path, manifest: RunManifest) -> None:
    boussinesq = cfg.kind == "boussinesq-sweep"
    base = cfg.solver_config(nu=0.0, epsilon=0.0)
    sweep = (boussinesq_sweep if boussinesq else run_sweep)(cfg.data, list(cfg.nus), base)

    runs_dir = run_dir / "runs"
    runs_dir.mkdir(exist_ok=True)
    manifest_paths = []
    for i, summary in enumerate(sweep.run_summaries):
        rel = f"runs/nu_{i:02d}.json"
        (run_dir / rel).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        manifest_paths.append(rel)
        manifest.add_artifact(run_dir, rel)

    rows = [
        (
            r.nu,
            r.sup_err2,
            r.grad_err2_int,
            r.rho_err2 if r.rho_err2 is not None else math.nan,
            manifest_paths[i],
        )
        for i, r in enumerate(sweep.rows)
    ]
    write_csv(run_dir / "sweep.csv",
              ["nu", "sup_err2", "grad_err2_int", "rho_err2", "manifest_path"], rows)
    manifest.add_artifact(run_dir, "sweep.csv")

    coincidence = sweep.has_exact_coincidence()
    sup_fit = _write_rate_json(run_dir, "rate_sup.json", sweep.values("sup_err2"),
                               coincidence)
    manifest.add_artifact(run_dir, "rate_sup.json")
    grad_fit = _write_rate_json(run_dir, "rate_grad.json", sweep.values("grad_err2_int"),
                                sweep.has_exact_coincidence("grad_err2_int"))
    manifest.add_artifact(run_dir, "rate_grad.json")

    manifest.summary["exact_coincidence"] = coincidence
    if sup_fit is not None:
        manifest.summary["sup_slope"] = sup_fit.slope
        manifest.summary["sup_r_squared"] = sup_fit.r_squared
        _threshold_check(manifest, cfg.checks, "min_sup_slope", sup_fit.slope, ">=",
                         "sweep.csv", "fit_slope:sup_err2")
        _threshold_check(manifest, cfg.checks, "max_sup_slope", sup_fit.slope, "<=",
                         "sweep.csv", "fit_slope:sup_err2")
    if grad_fit is not None:
        manifest.summary["grad_slope"] = grad_fit.slope
        _threshold_check(manifest, cfg.checks, "min_grad_slope", grad_fit.slope, ">=",
                         "sweep.csv", "fit_slope:grad_err2_int")
    if boussinesq:
        rho_fit = _write_rate_json(run_dir, "rate_rho.json", sweep.values("rho_err2"),
                                   sweep.has_exact_coincidence("rho_err2"))
        manifest.add_artifact(run_dir, "rate_rho.json")
        if rho_fit is not None:
            manifest.summary["rho_slope"] = rho_fit.slope
            _threshold_check(manifest, cfg.checks, "min_rho_slope", rho_fit.slope, ">=",
                             "sweep.csv", "fit_slope:rho_err2")


def _run_epsilon_sweep(cfg: ExperimentConfig, run_dir: Path, manifest: RunManifest) -> None:
    base = cfg.solver_config(nu=0.0, epsilon=0.0)
    result = epsilon_sweep(cfg.data, cfg.eps_nu, list(cfg.epsilons), base)
    rows = [
        (r.epsilon, r.sup_vel_err2, r.sup_rho_err2, r.weighted_dissipation)
        for r in result.rows
    ]
    write_csv(run_dir / "epsilon_sweep.csv",
              ["epsilon", "sup_vel_err2", "sup_rho_err2", "weighted_dissipation"], rows)
    manifest.add_artifact(run_dir, "epsilon_sweep.csv")

    manifest.summary["initial_energy"] = result.initial_energy
    manifest.summary["nu"] = result.nu
    monotone = 1.0 if result.errors_strictly_decreasing() else 0.0
    manifest.add_check(Check(
        name="errors_strictly_decreasing", value=monotone, threshold=1.0, op=">=",
        artifact="epsilon_sweep.csv", derive="monotone_decreasing:sup_vel_err2,sup_rho_err2",
    ))
    worst = max(r.weighted_dissipation for r in result.rows)
    manifest.add_check(Check(
        name="weighted_dissipation_bounded", value=worst,
        threshold=result.initial_energy, op="<=",
        artifact="epsilon_sweep.csv", derive="column_max:weighted_dissipation",
    ))


def _run_lagrangian(cfg: ExperimentConfig, run_dir: Path, manifest: RunManifest) -> None:
    _, state0 = make_initial_data(cfg.data, cfg.nu, cfg.grid)
    boussinesq = cfg.data.is_boussinesq
    seeds = np.concatenate(
        [interior_grid_seeds(cfg.particles_interior), wall_seeds(cfg.particles_wall)]
    )
    result = transport(
        state0, cfg.solver_config(), seeds, track_buoyancy_torque=boussinesq
    )
    particles = result.particles
    final = result.trajectory.final_state

    vel0 = state0.vel if boussinesq else state0
    vel_t = final.vel if boussinesq else final
    w0, w_now = curl(vel0), curl(vel_t)
    cauchy = cauchy_residual(particles, w_now, w0)
    det_error = np.abs(particles.det_grads() - 1.0)
    wall_mask = particles.wall_seeded_mask()
    # persistence diagnostic: |w(X, T)| for wall-seeded particles
    w_at_x = np.linalg.norm(_eval_vorticity(w_now, particles.positions), axis=1)
    persistence = np.where(wall_mask, w_at_x, math.nan)
    wall_drift = np.where(wall_mask, particles.wall_distance(), math.nan)

    header = [
        "particle_id", "alpha_x", "alpha_y", "alpha_z", "time",
        "x", "y", "z", "det_gradX", "det_error", "cauchy_residual",
        "wall_persistence", "wall_drift",
    ]
    dets = particles.det_grads()
    cols = [
        np.arange(len(particles)), particles.alphas[:, 0], particles.alphas[:, 1],
        particles.alphas[:, 2], np.full(len(particles), particles.time),
        particles.positions[:, 0], particles.positions[:, 1], particles.positions[:, 2],
        dets, det_error, cauchy, persistence, wall_drift,
    ]
    summary = {
        "max_cauchy_residual": float(np.max(cauchy)),
        "max_det_error": float(np.max(det_error)),
        "particles": len(particles),
    }
    if wall_mask.any():
        summary["max_wall_persistence"] = float(np.nanmax(persistence))
        summary["max_wall_drift"] = float(np.nanmax(wall_drift))

    if boussinesq:
        dres = density_gradient_residual(particles, final.rho, state0.rho)
        forced = forced_cauchy_residual(particles, w_now, w0, result.force_curl_integral)
        header += ["rho_residual", "rho_grad_residual", "forced_cauchy_residual",
                   "degenerate"]
        cols += [dres.value, dres.gradient, forced, dres.degenerate.astype(int)]
        summary["max_rho_residual"] = float(np.max(dres.value))
        summary["max_rho_grad_residual"] = float(np.max(dres.gradient))
        summary["max_forced_cauchy_residual"] = float(np.max(forced))
        summary["degenerate_particles"] = int(np.sum(dres.degenerate))

    write_csv(run_dir / "particles.csv", header, zip(*cols))
    manifest.add_artifact(run_dir, "particles.csv")
    manifest.summary.update(summary)

    _threshold_check(manifest, cfg.checks, "max_cauchy_residual",
                     summary["max_cauchy_residual"], "<=", "particles.csv",
                     "column_max:cauchy_residual")
    _threshold_check(manifest, cfg.checks, "max_det_error",
                     summary["max_det_error"], "<=", "particles.csv",
                     "column_max:det_error")
    if wall_mask.any():
        _threshold_check(manifest, cfg.checks, "max_wall_persistence",
                         summary["max_wall_persistence"], "<=", "particles.csv",
                         "column_max:wall_persistence")
        _threshold_check(manifest, cfg.checks, "max_wall_drift",
                         summary["max_wall_drift"], "<=", "particles.csv",
                         "column_max:wall_drift")
    if boussinesq:
        _threshold_check(manifest, cfg.checks, "max_rho_residual",
                         summary["max_rho_residual"], "<=", "particles.csv",
                         "column_max:rho_residual")
        _threshold_check(manifest, cfg.checks, "max_rho_grad_residual",
                         summary["max_rho_grad_residual"], "<=", "particles.csv",
                         "column_max:rho_grad_residual")
    if "max_backward_forward" in cfg.checks and not boussinesq and cfg.nu == 0.0:
        bf = backward_forward_error(state0, cfg.solver_config(), seeds)
        manifest.summary["backward_forward_error"] = bf
        _threshold_check(manifest, cfg.checks, "max_backward_forward", bf, "<=",
                         None, None)


def _run_budget(cfg: ExperimentConfig, run_dir: Path, manifest: RunManifest) -> None:
    ref0, visc0 = make_initial_data(cfg.data, cfg.nu, cfg.grid)
    euler = integrate(ref0, cfg.solver_config(nu=0.0, epsilon=0.0))
    viscous = integrate(visc0, cfg.solver_config(epsilon=0.0))
    budget = gronwall_budget(viscous, euler, cfg.nu)
    residual = budget.residual()
    csv_name = f"{cfg.run_id}_gronwall_budget.csv"
    write_csv(
        run_dir / csv_name,
        ["time", "energy_sq", "dissipation", "nonlinear", "interior",
         "boundary_vorticity", "boundary_curvature", "residual"],
        zip(budget.times, budget.energy_sq, budget.dissipation, budget.nonlinear,
            budget.interior, budget.boundary_vorticity, budget.boundary_curvature,
            residual),
    )
    manifest.add_artifact(run_dir, csv_name)

    boundary_max = float(
        max(np.max(np.abs(budget.boundary_vorticity)),
            np.max(np.abs(budget.boundary_curvature)))
    )
    manifest.summary.update(
        {
            "budget_residual": float(np.max(np.abs(residual))),
            "boundary_terms_max": boundary_max,
        }
    )
    _threshold_check(manifest, cfg.checks, "max_budget_residual",
                     manifest.summary["budget_residual"], "<=", csv_name,
                     "max_abs:residual", default=1e-8)
    _threshold_check(manifest, cfg.checks, "max_boundary_terms", boundary_max, "<=",
                     csv_name, "max_abs:boundary_vorticity,boundary_curvature",
                     default=1e-12)


_BODIES = {
    "single-run": _run_single,
    "sweep": _run_sweep_kind,
    "boussinesq-sweep": _run_sweep_kind,
    "epsilon-sweep": _run_epsilon_sweep,
    "lagrangian-check": _run_lagrangian,
    "budget": _run_budget,
}


def dispatch(cfg: ExperimentConfig, output_root, force: bool = False) -> DispatchResult:
    """Execute the configured experiment into <output_root>/<run_id>/."""
    output_root = Path(output_root)
    run_dir = output_root / cfg.run_id
    if run_dir.exists():
        if not force:
            raise FileExistsError(
                f"run directory {run_dir} already exists (use force to overwrite)"
            )
        for p in sorted(run_dir.rglob("*"), reverse=True):
            p.unlink() if p.is_file() else p.rmdir()
    run_dir.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest.begin(cfg.run_id, cfg.normalized())
    exit_code = EXIT_OK
    try:
        _BODIES[cfg.kind](cfg, run_dir, manifest)
        if not manifest.all_passed:
            exit_code = EXIT_CHECKS
    except (BlowUpError, SweepRunError) as exc:
        time = getattr(exc, "time", None) or getattr(
            getattr(exc, "cause", None), "time", None
        )
        manifest.record_error("blow-up", str(exc), abort_time=time)
        exit_code = EXIT_RUNTIME
    except DataClassError as exc:
        manifest.record_error("data-class", str(exc))
        exit_code = EXIT_VALIDATION
    manifest.finalize(run_dir)
    return DispatchResult(exit_code, run_dir, manifest)
