"""Aggregate reports: one rate table across sweeps plus rendered figures.

``generate_report`` takes completed run directories and writes, into the
report directory, a ``rate_table.csv`` mirroring the convergence-rate
statements (one row per fitted quantity) and a set of matplotlib figures:
log-log error-versus-viscosity plots with their fitted slopes, balance and
budget time series, and epsilon-sweep error decay.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .manifest import load_manifest, write_csv
from .verify import _read_csv

__all__ = ["generate_report"]

_QUANTITY_LABELS = {
    "sup_err2": "sup_t ||u_nu - u_ref||^2",
    "grad_err2_int": "int ||grad(u_nu - u_ref)||^2 dt",
    "rho_err2": "sup_t ||rho_nu - rho_ref||^2",
}

_RATE_FILES = {
    "sup_err2": "rate_sup.json",
    "grad_err2_int": "rate_grad.json",
    "rho_err2": "rate_rho.json",
}


def _fig_size():
    return (6.0, 4.0)


def _save(fig, out_dir: Path, name: str, written: list[Path]) -> None:
    path = out_dir / name
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)


def _plot_sweep(run_id: str, manifest: dict, run_dir: Path, out_dir: Path,
                written: list[Path]) -> list[list]:
    table = _read_csv(run_dir / "sweep.csv")
    nus = table["nu"]
    data_class = manifest["config"]["data"]["class"]
    rows = []

    fig, ax = plt.subplots(figsize=_fig_size())
    for quantity, marker in (("sup_err2", "o"), ("grad_err2_int", "s"),
                             ("rho_err2", "^")):
        if quantity not in table or np.all(np.isnan(table[quantity])):
            continue
        vals = table[quantity]
        ax.loglog(nus, vals, marker, label=_QUANTITY_LABELS[quantity])
        rate_path = run_dir / _RATE_FILES[quantity]
        if rate_path.is_file():
            rate = json.loads(rate_path.read_text())
            fit = rate.get("fit")
            if fit:
                fitted = np.exp(fit["intercept"]) * nus ** fit["slope"]
                ax.loglog(nus, fitted, "--", linewidth=1.0,
                          label=f"slope {fit['slope']:.3f}")
                rows.append([
                    run_id, manifest["config"]["kind"], data_class, quantity,
                    fit["slope"], fit["intercept"], fit["r_squared"],
                    fit["n_points"],
                ])
            else:
                rows.append([run_id, manifest["config"]["kind"], data_class,
                             quantity, math.nan, math.nan, math.nan, 0])
    ax.set_xlabel("viscosity")
    ax.set_ylabel("error measure")
    ax.set_title(f"{data_class} sweep ({run_id})")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, out_dir, f"rates_{run_id}.png", written)
    return rows


def _plot_epsilon(run_id: str, manifest: dict, run_dir: Path, out_dir: Path,
                  written: list[Path]) -> None:
    table = _read_csv(run_dir / "epsilon_sweep.csv")
    keep = table["epsilon"] > 0
    fig, ax = plt.subplots(figsize=_fig_size())
    ax.loglog(table["epsilon"][keep], table["sup_vel_err2"][keep], "o-",
              label="sup ||v_eps - v||^2")
    ax.loglog(table["epsilon"][keep], table["sup_rho_err2"][keep], "s-",
              label="sup ||rho_eps - rho||^2")
    ax.loglog(table["epsilon"][keep], table["weighted_dissipation"][keep], "^-",
              label="eps * int ||grad rho||^2")
    ax.axhline(manifest["summary"].get("initial_energy", math.nan), color="k",
               linewidth=0.8, linestyle=":", label="initial energy")
    ax.set_xlabel("epsilon")
    ax.set_title(f"density-diffusion sweep ({run_id})")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, out_dir, f"epsilon_{run_id}.png", written)


def _plot_balance(run_id: str, run_dir: Path, csv_name: str, out_dir: Path,
                  written: list[Path]) -> None:
    table = _read_csv(run_dir / csv_name)
    fig, ax = plt.subplots(figsize=_fig_size())
    ax.plot(table["time"], np.abs(table["residual"]))
    ax.set_yscale("log")
    ax.set_xlabel("time")
    ax.set_ylabel("|balance residual|")
    ax.set_title(f"energy balance residual ({run_id})")
    ax.grid(True, alpha=0.3)
    _save(fig, out_dir, f"balance_{run_id}.png", written)


def _plot_budget(run_id: str, run_dir: Path, csv_name: str, out_dir: Path,
                 written: list[Path]) -> None:
    table = _read_csv(run_dir / csv_name)
    fig, ax = plt.subplots(figsize=_fig_size())
    for col in ("energy_sq", "dissipation", "nonlinear", "interior"):
        ax.plot(table["time"], table[col], label=col)
    ax.plot(table["time"], np.abs(table["residual"]), "k--", label="|residual|")
    ax.set_xlabel("time")
    ax.set_title(f"difference budget ({run_id})")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _save(fig, out_dir, f"budget_{run_id}.png", written)


def generate_report(run_dirs, out_dir) -> list[Path]:
    """Aggregate runs into rate_table.csv plus figures; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    rate_rows: list[list] = []

    for rd in run_dirs:
        rd = Path(rd)
        manifest = load_manifest(rd)
        run_id = manifest["run_id"]
        kind = manifest["config"]["kind"]
        if kind in ("sweep", "boussinesq-sweep"):
            rate_rows.extend(_plot_sweep(run_id, manifest, rd, out_dir, written))
        elif kind == "epsilon-sweep":
            _plot_epsilon(run_id, manifest, rd, out_dir, written)
        elif kind == "single-run":
            for name in manifest["artifacts"]:
                if name.endswith("_energy_balance.csv") or name.endswith(
                    "_boussinesq_balance.csv"
                ):
                    _plot_balance(run_id, rd, name, out_dir, written)
        elif kind == "budget":
            for name in manifest["artifacts"]:
                if name.endswith("_gronwall_budget.csv"):
                    _plot_budget(run_id, rd, name, out_dir, written)

    table_path = out_dir / "rate_table.csv"
    write_csv(
        table_path,
        ["run_id", "kind", "data_class", "quantity", "slope", "intercept",
         "r_squared", "n_points"],
        rate_rows,
    )
    written.append(table_path)
    return written
