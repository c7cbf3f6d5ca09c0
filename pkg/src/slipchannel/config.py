"""Experiment configuration: YAML schema, validation and canonical hashing.

Schema (version 1), all sections optional unless noted:

    version: 1                      # required
    kind: sweep                     # required: single-run | sweep |
                                    #   boussinesq-sweep | epsilon-sweep |
                                    #   lagrangian-check | budget
    seed: 0
    output: runs                    # output root (CLI --output overrides)
    grid:   {nx: 32, ny: 32, nz: 32}
    solver: {nu: 1.0e-2, epsilon: 0.0, dt: 1.0e-3, t_end: 1.0,
             snapshot_interval: 10}
    data:   {class: shear, amplitude: 0.5, rho_amplitude: 0.25,
             perturbation_exponent: 1.5, perturbation_pattern: 1}
    sweep:  {nus: [1.0e-2, 5.0e-3, 2.5e-3, 1.25e-3]}
    epsilon_sweep: {nu: 1.0e-2, epsilons: [1.0e-2, 1.0e-3, 1.0e-4]}
    particles: {interior: 3, wall: 2}
    checks: {<name>: <threshold>, ...}

Unknown keys are rejected everywhere (no silent typos) and every
validation error is reported, not just the first.  The run identifier is
the SHA-256 of the canonical JSON form of the *normalized* config, so two
files with the same semantics hash identically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .grid import Grid
from .harness import DATA_CLASS_KINDS, DataClass, Perturbation

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "parse_config_text"]

CONFIG_VERSION = 1

EXPERIMENT_KINDS = (
    "single-run",
    "sweep",
    "boussinesq-sweep",
    "epsilon-sweep",
    "lagrangian-check",
    "budget",
)

_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output": None,
    "grid": {"nx": 32, "ny": 32, "nz": 32},
    "solver": {
        "nu": 1.0e-2,
        "epsilon": 0.0,
        "dt": 1.0e-3,
        "t_end": 1.0,
        "snapshot_interval": 10,
    },
    "data": {
        "class": "shear",
        "amplitude": 0.5,
        "rho_amplitude": 0.25,
        "perturbation_exponent": None,
        "perturbation_pattern": 1,
    },
    "sweep": {"nus": [1.0e-2, 5.0e-3, 2.5e-3, 1.25e-3]},
    "epsilon_sweep": {"nu": 1.0e-2, "epsilons": [1.0e-2, 1.0e-3, 1.0e-4]},
    "particles": {"interior": 3, "wall": 2},
    "checks": {},
}


class ConfigError(ValueError):
    """All validation problems of a config file, reported together."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description."""

    kind: str
    seed: int
    output: Optional[str]
    grid: Grid
    nu: float
    epsilon: float
    dt: float
    t_end: float
    snapshot_interval: int
    data: DataClass
    nus: tuple[float, ...]
    eps_nu: float
    epsilons: tuple[float, ...]
    particles_interior: int
    particles_wall: int
    checks: dict[str, float] = field(default_factory=dict)

    def normalized(self) -> dict:
        """Canonical dictionary; the basis for the run identifier."""
        return {
            "version": CONFIG_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "nz": self.grid.nz},
            "solver": {
                "nu": self.nu,
                "epsilon": self.epsilon,
                "dt": self.dt,
                "t_end": self.t_end,
                "snapshot_interval": self.snapshot_interval,
            },
            "data": {
                "class": self.data.kind,
                "amplitude": self.data.amplitude,
                "rho_amplitude": self.data.rho_amplitude,
                "perturbation_exponent": (
                    self.data.perturbation.exponent if self.data.perturbation else None
                ),
                "perturbation_pattern": (
                    self.data.perturbation.pattern if self.data.perturbation else None
                ),
            },
            "sweep": {"nus": list(self.nus)},
            "epsilon_sweep": {"nu": self.eps_nu, "epsilons": list(self.epsilons)},
            "particles": {
                "interior": self.particles_interior,
                "wall": self.particles_wall,
            },
            "checks": dict(sorted(self.checks.items())),
        }

    @property
    def run_id(self) -> str:
        blob = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, seed=seed, data=replace(self.data, seed=seed))

    def solver_config(self, **overrides):
        from .dynamics import SolverConfig

        kwargs = dict(
            grid=self.grid,
            nu=self.nu,
            epsilon=self.epsilon,
            dt=self.dt,
            t_end=self.t_end,
            snapshot_interval=self.snapshot_interval,
        )
        kwargs.update(overrides)
        return SolverConfig(**kwargs)


def _type_name(v: Any) -> str:
    return type(v).__name__


class _Validator:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def fail(self, msg: str) -> None:
        self.errors.append(msg)

    def section(self, raw: dict, key: str) -> dict:
        value = raw.get(key, {})
        if value is None:
            value = {}
        if not isinstance(value, dict):
            self.fail(f"section '{key}' must be a mapping, got {_type_name(value)}")
            return dict(_DEFAULTS.get(key, {}))
        defaults = _DEFAULTS.get(key, {})
        unknown = set(value) - set(defaults)
        for k in sorted(unknown):
            self.fail(f"unknown key '{key}.{k}'")
        merged = {**defaults, **{k: v for k, v in value.items() if k in defaults}}
        return merged

    def number(self, section: str, key: str, value: Any, *, positive=False,
               nonnegative=False) -> float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            self.fail(f"'{section}.{key}' must be a number, got {_type_name(value)}")
            return 1.0
        v = float(value)
        if positive and v <= 0:
            self.fail(f"'{section}.{key}' must be positive, got {v}")
        if nonnegative and v < 0:
            self.fail(f"'{section}.{key}' must be nonnegative, got {v}")
        return v

    def integer(self, section: str, key: str, value: Any, minimum: int) -> int:
        if not isinstance(value, int) or isinstance(value, bool):
            self.fail(f"'{section}.{key}' must be an integer, got {_type_name(value)}")
            return minimum
        if value < minimum:
            self.fail(f"'{section}.{key}' must be >= {minimum}, got {value}")
            return minimum
        return value

    def decreasing_list(self, section: str, key: str, value: Any) -> tuple[float, ...]:
        if not isinstance(value, (list, tuple)) or not value:
            self.fail(f"'{section}.{key}' must be a non-empty list")
            return ()
        try:
            vals = tuple(float(v) for v in value)
        except (TypeError, ValueError):
            self.fail(f"'{section}.{key}' must contain numbers")
            return ()
        if any(b >= a for a, b in zip(vals, vals[1:])):
            self.fail(f"'{section}.{key}' must be strictly decreasing")
        return vals


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse and validate a YAML config document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])

    v = _Validator()

    version = raw.get("version")
    if version is None:
        v.fail("missing required key 'version' (add 'version: 1')")
    elif version != CONFIG_VERSION:
        v.fail(
            f"unsupported config version {version!r}; this tool reads version "
            f"{CONFIG_VERSION} - update the file to the version-1 schema"
        )

    known_top = {"version", "kind"} | set(_DEFAULTS)
    for k in sorted(set(raw) - known_top):
        v.fail(f"unknown key '{k}'")

    kind = raw.get("kind")
    if kind not in EXPERIMENT_KINDS:
        v.fail(f"'kind' must be one of {', '.join(EXPERIMENT_KINDS)}, got {kind!r}")
        kind = "single-run"

    seed = raw.get("seed", _DEFAULTS["seed"])
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        v.fail(f"'seed' must be a nonnegative integer, got {seed!r}")
        seed = 0

    output = raw.get("output", None)
    if output is not None and not isinstance(output, str):
        v.fail(f"'output' must be a string path, got {_type_name(output)}")
        output = None

    gsec = v.section(raw, "grid")
    nx = v.integer("grid", "nx", gsec["nx"], 4)
    ny = v.integer("grid", "ny", gsec["ny"], 4)
    nz = v.integer("grid", "nz", gsec["nz"], 4)
    grid: Optional[Grid] = None
    try:
        grid = Grid(nx, ny, nz)
    except ValueError as exc:
        v.fail(f"grid: {exc}")

    ssec = v.section(raw, "solver")
    nu = v.number("solver", "nu", ssec["nu"], nonnegative=True)
    epsilon = v.number("solver", "epsilon", ssec["epsilon"], nonnegative=True)
    dt = v.number("solver", "dt", ssec["dt"], positive=True)
    t_end = v.number("solver", "t_end", ssec["t_end"], positive=True)
    snap = v.integer("solver", "snapshot_interval", ssec["snapshot_interval"], 1)
    if dt > 0 and t_end > 0:
        n = round(t_end / dt)
        if n < 1 or abs(n * dt - t_end) > 1e-9 * t_end:
            v.fail("'solver.t_end' must be an integer multiple of 'solver.dt'")
        elif n % snap != 0:
            v.fail("'solver.snapshot_interval' must divide the step count t_end/dt")

    dsec = v.section(raw, "data")
    cls = dsec["class"]
    if cls not in DATA_CLASS_KINDS:
        v.fail(f"'data.class' must be one of {', '.join(DATA_CLASS_KINDS)}, got {cls!r}")
        cls = "shear"
    amplitude = v.number("data", "amplitude", dsec["amplitude"], positive=True)
    rho_amplitude = v.number("data", "rho_amplitude", dsec["rho_amplitude"], positive=True)
    pert = None
    if dsec["perturbation_exponent"] is not None:
        r = v.number("data", "perturbation_exponent", dsec["perturbation_exponent"],
                     nonnegative=True)
        pid = v.integer("data", "perturbation_pattern", dsec["perturbation_pattern"], 1)
        pert = Perturbation(exponent=r, pattern=pid)
    if kind in ("boussinesq-sweep", "epsilon-sweep") and cls != "boussinesq-blob":
        v.fail(f"'{kind}' experiments require data.class: boussinesq-blob")

    swsec = v.section(raw, "sweep")
    nus = v.decreasing_list("sweep", "nus", swsec["nus"])
    if kind in ("sweep", "boussinesq-sweep") and len(nus) < 4:
        v.fail("'sweep.nus' needs at least 4 viscosities")

    esec = v.section(raw, "epsilon_sweep")
    eps_nu = v.number("epsilon_sweep", "nu", esec["nu"], positive=True)
    epsilons = v.decreasing_list("epsilon_sweep", "epsilons", esec["epsilons"])
    if kind == "epsilon-sweep" and len([e for e in epsilons if e > 0]) < 3:
        v.fail("'epsilon_sweep.epsilons' needs at least 3 positive values")

    psec = v.section(raw, "particles")
    p_int = v.integer("particles", "interior", psec["interior"], 1)
    p_wall = v.integer("particles", "wall", psec["wall"], 1)

    csec = raw.get("checks", {}) or {}
    checks: dict[str, float] = {}
    if not isinstance(csec, dict):
        v.fail(f"section 'checks' must be a mapping, got {_type_name(csec)}")
    else:
        for k, val in csec.items():
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                v.fail(f"'checks.{k}' must be a number, got {_type_name(val)}")
            else:
                checks[str(k)] = float(val)

    if v.errors:
        raise ConfigError(v.errors)

    return ExperimentConfig(
        kind=kind,
        seed=seed,
        output=output,
        grid=grid,
        nu=nu,
        epsilon=epsilon,
        dt=dt,
        t_end=t_end,
        snapshot_interval=snap,
        data=DataClass(
            kind=cls,
            amplitude=amplitude,
            rho_amplitude=rho_amplitude,
            seed=seed,
            perturbation=pert,
        ),
        nus=nus,
        eps_nu=eps_nu,
        epsilons=epsilons,
        particles_interior=p_int,
        particles_wall=p_wall,
        checks=checks,
    )


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    return parse_config_text(p.read_text())
