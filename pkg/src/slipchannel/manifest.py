"""Run manifests: config echo, artifact checksums and threshold checks.

A manifest is written once, at the end of a run, into the run directory;
existing manifests are never mutated.  Artifact checksums make every
result re-verifiable without re-running the simulation, and the recorded
``derive`` recipe of each check lets the verifier recompute the checked
quantity from the stored CSVs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from typing import Optional

from . import __version__

__all__ = ["Check", "RunManifest", "sha256_file", "write_csv", "load_manifest"]

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(value) -> str:
    # repr of a builtin float gives the shortest round-trip form,
    # byte-identical across runs; numpy scalars are converted first
    # (their repr is not a bare literal)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV writer (repr-formatted floats, LF newlines)."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Check:
    """One acceptance check evaluated by a run.

    ``derive`` records how to recompute ``value`` from an artifact, e.g.
    "fit_slope:sup_err2", "max_abs:residual", "column_max:cauchy_residual",
    "monotone_decreasing:sup_vel_err2"; None means not recomputable.
    """

    name: str
    value: float
    threshold: float
    op: str  # "<=" or ">="
    artifact: Optional[str] = None
    derive: Optional[str] = None

    @property
    def passed(self) -> bool:
        if self.op == "<=":
            return self.value <= self.threshold
        if self.op == ">=":
            return self.value >= self.threshold
        raise ValueError(f"unknown check operator {self.op!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "op": self.op,
            "artifact": self.artifact,
            "derive": self.derive,
            "passed": self.passed,
        }


@dataclass
class RunManifest:
    """Provenance record of one experiment run."""

    run_id: str
    config: dict
    started: str = ""
    finished: str = ""
    tool_version: str = __version__
    artifacts: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: Optional[dict] = None

    @classmethod
    def begin(cls, run_id: str, config: dict) -> "RunManifest":
        return cls(
            run_id=run_id,
            config=config,
            started=datetime.now(timezone.utc).isoformat(),
        )

    def add_artifact(self, run_dir: Path, name: str) -> None:
        path = run_dir / name
        self.artifacts[name] = {
            "sha256": sha256_file(path),
            "bytes": path.stat().st_size,
        }

    def add_check(self, check: Check) -> None:
        self.checks.append(check)

    def record_error(self, kind: str, message: str, **extra) -> None:
        self.error = {"kind": kind, "message": message, **extra}

    @property
    def all_passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def finalize(self, run_dir: Path) -> Path:
        self.finished = datetime.now(timezone.utc).isoformat()
        payload = {
            "run_id": self.run_id,
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
            "config": self.config,
            "artifacts": self.artifacts,
            "checks": [c.to_dict() for c in self.checks],
            "summary": self.summary,
            "error": self.error,
        }
        path = run_dir / MANIFEST_NAME
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def load_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {run_dir}")
    return json.loads(path.read_text())
