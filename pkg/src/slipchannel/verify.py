"""Re-verification of a completed run directory without re-simulation.

Checksums of every artifact are recomputed and each recorded threshold
check is re-derived from the stored CSVs using the manifest's ``derive``
recipe, then compared against both the stored value and the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .harness import fit_rate
from .manifest import load_manifest, sha256_file

__all__ = ["VerifyReport", "VerifyItem", "verify_run"]

VALUE_TOL = 1e-12


@dataclass
class VerifyItem:
    name: str
    kind: str  # "artifact" | "check"
    ok: bool
    detail: str


@dataclass
class VerifyReport:
    run_dir: str
    items: list[VerifyItem] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(i.ok for i in self.items)

    @property
    def artifacts_ok(self) -> bool:
        return all(i.ok for i in self.items if i.kind == "artifact")

    def lines(self) -> list[str]:
        out = [f"verify {self.run_dir}: {'PASS' if self.ok else 'FAIL'}"]
        for i in self.items:
            status = "ok  " if i.ok else "FAIL"
            out.append(f"  [{status}] {i.kind:8s} {i.name}: {i.detail}")
        return out


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    cols: dict[str, list] = {h: [] for h in header}
    for line in lines[1:]:
        for h, tok in zip(header, line.split(",")):
            try:
                cols[h].append(float(tok))
            except ValueError:
                cols[h].append(math.nan)
    return {h: np.array(v) for h, v in cols.items()}


def _derive_value(derive: str, table: dict[str, np.ndarray]) -> Optional[float]:
    op, _, arg = derive.partition(":")
    cols = arg.split(",") if arg else []
    if op == "max_abs":
        return float(max(np.nanmax(np.abs(table[c])) for c in cols))
    if op == "column_max":
        return float(max(np.nanmax(table[c]) for c in cols))
    if op == "fit_slope":
        key = "nu" if "nu" in table else "epsilon"
        pairs = list(zip(table[key], table[cols[0]]))
        return fit_rate(pairs).slope
    if op == "monotone_decreasing":
        first = next(iter(table))
        keep = table[first] > 0.0
        ok = True
        for c in cols:
            vals = table[c][keep]
            ok = ok and bool(np.all(np.diff(vals) < 0.0))
        return 1.0 if ok else 0.0
    return None


def _compare(op: str, value: float, threshold: float) -> bool:
    return value <= threshold if op == "<=" else value >= threshold


def verify_run(run_dir) -> VerifyReport:
    """Recompute checksums and re-evaluate thresholds from stored artifacts."""
    run_dir = Path(run_dir)
    report = VerifyReport(run_dir=str(run_dir))
    try:
        manifest = load_manifest(run_dir)
    except (FileNotFoundError, ValueError) as exc:
        report.items.append(VerifyItem("manifest.json", "artifact", False, str(exc)))
        return report

    if manifest.get("error"):
        err = manifest["error"]
        report.items.append(
            VerifyItem("run", "check", False,
                       f"run recorded an error: {err.get('kind')}: {err.get('message')}")
        )

    for name, meta in sorted(manifest.get("artifacts", {}).items()):
        path = run_dir / name
        if not path.is_file():
            report.items.append(VerifyItem(name, "artifact", False, "missing"))
            continue
        digest = sha256_file(path)
        if digest != meta.get("sha256"):
            report.items.append(
                VerifyItem(name, "artifact", False,
                           f"checksum mismatch: {digest[:12]} != {meta.get('sha256', '')[:12]}")
            )
        else:
            report.items.append(VerifyItem(name, "artifact", True, "checksum ok"))

    tables: dict[str, dict] = {}
    for check in manifest.get("checks", []):
        name = check["name"]
        stored = float(check["value"])
        threshold = float(check["threshold"])
        op = check["op"]
        artifact, derive = check.get("artifact"), check.get("derive")
        if artifact and derive:
            path = run_dir / artifact
            if not path.is_file():
                report.items.append(
                    VerifyItem(name, "check", False, f"artifact {artifact} missing")
                )
                continue
            if artifact not in tables:
                tables[artifact] = _read_csv(path)
            value = _derive_value(derive, tables[artifact])
            if value is None:
                report.items.append(
                    VerifyItem(name, "check", False, f"unknown derive {derive!r}")
                )
                continue
            drift = abs(value - stored)
            if drift > VALUE_TOL * max(1.0, abs(stored)):
                report.items.append(
                    VerifyItem(
                        name, "check", False,
                        f"recomputed {value!r} differs from recorded {stored!r}",
                    )
                )
                continue
        else:
            value = stored
        ok = _compare(op, value, threshold)
        detail = f"value {value:.6g} {op} {threshold:.6g}"
        report.items.append(VerifyItem(name, "check", ok, detail))
    return report
