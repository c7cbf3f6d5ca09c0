"""Self-describing binary container for spectral field snapshots.

Layout (all integers and floats little-endian):

    bytes 0..7    magic  b"SCHFLD01"
    bytes 8..11   uint32 header length H
    bytes 12..    UTF-8 JSON header, H bytes:
                    {"format_version": 1,
                     "grid": {"nx": ..., "ny": ..., "nz": ...},
                     "fields": [{"name": "u1", "parity": "even"}, ...],
                     "dtype": "<c16", "order": "C"}
    then per field, in header order: nx * ny * (nz + 1) complex128 values,
    C order, axes (kx, ky, kz).

The header is versioned; readers reject unknown magic or versions.
"""

from __future__ import annotations

import json
import struct
from typing import Mapping, Union

import numpy as np

from .grid import Grid, Parity
from .fields import BoussinesqState, VelocityState
from .spectral import SpectralScalar

__all__ = [
    "write_snapshot",
    "read_snapshot",
    "save_state",
    "load_state",
    "SnapshotFormatError",
]

MAGIC = b"SCHFLD01"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<c16")


class SnapshotFormatError(ValueError):
    """Raised for malformed or unsupported snapshot files."""


def write_snapshot(path, fields: Mapping[str, SpectralScalar]) -> None:
    """Write named fields (all on one grid) to a snapshot file."""
    items = list(fields.items())
    if not items:
        raise ValueError("no fields to write")
    grid = items[0][1].grid
    for _, f in items:
        grid.check_same(f.grid)
    header = {
        "format_version": FORMAT_VERSION,
        "grid": {"nx": grid.nx, "ny": grid.ny, "nz": grid.nz},
        "fields": [{"name": n, "parity": f.parity.value} for n, f in items],
        "dtype": "<c16",
        "order": "C",
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, f in items:
            fh.write(np.ascontiguousarray(f.coeffs, dtype=_DTYPE).tobytes())


def read_snapshot(path) -> dict[str, SpectralScalar]:
    """Read a snapshot file back into named fields."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r} in {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise SnapshotFormatError(
                f"unsupported snapshot version {header.get('format_version')}"
            )
        g = header["grid"]
        grid = Grid(g["nx"], g["ny"], g["nz"])
        count = grid.nx * grid.ny * (grid.nz + 1)
        out: dict[str, SpectralScalar] = {}
        for spec in header["fields"]:
            raw = fh.read(count * _DTYPE.itemsize)
            if len(raw) != count * _DTYPE.itemsize:
                raise SnapshotFormatError(f"truncated field {spec['name']!r} in {path}")
            arr = np.frombuffer(raw, dtype=_DTYPE).reshape(grid.shape).astype(np.complex128)
            out[spec["name"]] = SpectralScalar(grid, Parity(spec["parity"]), arr)
    return out


def save_state(path, state: Union[VelocityState, BoussinesqState]) -> None:
    """Write a velocity or buoyant state as a snapshot file."""
    if isinstance(state, BoussinesqState):
        fields = {
            "u1": state.vel.u1, "u2": state.vel.u2, "u3": state.vel.u3,
            "rho": state.rho,
        }
    else:
        fields = {"u1": state.u1, "u2": state.u2, "u3": state.u3}
    write_snapshot(path, fields)


def load_state(path) -> Union[VelocityState, BoussinesqState]:
    fields = read_snapshot(path)
    try:
        vel = VelocityState(fields["u1"], fields["u2"], fields["u3"])
    except KeyError as exc:
        raise SnapshotFormatError(f"snapshot lacks velocity component {exc}") from exc
    if "rho" in fields:
        return BoussinesqState(vel, fields["rho"])
    return vel
