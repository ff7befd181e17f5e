"""Text formats for fields (snapshots) and diagnostic tables (series).

Floats are written with shortest-round-trip formatting (Python repr), which
is locale independent and reproduces every double bitwise on parse.  Lines
end with LF.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .grid import Field, Grid, make_grid

__all__ = [
    "format_float",
    "write_table",
    "read_table",
    "write_snapshot",
    "read_snapshot",
]

SNAPSHOT_MAGIC = "lichflow-snapshot v1"


def format_float(x: float) -> str:
    return repr(float(x))


def write_table(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    """Write a comma-delimited table with a header row."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    """Parse a table written by write_table; returns (header, rows array)."""
    with open(path, "r", newline="\n") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty series file")
    header = lines[0].split(",")
    rows = np.array(
        [[float(tok) for tok in ln.split(",")] for ln in lines[1:]], dtype=np.float64
    ).reshape(len(lines) - 1, len(header))
    return header, rows


def write_snapshot(field: Field, path: str | os.PathLike) -> None:
    """Write a self-describing text snapshot of a field."""
    g = field.grid
    lines = [
        SNAPSHOT_MAGIC,
        f"dim {g.dim}",
        "points " + " ".join(str(n) for n in g.points_per_axis),
        "length " + " ".join(format_float(L) for L in g.axis_length),
    ]
    lines.extend(format_float(v) for v in field.values)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path: str | os.PathLike) -> Field:
    with open(path, "r", newline="\n") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a '{SNAPSHOT_MAGIC}' file")

    def _expect(idx: int, key: str) -> list[str]:
        if idx >= len(lines):
            raise ValueError(f"{path}: truncated snapshot, missing '{key}' line")
        parts = lines[idx].split()
        if not parts or parts[0] != key:
            raise ValueError(f"{path}: expected '{key} ...' on line {idx + 1}")
        return parts[1:]

    dim = int(_expect(1, "dim")[0])
    points = [int(tok) for tok in _expect(2, "points")]
    lengths = [float(tok) for tok in _expect(3, "length")]
    grid = make_grid(dim, points, lengths)
    values = [float(tok) for tok in lines[4:] if tok.strip()]
    if len(values) != grid.npoints:
        raise ValueError(
            f"{path}: snapshot declares {grid.npoints} points but carries {len(values)} values"
        )
    return Field(grid, np.array(values))


def require_grid_match(field: Field, grid: Grid, path: str) -> Field:
    """Check a loaded snapshot against a target grid, naming both on mismatch."""
    g = field.grid
    if g.dim != grid.dim:
        raise ValueError(
            f"{path}: snapshot is {g.dim}-d but target grid is {grid.dim}-d"
        )
    if g != grid:
        raise ValueError(
            f"{path}: snapshot grid (points {g.points_per_axis}, lengths {g.axis_length}) "
            f"does not match target grid (points {grid.points_per_axis}, "
            f"lengths {grid.axis_length})"
        )
    return field
