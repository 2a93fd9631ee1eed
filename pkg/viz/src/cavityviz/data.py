"""CSV readers for solver outputs, with schema checks and slice filtering.

These scripts consume archived CSV files only; they never import the
solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Input CSV lacks the columns a plot needs."""


@dataclass
class PlotSpec:
    """What to plot: inputs, kind, optional 3D slice, output path."""

    inputs: list
    kind: str = "field"
    output: str = "figure.png"
    slice_axis: str = ""
    slice_offset: float = 0.0
    slice_half_width: float = 0.0
    options: dict = field(default_factory=dict)


def read_table(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise SchemaError(f"{path}: empty input")
        names = [c.strip() for c in header.split(",")]
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise SchemaError(f"{path}: cannot parse rows: {exc}")
    if data.size == 0:
        raise SchemaError(f"{path}: no data rows")
    if data.shape[1] != len(names):
        raise SchemaError(f"{path}: row width does not match header")
    return {name: data[:, i] for i, name in enumerate(names)}


def require(table: dict, columns, path="input") -> None:
    missing = [c for c in columns if c not in table]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")


def read_snapshot(path):
    """Positions, velocity, and scalar fields from a snapshot CSV."""
    table = read_table(path)
    require(table, ["x", "y", "vx", "vy", "T"], path)
    dim = 3 if "z" in table else 2
    axes = ["x", "y", "z"][:dim]
    vels = ["vx", "vy", "vz"][:dim]
    require(table, axes + vels, path)
    positions = np.column_stack([table[a] for a in axes])
    velocity = np.column_stack([table[v] for v in vels])
    scalars = {
        name: table[name] for name in ("T", "p", "eta", "h") if name in table
    }
    return positions, velocity, scalars


def slice_plane(positions, axis: str, offset: float, half_width: float):
    """Indices of nodes within half_width of the axis-aligned plane."""
    index = {"x": 0, "y": 1, "z": 2}.get(axis)
    if index is None or index >= positions.shape[1]:
        raise SchemaError(f"slice axis {axis!r} not present in the data")
    keep = np.abs(positions[:, index] - offset) <= half_width
    if not np.any(keep):
        raise SchemaError("slice selects no nodes; widen the half-thickness")
    in_plane = [a for a in range(positions.shape[1]) if a != index]
    return np.flatnonzero(keep), in_plane


def idw_raster(points, values, resolution=300, neighbors=8, mask_factor=2.0):
    """Inverse-distance-weighted raster of scattered samples.

    Pixels farther from the data than mask_factor times the median node
    spacing are masked (holes and outside regions stay blank).
    """
    from scipy.spatial import cKDTree

    lo = points.min(axis=0)
    hi = points.max(axis=0)
    gx = np.linspace(lo[0], hi[0], resolution)
    gy = np.linspace(lo[1], hi[1], resolution)
    grid = np.stack(np.meshgrid(gx, gy), axis=-1).reshape(-1, 2)
    tree = cKDTree(points)
    k = min(neighbors, len(points))
    dist, idx = tree.query(grid, k=k)
    dist = np.atleast_2d(dist.reshape(len(grid), k))
    idx = idx.reshape(len(grid), k)
    near = tree.query(points, k=min(2, len(points)))[0]
    spacing = float(np.median(near[:, -1])) if len(points) > 1 else 1.0
    weights = 1.0 / np.maximum(dist, 1e-12 * max(spacing, 1e-300)) ** 2
    field = (weights * values[idx]).sum(axis=1) / weights.sum(axis=1)
    exact = dist[:, 0] < 1e-12
    field[exact] = values[idx[exact, 0]]
    field[dist[:, 0] > mask_factor * spacing] = np.nan
    return gx, gy, field.reshape(resolution, resolution)
