"""File formats: state checkpoints, time series, and point-cloud VTK."""

from __future__ import annotations

import json

import numpy as np

_FMT = "%.17g"


def save_checkpoint(path, state, nodes) -> None:
    """Per-node snapshot CSV: position, velocity, T, p, eta."""
    dim = nodes.dim
    axes = "xyz"[:dim]
    header = (
        ",".join(axes)
        + ","
        + ",".join("v" + a for a in axes)
        + ",T,p,eta"
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(nodes)):
            cols = [_FMT % c for c in nodes.positions[i]]
            cols += [_FMT % c for c in state.v[i]]
            cols += [_FMT % state.T[i], _FMT % state.p[i], _FMT % state.eta[i]]
            fh.write(",".join(cols) + "\n")


def save_meta(path, config, t: float, steps: int, extra: dict | None = None) -> None:
    payload = {
        "config": config.to_dict(),
        "config_hash": config.content_hash(),
        "t": t,
        "steps": steps,
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Read a snapshot CSV back into (positions, v, T, p, eta)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    dim = header.index("T") // 2
    positions = data[:, :dim]
    v = data[:, dim : 2 * dim]
    T, p, eta = data[:, 2 * dim], data[:, 2 * dim + 1], data[:, 2 * dim + 2]
    return positions, v, T, p, eta


def save_series(path, series: dict) -> None:
    """Time-series CSV: t, nu_cold, nu_hot, max_v, max_div."""
    keys = ["t", "nu_cold", "nu_hot", "max_v", "max_div"]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in zip(*(series[k] for k in keys)):
            fh.write(",".join(_FMT % v for v in row) + "\n")


def load_series(path) -> dict:
    with open(path) as fh:
        keys = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {k: data[:, i] for i, k in enumerate(keys)}


def save_profile(path, x, values) -> None:
    """Transect CSV: x, value."""
    with open(path, "w") as fh:
        fh.write("x,value\n")
        for xi, vi in zip(x, values):
            fh.write(f"{_FMT % xi},{_FMT % vi}\n")


def export_vtk(path, positions, point_data: dict, title="cavityflow snapshot") -> None:
    """Legacy ASCII VTK unstructured point cloud with nodal data arrays.

    Vector fields are written as VECTORS, scalar fields as SCALARS, both
    padded to 3 components where needed and printed with 17 significant
    digits so a round trip preserves the values.
    """
    pts = np.asarray(positions, float)
    n, dim = pts.shape
    if dim == 2:
        pts = np.column_stack([pts, np.zeros(n)])
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for p in pts:
            fh.write(" ".join(_FMT % c for c in p) + "\n")
        fh.write(f"CELLS {n} {2 * n}\n")
        for i in range(n):
            fh.write(f"1 {i}\n")
        fh.write(f"CELL_TYPES {n}\n")
        fh.write("\n".join(["1"] * n) + "\n")
        fh.write(f"POINT_DATA {n}\n")
        for name, values in point_data.items():
            values = np.asarray(values, float)
            if values.ndim == 2:
                vec = values
                if vec.shape[1] == 2:
                    vec = np.column_stack([vec, np.zeros(len(vec))])
                fh.write(f"VECTORS {name} double\n")
                for row in vec:
                    fh.write(" ".join(_FMT % c for c in row) + "\n")
            else:
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                fh.write("\n".join(_FMT % v for v in values) + "\n")


def read_vtk(path):
    """Minimal reader for the files written by export_vtk."""
    points = None
    data = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        if tok[0] == "POINTS":
            n = int(tok[1])
            points = np.array(
                [[float(c) for c in lines[i + 1 + j].split()] for j in range(n)]
            )
            i += n + 1
        elif tok[0] == "VECTORS":
            name = tok[1]
            n = len(points)
            data[name] = np.array(
                [[float(c) for c in lines[i + 1 + j].split()] for j in range(n)]
            )
            i += n + 1
        elif tok[0] == "SCALARS":
            name = tok[1]
            n = len(points)
            vals = [float(lines[i + 2 + j]) for j in range(n)]
            data[name] = np.array(vals)
            i += n + 2
        else:
            i += 1
    return points, data
