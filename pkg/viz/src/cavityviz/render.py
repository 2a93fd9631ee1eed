"""Figure rendering: velocity heatmaps with temperature contours, time
series, convergence curves, and transect profiles."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import (
    PlotSpec,
    SchemaError,
    idw_raster,
    read_snapshot,
    read_table,
    require,
    slice_plane,
)


def _finish(fig, output):
    fig.tight_layout()
    fig.savefig(output, dpi=130)
    plt.close(fig)
    return Path(output)


def plot_field(spec: PlotSpec):
    """Velocity-magnitude heatmap with overlaid temperature contours."""
    path = spec.inputs[0]
    positions, velocity, scalars = read_snapshot(path)
    if positions.shape[1] == 3:
        if not spec.slice_axis:
            raise SchemaError("3D snapshots need a slice plane")
        keep, in_plane = slice_plane(
            positions, spec.slice_axis, spec.slice_offset, spec.slice_half_width
        )
        pts = positions[np.ix_(keep, in_plane)]
        vel = velocity[keep]
        temp = scalars["T"][keep]
    else:
        pts = positions
        vel = velocity
        temp = scalars["T"]

    speed = np.linalg.norm(vel, axis=1)
    gx, gy, raster = idw_raster(pts, speed)
    fig, ax = plt.subplots(figsize=(6.2, 5.4))
    image = ax.pcolormesh(gx, gy, raster, shading="auto", cmap="inferno")
    bar = fig.colorbar(image, ax=ax)
    bar.set_label("|v|")
    levels = spec.options.get("contours", 11)
    if np.ptp(temp) > 0:
        cs = ax.tricontour(
            pts[:, 0], pts[:, 1], temp, levels=levels, colors="w", linewidths=0.7
        )
        ax.clabel(cs, inline=True, fontsize=6, fmt="%.2f")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"|v| in [{speed.min():.3g}, {speed.max():.3g}], T contours")
    return _finish(fig, spec.output)


def plot_series(spec: PlotSpec):
    """Nusselt-number evolution, one line per input series."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for path in spec.inputs:
        table = read_table(path)
        require(table, ["t", "nu_cold"], path)
        label = Path(path).stem
        ax.plot(table["t"], table["nu_cold"], label=f"{label} cold")
        if "nu_hot" in table and spec.options.get("hot", True):
            ax.plot(table["t"], table["nu_hot"], ls="--", label=f"{label} hot")
    ax.set_xlabel("t")
    ax.set_ylabel("Nu")
    ax.legend(fontsize=8)
    return _finish(fig, spec.output)


def build_convergence(spec: PlotSpec):
    """Figure for Nusselt against node count, log-scaled x axis.

    Draws one curve per input file; a file holding a grouping column
    (``scheme`` or ``c``) contributes one curve per distinct group.
    """
    y_col = spec.options.get("y", "nu_cold")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for path in spec.inputs:
        table = read_table(path)
        require(table, ["nodes", y_col], path)
        group = None
        for candidate in ("scheme", "c"):
            if candidate in table:
                group = candidate
                break
        stem = Path(path).stem
        if group is None:
            order = np.argsort(table["nodes"])
            ax.plot(table["nodes"][order], table[y_col][order], "o-", label=stem)
        else:
            for value in np.unique(table[group]):
                pick = table[group] == value
                order = np.argsort(table["nodes"][pick])
                ax.plot(
                    table["nodes"][pick][order],
                    table[y_col][pick][order],
                    "o-",
                    label=f"{stem} {group}={value:g}",
                )
    ax.set_xscale("log")
    ax.set_xlabel("nodes")
    ax.set_ylabel(y_col)
    ax.legend(fontsize=8)
    return fig


def plot_convergence(spec: PlotSpec):
    return _finish(build_convergence(spec), spec.output)


def plot_profile(spec: PlotSpec):
    """Transect plots of (x, value) CSV extractions."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for path in spec.inputs:
        table = read_table(path)
        require(table, ["x", "value"], path)
        ax.plot(table["x"], table["value"], label=Path(path).stem)
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    return _finish(fig, spec.output)
