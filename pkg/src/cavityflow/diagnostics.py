"""Observables: Nusselt numbers, symmetry error, local interpolation,
reference correlations, and steady-state detection."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Domain, DomainError
from .nodes import NodeSet, NodeType
from .operators import _solve_saddle, monomial_exponents
from .stencils import StencilTable


def nusselt_wall(T, nodes: NodeSet, disc, params, wall=NodeType.WALL_COLD) -> float:
    """Average wall-normal temperature gradient scaled to a Nusselt number.

    Uses the RBF-FD derivative weights projected on the outward normal,
    so the same evaluation serves rotated and 3D configurations.
    """
    idx = nodes.indices_of(wall)
    if len(idx) == 0:
        raise ValueError(f"no nodes tagged {NodeType(wall).name} on this cloud")
    rows = np.einsum("ka,kas->ks", nodes.normals[idx], disc.w_grad[idx])
    flux = np.einsum("ks,ks->k", rows, np.asarray(T)[disc.stencils.indices[idx]])
    return float(np.mean(np.abs(flux)) * params.L / params.delta_T)


def interpolate(
    values,
    nodes: NodeSet,
    stencils: StencilTable,
    queries,
    k: int = 3,
    m: int = 2,
    domain: Domain | None = None,
):
    """Local RBF interpolation at arbitrary points.

    Each query uses the stencil of its nearest node with the same basis
    as the operator weights, so nodal values are reproduced exactly and
    polynomials up to order m are exact everywhere.

    ``values`` may be one field (n,) or several stacked as (f, n);
    returns matching (q,) or (f, q) arrays.
    """
    vals = np.asarray(values, float)
    single = vals.ndim == 1
    vals = np.atleast_2d(vals)
    pts = nodes.positions
    queries = np.atleast_2d(np.asarray(queries, float))
    if domain is not None and not np.all(domain.contains(queries, tol=1e-12)):
        raise DomainError("interpolation query outside the fluid region")

    expo = monomial_exponents(m, pts.shape[1])
    nearest = cKDTree(pts).query(queries)[1]
    out = np.empty((vals.shape[0], len(queries)))
    for q_i, (query, i) in enumerate(zip(queries, nearest)):
        idx = stencils.indices[i]
        local = pts[idx]
        delta = stencils.distances[i, 1]
        scaled = (local - local[0]) / delta
        diff = scaled[:, None, :] - scaled[None, :, :]
        a_block = np.sqrt(np.sum(diff * diff, axis=2)) ** k
        q_block = np.prod(scaled[:, None, :] ** expo[None, :, :], axis=2)
        s = len(idx)
        size = s + len(expo)
        matrix = np.zeros((size, size))
        matrix[:s, :s] = a_block
        matrix[:s, s:] = q_block
        matrix[s:, :s] = q_block.T
        rhs = np.zeros((size, vals.shape[0]))
        rhs[:s] = vals[:, idx].T
        coef = _solve_saddle(matrix, rhs, node=int(i))
        yq = (query - local[0]) / delta
        phi = np.linalg.norm(yq[None, :] - scaled, axis=1) ** k
        mono = np.prod(yq[None, :] ** expo, axis=1)
        out[:, q_i] = phi @ coef[:s] + mono @ coef[s:]
    return out[0] if single else out


def symmetry_error(
    v,
    nodes: NodeSet,
    stencils: StencilTable,
    y: float,
    samples: int = 512,
    k: int = 3,
    m: int = 2,
) -> float:
    """Antisymmetry violation of the vertical velocity along a transect.

    Interpolates v_y on ``samples`` uniform points along the lines y and
    1 - y and returns max |v_y(x, y) + v_y(1 - x, 1 - y)| normalised by
    max |v_y(x, y)|.
    """
    if nodes.dim != 2:
        raise ValueError("symmetry error is defined for the 2D cavity")
    if np.any(nodes.types == NodeType.OBSTRUCTION):
        raise ValueError("symmetry error is unsupported for obstructed domains")
    if not (0.0 < y < 1.0):
        raise ValueError("transect height must lie inside the cavity")
    x = np.linspace(0.0, 1.0, samples)
    line = np.column_stack([x, np.full(samples, y)])
    mirror = np.column_stack([1.0 - x, np.full(samples, 1.0 - y)])
    vy = interpolate(np.asarray(v)[:, 1], nodes, stencils, np.vstack([line, mirror]), k, m)
    direct, reflected = vy[:samples], vy[samples:]
    denom = float(np.max(np.abs(direct)))
    if denom == 0.0:
        return 0.0
    return float(np.max(np.abs(direct + reflected))) / denom


def profile(
    values,
    nodes: NodeSet,
    stencils: StencilTable,
    y: float,
    samples: int = 512,
    k: int = 3,
    m: int = 2,
):
    """Interpolated field values along a horizontal transect: (x, value)."""
    x = np.linspace(0.0, 1.0, samples)
    line = np.column_stack([x, np.full(samples, y)])
    return x, interpolate(values, nodes, stencils, line, k, m)


def turan_fit(ra: float, pr: float, n: float) -> float:
    """Closed-form average-Nusselt correlation with a branch at n = 1."""
    if ra <= 0 or pr <= 0 or n <= 0:
        raise ValueError("correlation arguments must be positive")
    if n <= 1:
        c = 1.343 * ra**0.065 * pr**0.036
    else:
        c = 0.858 * ra**0.071 * pr**0.034
    return (
        0.162
        * ra**0.043
        * pr**0.341
        / (1.0 + pr) ** 0.091
        * (ra ** (2.0 - n) / pr**n) ** (1.0 / (2.0 * (n + 1.0)))
        * math.exp(c * (n - 1.0))
    )


def kim_fit(ra: float, n: float) -> float:
    """Power-law average-Nusselt correlation."""
    if ra <= 0 or n <= 0:
        raise ValueError("correlation arguments must be positive")
    return 0.3 * n**0.4 * ra ** (1.0 / (3.0 * n + 1.0))


def detect_steady(times, values, window: float, tol: float) -> bool:
    """True when the trailing window's spread stays below tol times its mean.

    Returns False when the series is shorter than the window.
    """
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if len(times) == 0 or times[-1] - times[0] < window:
        return False
    mask = times >= times[-1] - window
    if np.count_nonzero(mask) < 3:
        return False
    vals = values[mask]
    spread = float(vals.max() - vals.min())
    mean = float(np.mean(vals))
    if mean == 0.0:
        return spread == 0.0
    return spread <= tol * abs(mean)
