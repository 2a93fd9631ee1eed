"""Box domains with spherical obstructions and target-spacing fields.

The fluid region is an axis-aligned box minus the interiors of a set of
spheres (circles in 2D).  Node spacing is prescribed by a density field
evaluated from the distance to the closest boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Point outside the fluid region, or invalid geometry."""


class InfeasibleDiscretisationError(ValueError):
    """Requested spacing is coarser than the smallest geometric feature."""


@dataclass
class Domain:
    """Axis-aligned box, optionally with spherical obstructions.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    lower, upper : array-like
        Box corners, ``lower[i] < upper[i]``.
    obstructions : list of (center, radius)
        Spheres excluded from the fluid region; centers must lie inside
        the box and radii must be positive.
    """

    dim: int = 2
    lower: np.ndarray = None
    upper: np.ndarray = None
    obstructions: list = field(default_factory=list)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DomainError(f"dim must be 2 or 3, got {self.dim}")
        self.lower = np.zeros(self.dim) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.ones(self.dim) if self.upper is None else np.asarray(self.upper, float)
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise DomainError("lower/upper must be d-vectors")
        if not np.all(self.lower < self.upper):
            raise DomainError("lower must be strictly below upper in every axis")
        obs = []
        for center, radius in self.obstructions:
            c = np.asarray(center, float)
            if c.shape != (self.dim,):
                raise DomainError("obstruction center must be a d-vector")
            if not (radius > 0):
                raise DomainError("obstruction radius must be positive")
            if not np.all((c > self.lower) & (c < self.upper)):
                raise DomainError("obstruction center must lie inside the box")
            obs.append((c, float(radius)))
        self.obstructions = obs
        if obs and not self._connected():
            raise DomainError("fluid region is disconnected")

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def size(self) -> float:
        """Characteristic cavity size: the smallest box extent."""
        return float(np.min(self.extent))

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the closed fluid region."""
        p = np.atleast_2d(np.asarray(points, float))
        ok = np.all(p >= self.lower - tol, axis=1) & np.all(p <= self.upper + tol, axis=1)
        for c, r in self.obstructions:
            ok &= np.linalg.norm(p - c, axis=1) >= r - tol
        return ok

    def strictly_inside(self, points) -> np.ndarray:
        """Boolean mask of points in the open fluid region."""
        p = np.atleast_2d(np.asarray(points, float))
        ok = np.all(p > self.lower, axis=1) & np.all(p < self.upper, axis=1)
        for c, r in self.obstructions:
            ok &= np.linalg.norm(p - c, axis=1) > r
        return ok

    def _connected(self, cells_per_axis: int = 0) -> bool:
        # Heuristic flood fill over a coarse probe lattice.
        if not cells_per_axis:
            cells_per_axis = 48 if self.dim == 2 else 20
        axes = [
            np.linspace(self.lower[i], self.upper[i], cells_per_axis + 2)[1:-1]
            for i in range(self.dim)
        ]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        fluid = self.contains(grid.reshape(-1, self.dim)).reshape(grid.shape[:-1])
        if not fluid.any():
            return False
        seen = np.zeros_like(fluid)
        start = tuple(np.argwhere(fluid)[0])
        stack = [start]
        seen[start] = True
        shape = fluid.shape
        while stack:
            cell = stack.pop()
            for ax in range(self.dim):
                for step in (-1, 1):
                    nb = list(cell)
                    nb[ax] += step
                    if not (0 <= nb[ax] < shape[ax]):
                        continue
                    nb = tuple(nb)
                    if fluid[nb] and not seen[nb]:
                        seen[nb] = True
                        stack.append(nb)
        return bool(np.all(seen[fluid]))


def distance_to_boundary(domain: Domain, points) -> np.ndarray | float:
    """Euclidean distance to the nearest wall or obstruction surface.

    Clamped at zero, so boundary points return exactly 0.  Accepts a
    single point or an (n, d) array.
    """
    p = np.asarray(points, float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    d = np.minimum((p - domain.lower).min(axis=1), (domain.upper - p).min(axis=1))
    for c, r in domain.obstructions:
        d = np.minimum(d, np.linalg.norm(p - c, axis=1) - r)
    d = np.maximum(d, 0.0)
    return float(d[0]) if single else d


def _inward_direction(domain: Domain, p: np.ndarray) -> np.ndarray:
    """Unit direction from the nearest boundary feature towards p."""
    best = np.inf
    direction = np.zeros(domain.dim)
    for ax in range(domain.dim):
        d_lo = p[ax] - domain.lower[ax]
        if d_lo < best:
            best = d_lo
            direction = np.eye(domain.dim)[ax]
        d_hi = domain.upper[ax] - p[ax]
        if d_hi < best:
            best = d_hi
            direction = -np.eye(domain.dim)[ax]
    for c, r in domain.obstructions:
        off = p - c
        rho = np.linalg.norm(off)
        if rho - r < best and rho > 0:
            best = rho - r
            direction = off / rho
    return direction


def _channel_gap(domain: Domain, p: np.ndarray, step: float, max_span: float) -> float:
    """Estimate the local channel width by probing towards the midline.

    Marches from p away from the nearest boundary while the distance to
    the boundary keeps increasing; twice the peak distance approximates
    the gap between the two facing surfaces.
    """
    u = _inward_direction(domain, p)
    d_peak = distance_to_boundary(domain, p)
    q = p.copy()
    travelled = 0.0
    while travelled < max_span:
        q = q + step * u
        travelled += step
        if not domain.contains(q[None])[0]:
            break
        d = distance_to_boundary(domain, q)
        if d <= d_peak:
            break
        d_peak = d
    return 2.0 * d_peak


DENSITY_KINDS = ("constant", "boundary_refined", "channel_refined")


@dataclass
class DensityField:
    """Target internodal spacing as a function of position.

    ``constant`` uses h1 everywhere.  The refined kinds place spacing h1
    within a band of width w from the boundary and blend linearly to h2
    at the domain centre; ``channel_refined`` additionally caps the
    spacing so narrow gaps hold at least ``channel_min_nodes`` nodes,
    dropping below h1 where a channel is narrower than that (never
    below h1 / 8).
    """

    kind: str = "constant"
    h1: float = 0.02
    h2: float = None
    w: float = 0.0
    channel_min_nodes: int = 2

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.h2 is None:
            self.h2 = self.h1
        if not (0 < self.h1 <= self.h2):
            raise ValueError("need 0 < h1 <= h2")
        if self.kind != "constant" and not (self.w > 0):
            raise ValueError("refined density needs a band width w > 0")
        if self.channel_min_nodes < 2:
            raise ValueError("channel_min_nodes must be >= 2")

    def validate_for(self, domain: Domain):
        if self.kind != "constant" and not (self.w < domain.size / 2):
            raise ValueError("band width w must be below half the cavity size")


def eval_density(
    df: DensityField, domain: Domain, points, check: bool = True
) -> np.ndarray | float:
    """Target spacing at one or many points of the fluid region."""
    p = np.asarray(points, float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if check and not np.all(domain.contains(p, tol=1e-12 * domain.size)):
        raise DomainError("density requested outside the fluid region")
    if df.kind == "constant":
        h = np.full(len(p), df.h1)
        return float(h[0]) if single else h

    d = distance_to_boundary(domain, p)
    half = domain.size / 2.0
    blend = np.clip((d - df.w) / (half - df.w), 0.0, 1.0)
    h = np.where(d < df.w, df.h1, df.h1 + blend * (df.h2 - df.h1))

    if df.kind == "channel_refined":
        # Cap by the local gap so that channel_min_nodes nodes span it;
        # undercuts h1 in channels narrower than that band.
        for i, q in enumerate(p):
            gap = _channel_gap(domain, q, step=df.h1 / 4.0, max_span=half)
            h[i] = min(h[i], max(gap / df.channel_min_nodes, df.h1 / 8.0))
    return float(h[0]) if single else h
