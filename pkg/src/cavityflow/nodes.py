"""Scattered-node generation for box cavities.

Boundary surfaces are walked with steps of the local target spacing
(corners pinned exactly); the interior is filled by an advancing-front
Poisson disk sweep seeded from the boundary nodes.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import (
    DensityField,
    Domain,
    InfeasibleDiscretisationError,
    eval_density,
)


class NodeType(IntEnum):
    INTERIOR = 0
    WALL_COLD = 1
    WALL_HOT = 2
    WALL_INSULATED = 3
    OBSTRUCTION = 4


BOUNDARY_TYPES = (
    NodeType.WALL_COLD,
    NodeType.WALL_HOT,
    NodeType.WALL_INSULATED,
    NodeType.OBSTRUCTION,
)

DIRICHLET_TYPES = (NodeType.WALL_COLD, NodeType.WALL_HOT)

_FACE_AXES = {"x": 0, "y": 1, "z": 2}


class CapExceededError(RuntimeError):
    """Advancing front grew past the configured node-count cap."""


N_CANDIDATES = 30

_RING = 2.0 * math.pi * np.arange(N_CANDIDATES) / N_CANDIDATES


def _ring_dirs(rng) -> np.ndarray:
    """Equally spaced unit vectors on the circle, randomly rotated."""
    angles = rng.uniform(0.0, 2.0 * math.pi) + _RING
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


_FIB = None


def _fibonacci_sphere() -> np.ndarray:
    global _FIB
    if _FIB is None:
        i = np.arange(N_CANDIDATES) + 0.5
        phi = np.arccos(1.0 - 2.0 * i / N_CANDIDATES)
        theta = math.pi * (1.0 + math.sqrt(5.0)) * i
        _FIB = np.stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
            axis=1,
        )
        _FIB.flags.writeable = False
    return _FIB


def _random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _sphere_dirs(rng) -> np.ndarray:
    """Well-spread unit vectors on the sphere, randomly rotated."""
    return _fibonacci_sphere() @ _random_rotation(rng).T


@dataclass
class NodeSet:
    """Positions plus per-node tag, outward normal and target spacing.

    Boundary nodes come first; ``normals`` rows are zero for interior
    nodes.  Arrays are frozen after construction and safe to share.
    """

    positions: np.ndarray
    types: np.ndarray
    normals: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, float)
        self.types = np.asarray(self.types, np.int8)
        self.normals = np.ascontiguousarray(self.normals, float)
        self.spacing = np.asarray(self.spacing, float)
        for arr in (self.positions, self.types, self.normals, self.spacing):
            arr.flags.writeable = False

    def __len__(self):
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def interior_mask(self) -> np.ndarray:
        return self.types == NodeType.INTERIOR

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.types != NodeType.INTERIOR

    def indices_of(self, node_type: NodeType) -> np.ndarray:
        return np.flatnonzero(self.types == node_type)


def face_id(axis: int, side: int) -> str:
    """Face name like 'x-' from an axis index and side (-1 or +1)."""
    return "xyz"[axis] + ("-" if side < 0 else "+")


def parse_face(face: str, dim: int) -> tuple[int, int]:
    face = face.strip().lower()
    if len(face) != 2 or face[0] not in _FACE_AXES or face[1] not in "+-":
        raise ValueError(f"bad face spec {face!r}, expected like 'x-' or 'y+'")
    axis = _FACE_AXES[face[0]]
    if axis >= dim:
        raise ValueError(f"face {face!r} does not exist in {dim}D")
    return axis, 1 if face[1] == "+" else -1


def default_wall_tags(dim: int) -> tuple[str, str]:
    """(cold, hot) faces: horizontal differential in 2D, vertical in 3D."""
    return ("x-", "x+") if dim == 2 else ("z+", "z-")


def _face_normal(face: str, dim: int) -> np.ndarray:
    axis, side = parse_face(face, dim)
    n = np.zeros(dim)
    n[axis] = side
    return n


def _walk_intervals(length: float, step_at) -> np.ndarray:
    """Positions in [0, length) stepping by ``step_at`` at each point.

    Steps are stretched uniformly so the far end is hit exactly and no
    interval falls below the locally requested step.
    """
    positions = [0.0]
    t = 0.0
    while True:
        h = step_at(t)
        if h <= 0:
            raise InfeasibleDiscretisationError("non-positive spacing on boundary")
        t_next = t + h
        if t_next >= length * (1.0 - 1e-9):
            if abs(t_next - length) <= 1e-9 * length:
                positions.append(t_next)
            break
        positions.append(t_next)
        t = t_next
    if len(positions) < 2:
        raise InfeasibleDiscretisationError(
            f"spacing coarser than boundary segment of length {length:g}"
        )
    scale = length / positions[-1]
    return np.asarray(positions[:-1]) * scale


def _density_on(df, domain, point) -> float:
    return float(eval_density(df, domain, point, check=False))


def _discretize_box_2d(domain, df, tags):
    corners = [
        domain.lower.copy(),
        np.array([domain.upper[0], domain.lower[1]]),
        domain.upper.copy(),
        np.array([domain.lower[0], domain.upper[1]]),
    ]
    # Edge k runs corner k -> k+1 counterclockwise; owning face per edge.
    edge_faces = ["y-", "x+", "y+", "x-"]
    pts, types, normals, spacing = [], [], [], []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        length = float(np.linalg.norm(b - a))
        u = (b - a) / length
        arc = _walk_intervals(length, lambda t: _density_on(df, domain, a + t * u))
        n_vec = _face_normal(edge_faces[k], 2)
        for j, t in enumerate(arc):
            p = a + t * u
            tag, n_here = tags[edge_faces[k]], n_vec
            if j == 0:
                # Corner shared with the previous edge: a Dirichlet wall
                # owns it so constant-temperature data is pinned there.
                tag, n_here = _shared_owner(tags, [edge_faces[k], edge_faces[k - 1]], 2)
            pts.append(p)
            types.append(tag)
            normals.append(n_here)
            spacing.append(_density_on(df, domain, p))
    return pts, types, normals, spacing


def _shared_owner(tags, faces, dim):
    """Tag and normal for a node shared by several box faces."""
    owner = faces[0]
    for f in faces:
        if tags[f] in DIRICHLET_TYPES:
            owner = f
            break
    return tags[owner], _face_normal(owner, dim)


def _walk_circle(domain, df, center, radius):
    """Nodes along a circle with chord lengths of the local spacing."""

    def step_at(theta):
        p = center + radius * np.array([math.cos(theta), math.sin(theta)])
        h = _density_on(df, domain, p)
        return 2.0 * math.asin(min(h / (2.0 * radius), 1.0))

    angles = _walk_intervals(2.0 * math.pi, step_at)
    pts = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    normals = (center - pts) / radius
    return pts, normals


class _ProximityGrid:
    """Uniform background grid for radius queries during node insertion."""

    def __init__(self, cell: float, dim: int, capacity: int = 1024):
        self.cell = cell
        self.dim = dim
        self.cells: dict[tuple, list[int]] = {}
        self.points = np.empty((capacity, dim))
        self.n = 0

    def _key(self, p):
        return tuple(int(math.floor(c / self.cell)) for c in p)

    def insert(self, p):
        if self.n == len(self.points):
            grown = np.empty((2 * len(self.points), self.dim))
            grown[: self.n] = self.points[: self.n]
            self.points = grown
        self.points[self.n] = p
        self.cells.setdefault(self._key(p), []).append(self.n)
        self.n += 1

    def too_close(self, p, radius: float) -> bool:
        """True if any stored point lies strictly within radius of p."""
        key = self._key(p)
        idx: list[int] = []
        if self.dim == 2:
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    got = self.cells.get((key[0] + di, key[1] + dj))
                    if got:
                        idx += got
        else:
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    for dk in (-1, 0, 1):
                        got = self.cells.get((key[0] + di, key[1] + dj, key[2] + dk))
                        if got:
                            idx += got
        if not idx:
            return False
        d2 = np.sum((self.points[idx] - p) ** 2, axis=1)
        return bool(np.any(d2 < radius * radius))


def _front_fill_surface(domain, df, grid, seeds, candidates_at, admissible, rng, max_nodes):
    """Advancing front constrained to one boundary surface.

    ``candidates_at(p, h, rng)`` yields points at (geodesic) distance h
    from p on the surface; ``admissible`` filters points that left the
    patch.  Candidates are tested against all nodes placed so far.
    """
    accepted = []
    queue = deque(seeds)
    while queue:
        p, h_p = queue.popleft()
        for cand in candidates_at(p, h_p, rng):
            if not admissible(cand):
                continue
            h_c = _density_on(df, domain, cand)
            if grid.too_close(cand, h_c):
                continue
            grid.insert(cand)
            accepted.append((cand, h_c))
            queue.append((cand, h_c))
            if grid.n > max_nodes:
                raise CapExceededError(f"boundary fill exceeded {max_nodes} nodes")
    return accepted


def _discretize_box_3d(domain, df, tags, max_nodes):
    rng = np.random.default_rng(0x5EED)
    lo, hi = domain.lower, domain.upper
    grid = _ProximityGrid(df.h2, 3)
    pts, types, normals, spacing = [], [], [], []

    def add(p, tag, n_vec):
        h = _density_on(df, domain, p)
        grid.insert(p)
        pts.append(np.asarray(p, float))
        types.append(tag)
        normals.append(np.asarray(n_vec, float))
        spacing.append(h)

    def faces_of(p):
        out = []
        for ax in range(3):
            if p[ax] == lo[ax]:
                out.append(face_id(ax, -1))
            elif p[ax] == hi[ax]:
                out.append(face_id(ax, 1))
        return out

    corners = [lo + domain.extent * np.array(bits) for bits in np.ndindex(2, 2, 2)]
    for c in corners:
        tag, n_vec = _shared_owner(tags, faces_of(c), 3)
        add(c, tag, n_vec)

    for i, ci in enumerate(corners):
        for j in range(i + 1, len(corners)):
            cj = corners[j]
            if np.count_nonzero(ci != cj) != 1:
                continue
            length = float(np.linalg.norm(cj - ci))
            u = (cj - ci) / length
            arc = _walk_intervals(length, lambda t: _density_on(df, domain, ci + t * u))
            tag, n_vec = _shared_owner(tags, faces_of((ci + cj) / 2.0), 3)
            for t in arc[1:]:
                add(ci + t * u, tag, n_vec)

    def circle_dirs(t1, t2, rng):
        angles = rng.uniform(0.0, 2.0 * math.pi) + _RING
        return np.outer(np.cos(angles), t1) + np.outer(np.sin(angles), t2)

    for axis in range(3):
        for side in (-1, 1):
            fid = face_id(axis, side)
            coord = lo[axis] if side < 0 else hi[axis]
            t1 = np.zeros(3)
            t1[(axis + 1) % 3] = 1.0
            t2 = np.zeros(3)
            t2[(axis + 2) % 3] = 1.0
            n_vec = _face_normal(fid, 3)

            def candidates_at(p, h, rng, t1=t1, t2=t2):
                return p + h * circle_dirs(t1, t2, rng)

            def admissible(q, axis=axis, coord=coord):
                if abs(q[axis] - coord) > 1e-12:
                    return False
                for ax in range(3):
                    if not (lo[ax] - 1e-12 <= q[ax] <= hi[ax] + 1e-12):
                        return False
                for c, r in domain.obstructions:
                    if math.dist(q, c) <= r:
                        return False
                return True

            seeds = [
                (p, h)
                for p, h in zip(pts, spacing)
                if abs(p[axis] - coord) < 1e-12
            ]
            new = _front_fill_surface(
                domain, df, grid, seeds, candidates_at, admissible, rng, max_nodes
            )
            for p, h in new:
                pts.append(p)
                types.append(tags[fid])
                normals.append(n_vec.copy())
                spacing.append(h)
    return pts, types, normals, spacing, grid, rng


_PROBE_DIRS = None


def _probe_directions():
    global _PROBE_DIRS
    if _PROBE_DIRS is None:
        dirs = [d for d in np.ndindex(3, 3, 3) if d != (1, 1, 1)]
        dirs = np.asarray(dirs, float) - 1.0
        _PROBE_DIRS = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    return _PROBE_DIRS


def _sphere_surface(domain, df, grid, center, radius, rng, max_nodes):
    """Advancing front over a sphere; steps follow great circles."""

    def admissible(q):
        if not np.all((q >= domain.lower - 1e-12) & (q <= domain.upper + 1e-12)):
            return False
        for c2, r2 in domain.obstructions:
            if c2 is not center_ref and math.dist(q, c2) <= r2:
                return False
        return True

    center_ref = None
    for c2, r2 in domain.obstructions:
        if np.array_equal(c2, center):
            center_ref = c2
            break

    def candidates_at(p, h, rng):
        radial = (p - center) / radius
        seed_t = np.eye(3)[int(np.argmin(np.abs(radial)))]
        t1 = np.cross(radial, seed_t)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(radial, t1)
        # Rotate along great circles so chord lengths equal h exactly.
        theta = 2.0 * math.asin(min(h / (2.0 * radius), 1.0))
        angles = rng.uniform(0.0, 2.0 * math.pi) + _RING
        tangent = np.outer(np.cos(angles), t1) + np.outer(np.sin(angles), t2)
        return center + radius * (
            math.cos(theta) * radial[None, :] + math.sin(theta) * tangent
        )

    seeds = []
    for v in _probe_directions():
        q = center + radius * v
        if not admissible(q):
            continue
        h = _density_on(df, domain, q)
        if grid.too_close(q, h):
            continue
        grid.insert(q)
        seeds.append((q, h))
        break
    return seeds + _front_fill_surface(
        domain, df, grid, seeds, candidates_at, admissible, rng, max_nodes
    )


def discretize_boundary(
    domain: Domain,
    df: DensityField,
    cold_face: str | None = None,
    hot_face: str | None = None,
    max_nodes: int = 2_000_000,
) -> NodeSet:
    """Place tagged nodes with outward normals on every wall and obstruction.

    Cold/hot faces default to the horizontal pair in 2D and the vertical
    pair in 3D; the remaining box faces are insulated and obstruction
    surfaces are tagged as such (insulated, no-slip).
    """
    df.validate_for(domain)
    d_cold, d_hot = default_wall_tags(domain.dim)
    cold_face = cold_face or d_cold
    hot_face = hot_face or d_hot
    if parse_face(cold_face, domain.dim) == parse_face(hot_face, domain.dim):
        raise ValueError("cold and hot walls must differ")

    tags = {}
    for axis in range(domain.dim):
        for side in (-1, 1):
            tags[face_id(axis, side)] = NodeType.WALL_INSULATED
    tags[face_id(*parse_face(cold_face, domain.dim))] = NodeType.WALL_COLD
    tags[face_id(*parse_face(hot_face, domain.dim))] = NodeType.WALL_HOT

    if domain.dim == 2:
        pts, types, normals, spacing = _discretize_box_2d(domain, df, tags)
        for center, radius in domain.obstructions:
            cpts, cnormals = _walk_circle(domain, df, np.asarray(center), radius)
            for p, n_vec in zip(cpts, cnormals):
                pts.append(p)
                types.append(NodeType.OBSTRUCTION)
                normals.append(n_vec)
                spacing.append(_density_on(df, domain, p))
    else:
        pts, types, normals, spacing, grid, rng = _discretize_box_3d(
            domain, df, tags, max_nodes
        )
        for center, radius in domain.obstructions:
            c = np.asarray(center, float)
            new = _sphere_surface(domain, df, grid, c, radius, rng, max_nodes)
            for p, h in new:
                pts.append(p)
                types.append(NodeType.OBSTRUCTION)
                normals.append((c - p) / radius)
                spacing.append(h)

    pts = np.asarray(pts)
    types = np.asarray(types, np.int8)
    normals = np.asarray(normals)
    spacing = np.asarray(spacing)

    # Drop nodes swallowed by another feature (overlapping obstructions,
    # spheres poking through walls).
    keep = domain.contains(pts, tol=1e-9 * domain.size)
    pts, types, normals, spacing = pts[keep], types[keep], normals[keep], spacing[keep]
    if len(pts) == 0:
        raise InfeasibleDiscretisationError("no boundary nodes survive the geometry")

    _check_feasible(pts, spacing)
    return NodeSet(pts, types, normals, spacing)


def _check_feasible(pts, spacing):
    from scipy.spatial import cKDTree

    tree = cKDTree(pts)
    pairs = tree.query_pairs(r=float(np.max(spacing)), output_type="ndarray")
    if len(pairs) == 0:
        return
    d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
    h_min = np.minimum(spacing[pairs[:, 0]], spacing[pairs[:, 1]])
    bad = d < h_min * (1.0 - 1e-8)
    if np.any(bad):
        i, j = pairs[np.argmax(bad)]
        raise InfeasibleDiscretisationError(
            f"boundary nodes {i} and {j} are {d[bad].min():.3g} apart, "
            "closer than the local spacing; geometry feature finer than density"
        )


def _scalar_density(df, domain, p):
    # Fast path used inside the fill loop; mirrors eval_density.
    d = min(p[i] - domain.lower[i] for i in range(domain.dim))
    d = min(d, min(domain.upper[i] - p[i] for i in range(domain.dim)))
    for c, r in domain.obstructions:
        d = min(d, math.dist(p, c) - r)
    d = max(d, 0.0)
    if df.kind == "constant":
        return df.h1
    half = domain.size / 2.0
    if d < df.w:
        h = df.h1
    else:
        blend = min(max((d - df.w) / (half - df.w), 0.0), 1.0)
        h = df.h1 + blend * (df.h2 - df.h1)
    if df.kind == "channel_refined":
        from .geometry import _channel_gap

        gap = _channel_gap(domain, np.asarray(p, float), step=df.h1 / 4.0, max_span=half)
        h = min(h, max(gap / df.channel_min_nodes, df.h1 / 8.0))
    return h


def _scalar_inside(domain, p):
    for i in range(domain.dim):
        if not (domain.lower[i] < p[i] < domain.upper[i]):
            return False
    for c, r in domain.obstructions:
        if math.dist(p, c) <= r:
            return False
    return True


def fill_interior(
    domain: Domain,
    df: DensityField,
    boundary: NodeSet,
    seed: int,
    max_nodes: int = 2_000_000,
) -> NodeSet:
    """Fill the fluid region with interior nodes by an advancing front.

    Each dequeued node spawns candidates spread over the circle or
    sphere of its own spacing; a candidate is kept when it lies in the
    open fluid region and no existing node is within the candidate's
    spacing.  Deterministic for a fixed seed.
    """
    if len(boundary) == 0:
        raise ValueError("boundary must be discretised before filling the interior")
    df.validate_for(domain)
    dim = domain.dim
    rng = np.random.default_rng(seed)
    grid = _ProximityGrid(df.h2, dim, capacity=max(1024, 2 * len(boundary)))
    for p in boundary.positions:
        grid.insert(p)

    new_pts: list[np.ndarray] = []
    new_h: list[float] = []
    queue = deque(zip(boundary.positions, boundary.spacing))
    while queue:
        p, h_p = queue.popleft()
        dirs = _ring_dirs(rng) if dim == 2 else _sphere_dirs(rng)
        produced = False
        for v in dirs:
            cand = p + h_p * v
            if not _scalar_inside(domain, cand):
                continue
            h_c = _scalar_density(df, domain, cand)
            if grid.too_close(cand, h_c):
                continue
            grid.insert(cand)
            new_pts.append(cand)
            new_h.append(h_c)
            queue.append((cand, h_c))
            produced = True
            if len(boundary) + len(new_pts) > max_nodes:
                raise CapExceededError(f"interior fill exceeded {max_nodes} nodes")
        if produced:
            # A node stays on the front until a candidate round yields
            # nothing; earlier accepted candidates block later ones.
            queue.append((p, h_p))

    n_new = len(new_pts)
    positions = np.vstack(
        [boundary.positions, np.asarray(new_pts).reshape(n_new, dim)]
    )
    types = np.concatenate([boundary.types, np.full(n_new, NodeType.INTERIOR, np.int8)])
    normals = np.vstack([boundary.normals, np.zeros((n_new, dim))])
    spacing = np.concatenate([boundary.spacing, np.asarray(new_h)])
    return NodeSet(positions, types, normals, spacing)


def generate_nodes(
    domain: Domain,
    df: DensityField,
    seed: int = 0,
    cold_face: str | None = None,
    hot_face: str | None = None,
    max_nodes: int = 2_000_000,
) -> NodeSet:
    """Boundary discretisation followed by the interior fill."""
    boundary = discretize_boundary(domain, df, cold_face, hot_face, max_nodes)
    return fill_interior(domain, df, boundary, seed, max_nodes)


def save_nodes(nodes: NodeSet, path) -> None:
    """Write one row per node: x[,y[,z]],type,nx[,ny[,nz]],h."""
    dim = nodes.dim
    axes = "xyz"[:dim]
    header = ",".join(axes) + ",type," + ",".join("n" + a for a in axes) + ",h"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p, t, n_vec, h in zip(nodes.positions, nodes.types, nodes.normals, nodes.spacing):
            cols = ["%.17g" % c for c in p]
            cols.append(NodeType(t).name.lower())
            cols += ["%.17g" % c for c in n_vec]
            cols.append("%.17g" % h)
            fh.write(",".join(cols) + "\n")


def load_nodes(path) -> NodeSet:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        dim = header.index("type")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    positions = np.array([[float(c) for c in r[:dim]] for r in rows])
    types = np.array([NodeType[r[dim].upper()] for r in rows], np.int8)
    normals = np.array([[float(c) for c in r[dim + 1 : 2 * dim + 1]] for r in rows])
    spacing = np.array([float(r[2 * dim + 1]) for r in rows])
    return NodeSet(positions, types, normals, spacing)
