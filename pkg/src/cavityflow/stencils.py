"""k-nearest-neighbour stencils over scattered nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class StencilTable:
    """Per-node neighbour lists sorted by distance, self first.

    Ties are broken by the smaller node index so lattice clouds produce
    deterministic stencils.
    """

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, np.int32)
        self.distances = np.ascontiguousarray(self.distances, float)
        self.indices.flags.writeable = False
        self.distances.flags.writeable = False

    @property
    def s(self) -> int:
        return self.indices.shape[1]

    def __len__(self):
        return len(self.indices)


def build_stencils(positions, s: int) -> StencilTable:
    """Exact k-nearest-neighbour stencils under the Euclidean metric."""
    pts = getattr(positions, "positions", positions)
    pts = np.asarray(pts, float)
    n = len(pts)
    if s > n:
        raise ValueError(f"stencil size {s} exceeds node count {n}")
    if s < 1:
        raise ValueError("stencil size must be at least 1")

    tree = cKDTree(pts)
    fetch = min(n, s + 8)
    while True:
        dist, idx = tree.query(pts, k=fetch, workers=-1)
        if fetch == 1:
            dist, idx = dist[:, None], idx[:, None]
        dist, idx = _tie_stable_sort(dist, idx)
        if fetch == n:
            break
        # A tie group straddling the cut needs a wider fetch to resolve.
        unresolved = dist[:, -1] <= dist[:, s - 1] * (1.0 + 2e-9)
        if not np.any(unresolved):
            break
        fetch = min(n, 2 * fetch)
    return StencilTable(idx[:, :s], dist[:, :s])


def _tie_stable_sort(dist, idx):
    """Order neighbours by distance with near-ties broken by node index.

    Distances within a relative 1e-9 of each other count as tied, so the
    ordering survives uniform rescaling and translation of the cloud.
    """
    order = np.lexsort((idx, dist), axis=-1)
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    gaps = np.diff(dist, axis=1) > np.maximum(dist[:, :-1], 1e-300) * 1e-9
    groups = np.concatenate(
        [np.zeros((len(dist), 1), np.int64), np.cumsum(gaps, axis=1)], axis=1
    )
    order = np.lexsort((idx, groups), axis=-1)
    return (
        np.take_along_axis(dist, order, axis=1),
        np.take_along_axis(idx, order, axis=1),
    )
