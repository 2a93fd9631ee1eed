"""Local differentiation weights from polyharmonic splines plus monomials.

For each node, collocation on its stencil with the radial basis r**k and
all monomials up to total order m yields weight vectors that turn stencil
field samples into Laplacian or first-derivative values at the node.
Offsets are scaled by the distance to the nearest stencil neighbour so the
local systems are independent of the coordinate scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .stencils import StencilTable

LAPLACIAN = "laplacian"
DERIVATIVES = ("dx", "dy", "dz")


class DegenerateStencilError(RuntimeError):
    """Stencil geometry cannot support the requested approximation."""


def derivative_tag(axis: int) -> str:
    return DERIVATIVES[axis]


def gradient_tags(dim: int) -> tuple[str, ...]:
    return DERIVATIVES[:dim]


def default_operators(dim: int) -> tuple[str, ...]:
    return (LAPLACIAN,) + gradient_tags(dim)


def operator_order(op: str) -> int:
    if op == LAPLACIAN:
        return 2
    if op in DERIVATIVES:
        return 1
    raise ValueError(f"unknown operator tag {op!r}")


def monomial_count(m: int, dim: int) -> int:
    """Number of monomials of total order up to m in dim variables."""
    return math.comb(m + dim, m)


def monomial_exponents(m: int, dim: int) -> np.ndarray:
    """Exponent tuples of all monomials with total order <= m, graded."""
    expo = []
    for deg in range(m + 1):
        for combo in itertools.combinations_with_replacement(range(dim), deg):
            e = [0] * dim
            for axis in combo:
                e[axis] += 1
            expo.append(e)
    return np.asarray(expo, np.int64)


def _monomial_rhs(expo: np.ndarray, op: str, dim: int) -> np.ndarray:
    """Operator applied to each scaled monomial, evaluated at the origin."""
    c = np.zeros(len(expo))
    if op == LAPLACIAN:
        for axis in range(dim):
            probe = np.zeros(dim, np.int64)
            probe[axis] = 2
            c[np.all(expo == probe, axis=1)] = 2.0
    else:
        axis = DERIVATIVES.index(op)
        probe = np.zeros(dim, np.int64)
        probe[axis] = 1
        c[np.all(expo == probe, axis=1)] = 1.0
    return c


def _phs_rhs(scaled: np.ndarray, radii: np.ndarray, op: str, k: int) -> np.ndarray:
    """Operator applied to r**k centred at each stencil node, at the origin."""
    dim = scaled.shape[1]
    if op == LAPLACIAN:
        return k * (k + dim - 2) * radii ** (k - 2)
    axis = DERIVATIVES.index(op)
    return -k * radii ** (k - 2) * scaled[:, axis]


def _solve_saddle(matrix, rhs, node=None):
    try:
        sol = np.linalg.solve(matrix, rhs)
        if np.all(np.isfinite(sol)):
            return sol
    except np.linalg.LinAlgError:
        pass
    # Lattice-symmetric stencils can make the saddle system singular while
    # the weights themselves stay uniquely determined; fall back to a
    # least-squares solve and accept it only if it actually solves the system.
    sol, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
    residual = np.abs(matrix @ sol - rhs).max()
    scale = 1.0 + np.abs(rhs).max()
    if not np.all(np.isfinite(sol)) or residual > 1e-8 * scale:
        where = f" at node {node}" if node is not None else ""
        raise DegenerateStencilError(
            f"singular stencil system{where} (residual {residual:.2e})"
        )
    return sol


def _weights_multi(pts, ops, k, m, node=None):
    """Weight vectors (one per operator) for a single stencil.

    pts[0] is the node the operators are evaluated at.
    """
    pts = np.asarray(pts, float)
    s, dim = pts.shape
    offsets = pts - pts[0]
    radii = np.linalg.norm(offsets, axis=1)
    if s < 2 or radii[1:].min() == 0.0:
        raise DegenerateStencilError(
            f"stencil{' at node ' + str(node) if node is not None else ''} "
            "has coincident nodes"
        )
    delta = radii[1:].min()
    scaled = offsets / delta
    radii = radii / delta

    diff = scaled[:, None, :] - scaled[None, :, :]
    a_block = np.sqrt(np.sum(diff * diff, axis=2)) ** k

    expo = monomial_exponents(m, dim)
    n_p = len(expo)
    q_block = np.prod(scaled[:, None, :] ** expo[None, :, :], axis=2)

    size = s + n_p
    matrix = np.zeros((size, size))
    matrix[:s, :s] = a_block
    matrix[:s, s:] = q_block
    matrix[s:, :s] = q_block.T

    rhs = np.zeros((size, len(ops)))
    for col, op in enumerate(ops):
        rhs[:s, col] = _phs_rhs(scaled, radii, op, k)
        rhs[s:, col] = _monomial_rhs(expo, op, dim)

    sol = _solve_saddle(matrix, rhs, node)
    weights = np.empty((len(ops), s))
    for col, op in enumerate(ops):
        weights[col] = sol[:s, col] / delta ** operator_order(op)
    return weights, delta


def shape_weights(positions, stencil, op: str, k: int = 3, m: int = 2) -> np.ndarray:
    """Weight vector for one operator on one stencil.

    Parameters
    ----------
    positions : (n, d) array or NodeSet
        All node positions.
    stencil : sequence of int
        Stencil member indices, the evaluation node first.
    op : str
        'laplacian' or one of 'dx', 'dy', 'dz'.
    k : odd int
        Polyharmonic order of the basis r**k.
    m : int
        Monomial augmentation order; needs m >= (k - 1) / 2.
    """
    _validate_orders(k, m)
    pts = getattr(positions, "positions", positions)
    pts = np.asarray(pts, float)[np.asarray(stencil, int)]
    weights, _ = _weights_multi(pts, [op], k, m)
    return weights[0]


def _validate_orders(k, m):
    if k < 3 or k % 2 == 0:
        raise ValueError("polyharmonic order k must be odd and >= 3")
    if m < (k - 1) // 2:
        raise ValueError(f"augmentation order m={m} too low for k={k}")


@dataclass
class OperatorWeights:
    """Precomputed weights for a set of operators over all nodes."""

    stencil: StencilTable
    weights: dict = field(default_factory=dict)
    delta: np.ndarray = None
    k: int = 3
    m: int = 2

    @property
    def operators(self) -> tuple:
        return tuple(self.weights)

    def apply(self, op: str, fields: np.ndarray) -> np.ndarray:
        """Operator values at every node for one or more stacked fields."""
        w = self.weights[op]
        gathered = np.asarray(fields)[..., self.stencil.indices]
        return np.einsum("ns,...ns->...n", w, gathered)


def apply_operator(ws: OperatorWeights, op: str, values, i: int) -> float:
    """Dot product of one node's weights with its stencil samples."""
    idx = ws.stencil.indices[i]
    return float(np.dot(ws.weights[op][i], np.asarray(values, float)[idx]))


def batch_weights(
    positions,
    stencil: StencilTable,
    ops=None,
    k: int = 3,
    m: int = 2,
) -> OperatorWeights:
    """Weights for all requested operators at every node.

    Raises DegenerateStencilError naming the node when a local system
    cannot be solved.
    """
    _validate_orders(k, m)
    pts = getattr(positions, "positions", positions)
    pts = np.asarray(pts, float)
    if ops is None:
        ops = default_operators(pts.shape[1])
    ops = list(ops)
    n = len(stencil)
    out = {op: np.empty((n, stencil.s)) for op in ops}
    delta = np.empty(n)
    for i in range(n):
        w, d_i = _weights_multi(pts[stencil.indices[i]], ops, k, m, node=i)
        for col, op in enumerate(ops):
            out[op][i] = w[col]
        delta[i] = d_i
    return OperatorWeights(stencil, out, delta, k, m)


def dump_weights(ws: OperatorWeights, op: str, path) -> None:
    """Debug CSV with one row per (node, stencil slot)."""
    with open(path, "w") as fh:
        fh.write("node,index,weight\n")
        w = ws.weights[op]
        for i in range(len(w)):
            for j, widx in enumerate(ws.stencil.indices[i]):
                fh.write(f"{i},{widx},{w[i, j]:.17g}\n")
