"""Explicit Euler time stepping with pressure projection.

Each step takes a pressure-free momentum predictor, solves a Poisson
equation for the pressure correction that restores a divergence-free
velocity, and advances the temperature with the corrected velocity.
Power-law viscosity is re-evaluated from the velocity gradients after
every step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .config import CaseConfig
from .geometry import DensityField, Domain
from .nodes import NodeSet, NodeType, generate_nodes
from .operators import (
    LAPLACIAN,
    DegenerateStencilError,
    OperatorWeights,
    _weights_multi,
    batch_weights,
    default_operators,
    gradient_tags,
)
from .physics import PhysicalParams, from_dimensionless
from .stencils import StencilTable, build_stencils


class SolverDivergedError(RuntimeError):
    """Time stepping produced non-finite values."""

    def __init__(self, message, step=None, t=None, node=None, checkpoint=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.node = node
        self.checkpoint = checkpoint


class PressureSolveError(RuntimeError):
    """Neither the Krylov solve nor the direct fallback met the tolerance."""


@dataclass
class State:
    """Nodal fields at one time level."""

    v: np.ndarray
    T: np.ndarray
    p: np.ndarray
    eta: np.ndarray
    t: float = 0.0

    def copy(self) -> "State":
        return State(self.v.copy(), self.T.copy(), self.p.copy(), self.eta.copy(), self.t)


@dataclass
class Discretization:
    """Node cloud with stencils, packed operator weights and masks.

    Boundary normal-derivative rows (pressure Neumann condition and
    insulated-wall temperatures) are built on stencils anchored to the
    interior: the node itself plus its nearest interior nodes.  Rows
    built on plain nearest-neighbour stencils couple wall nodes to each
    other and admit wall-tangential sawtooth modes that destabilise the
    projection.
    """

    nodes: NodeSet
    stencils: StencilTable
    ops: OperatorWeights
    w_lap: np.ndarray = None
    w_grad: np.ndarray = None
    interior: np.ndarray = None
    bnd_idx: np.ndarray = None
    bnd_st: np.ndarray = None
    bnd_normal_row: np.ndarray = None

    def __post_init__(self):
        nodes, ops = self.nodes, self.ops
        dim = nodes.dim
        self.w_lap = np.ascontiguousarray(ops.weights[LAPLACIAN])
        self.w_grad = np.ascontiguousarray(
            np.stack([ops.weights[tag] for tag in gradient_tags(dim)], axis=1)
        )
        self.interior = np.flatnonzero(nodes.interior_mask).astype(np.int64)
        self.bnd_idx = np.flatnonzero(nodes.boundary_mask).astype(np.int64)
        self._build_boundary_rows()
        ins_mask = (nodes.types == NodeType.WALL_INSULATED) | (
            nodes.types == NodeType.OBSTRUCTION
        )
        self._ins_rows = np.flatnonzero(ins_mask[self.bnd_idx])

    def _build_boundary_rows(self):
        from scipy.spatial import cKDTree

        nodes, ops = self.nodes, self.ops
        s = self.stencils.s
        if len(self.interior) < s - 1:
            raise DegenerateStencilError("too few interior nodes for boundary rows")
        tree = cKDTree(nodes.positions[self.interior])
        _, near = tree.query(nodes.positions[self.bnd_idx], k=s - 1)
        near = np.atleast_2d(near)
        self.bnd_st = np.concatenate(
            [self.bnd_idx[:, None], self.interior[near]], axis=1
        ).astype(np.int32)
        grads = gradient_tags(nodes.dim)
        rows = np.empty((len(self.bnd_idx), s))
        for r, b in enumerate(self.bnd_idx):
            w, _ = _weights_multi(
                nodes.positions[self.bnd_st[r]], grads, ops.k, ops.m, node=int(b)
            )
            rows[r] = nodes.normals[b] @ w
        scale = np.abs(rows).max(axis=1)
        bad = np.abs(rows[:, 0]) < 1e-10 * scale
        if np.any(bad):
            raise DegenerateStencilError(
                f"boundary node {self.bnd_idx[np.argmax(bad)]} has a vanishing "
                "self-coefficient in its normal-derivative row"
            )
        self.bnd_normal_row = rows

    def apply_insulation(self, T: np.ndarray) -> None:
        """Set insulated-wall values so the normal derivative vanishes.

        Each row references only the node itself and interior nodes, so
        this is one independent scalar solve per boundary node.
        """
        rows = self._ins_rows
        if len(rows) == 0:
            return
        coef = self.bnd_normal_row[rows]
        acc = np.einsum("ks,ks->k", coef[:, 1:], T[self.bnd_st[rows][:, 1:]])
        T[self.bnd_idx[rows]] = -acc / coef[:, 0]

    @property
    def dim(self) -> int:
        return self.nodes.dim

    def wall_values(self, params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
        cold = self.nodes.indices_of(NodeType.WALL_COLD)
        hot = self.nodes.indices_of(NodeType.WALL_HOT)
        return cold, hot


def build_discretization(
    nodes: NodeSet | None = None,
    s: int = 12,
    k: int = 3,
    m: int = 2,
    domain: Domain | None = None,
    df: DensityField | None = None,
    seed: int = 0,
    cold_face=None,
    hot_face=None,
    max_nodes: int = 2_000_000,
) -> Discretization:
    if nodes is None:
        if domain is None or df is None:
            raise ValueError("either nodes or (domain, df) must be given")
        nodes = generate_nodes(domain, df, seed, cold_face, hot_face, max_nodes)
    st = build_stencils(nodes.positions, s)
    ops = batch_weights(nodes.positions, st, default_operators(nodes.dim), k, m)
    return Discretization(nodes, st, ops)


def initial_state(
    disc: Discretization, params: PhysicalParams, temperature: str = "zero"
) -> State:
    n = len(disc.nodes)
    v = np.zeros((n, disc.dim))
    cold = disc.nodes.indices_of(NodeType.WALL_COLD)
    hot = disc.nodes.indices_of(NodeType.WALL_HOT)
    if temperature == "linear" and len(cold) and len(hot):
        # conduction profile along the differential axis; removes most of
        # the slowly relaxing thermal mode from the spin-up
        axis = int(np.argmax(np.abs(disc.nodes.normals[cold[0]])))
        x = disc.nodes.positions[:, axis]
        x_c = disc.nodes.positions[cold[0], axis]
        x_h = disc.nodes.positions[hot[0], axis]
        T = params.T_C + (params.T_H - params.T_C) * (x - x_c) / (x_h - x_c)
    else:
        T = np.zeros(n)
    T[cold] = params.T_C
    T[hot] = params.T_H
    state = State(v, T, np.zeros(n), np.zeros(n))
    state.eta = compute_viscosity(state, disc, params)
    return state


def compute_viscosity(
    state: State,
    disc: Discretization,
    params: PhysicalParams,
    convention: str = "printed",
    floor: float = 1e-10,
    grad: np.ndarray | None = None,
) -> np.ndarray:
    """Power-law viscosity from the symmetrised velocity gradients."""
    if grad is None:
        grad = kernels.grad_tensor(state.v, disc.stencils.indices, disc.w_grad)
    return kernels.viscosity_from_gradients(
        grad, params.eta0, params.n, floor, convention
    )


def momentum_predictor(
    state: State,
    disc: Discretization,
    params: PhysicalParams,
    dt: float,
    grad: np.ndarray | None = None,
) -> np.ndarray:
    """Non-pressure forces applied over one step; no-slip rows stay zero.

    The divergence of the viscous stress is expanded into eta times the
    component Laplacians plus the viscosity gradient contracted with the
    velocity gradients, reusing the two precomputed weight families.
    """
    if grad is None:
        grad = kernels.grad_tensor(state.v, disc.stencils.indices, disc.w_grad)
    g_beta = params.g * params.beta
    vstar = kernels.predictor(
        state.v,
        state.T,
        state.eta,
        grad,
        disc.stencils.indices,
        disc.w_lap,
        disc.w_grad,
        disc.interior,
        g_beta,
        params.rho,
        dt,
    )
    peak = float(np.max(np.abs(vstar))) if len(vstar) else 0.0
    if not np.isfinite(peak):
        node = int(np.argmax(~np.isfinite(vstar).all(axis=1)))
        raise SolverDivergedError(
            f"predictor produced non-finite velocity at node {node}", node=node
        )
    return vstar


def divergence_of(v: np.ndarray, disc: Discretization) -> np.ndarray:
    """Nodal divergence at interior nodes (zero on the boundary rows)."""
    return kernels.divergence(v, disc.stencils.indices, disc.w_grad, disc.interior)


@dataclass
class PressureSystem:
    """Poisson system enforcing zero divergence after the correction.

    Interior rows apply the exact composition of the discrete divergence
    with the discrete pressure gradient (restricted to the rows the
    correction actually updates), so the corrected velocity is discretely
    divergence-free up to the solver tolerance.  Boundary rows enforce a
    homogeneous normal derivative and one reference row pins the level.
    The operator is applied matrix-free; the plain Laplacian-weight
    matrix, which is spectrally close, serves as the preconditioner and
    the right-hand side is scaled by rho / dt at solve time.
    """

    disc: Discretization
    lap_matrix: sp.csr_matrix
    pin: int
    rho: float
    _precond: object = field(default=None, repr=False)
    _lu: object = field(default=None, repr=False)
    _full: object = field(default=None, repr=False)
    _direct_streak: int = field(default=0, repr=False)
    _solves: int = field(default=0, repr=False)

    def rhs(self, div_vstar: np.ndarray, dt: float) -> np.ndarray:
        b = (self.rho / dt) * div_vstar
        b[self.pin] = 0.0
        return b

    def matvec(self, p: np.ndarray) -> np.ndarray:
        disc = self.disc
        p = np.asarray(p, float)
        g = kernels.grad_scalar(p, disc.stencils.indices, disc.w_grad)
        g[disc.bnd_idx] = 0.0  # no-slip rows are never corrected
        out = kernels.divergence(g, disc.stencils.indices, disc.w_grad, disc.interior)
        out[disc.bnd_idx] = np.einsum(
            "ks,ks->k", disc.bnd_normal_row, p[disc.bnd_st]
        )
        out[self.pin] = p[self.pin]  # pin is a wall node
        return out

    @property
    def operator(self) -> spla.LinearOperator:
        n = self.lap_matrix.shape[0]
        return spla.LinearOperator((n, n), matvec=self.matvec)

    def preconditioner(self):
        if self._precond is None:
            try:
                lu = spla.splu(self.lap_matrix.tocsc())
                self._precond = spla.LinearOperator(self.lap_matrix.shape, lu.solve)
            except RuntimeError:
                self._precond = False
        return self._precond or None

    def full_matrix(self) -> sp.csr_matrix:
        """Sparse assembly of the composed operator (direct fallback)."""
        if self._full is None:
            disc = self.disc
            n = self.lap_matrix.shape[0]
            st = disc.stencils.indices
            rows = np.repeat(np.arange(n), st.shape[1])
            interior_mask = disc.nodes.interior_mask
            total = None
            for a in range(disc.dim):
                data_g = disc.w_grad[:, a, :].copy()
                data_g[disc.bnd_idx] = 0.0
                g_a = sp.csr_matrix(
                    (data_g.ravel(), (rows, st.ravel())), shape=(n, n)
                )
                data_d = disc.w_grad[:, a, :].copy()
                data_d[~interior_mask] = 0.0
                d_a = sp.csr_matrix(
                    (data_d.ravel(), (rows, st.ravel())), shape=(n, n)
                )
                prod = d_a @ g_a
                total = prod if total is None else total + prod
            keep = interior_mask.copy()
            keep[self.pin] = False
            total = sp.diags(keep.astype(float)) @ total
            bnd_rows = np.flatnonzero(disc.bnd_idx != self.pin)
            bnd = disc.bnd_idx[bnd_rows]
            extra_rows = np.concatenate([np.repeat(bnd, st.shape[1]), [self.pin]])
            extra_cols = np.concatenate([disc.bnd_st[bnd_rows].ravel(), [self.pin]])
            extra_data = np.concatenate([disc.bnd_normal_row[bnd_rows].ravel(), [1.0]])
            total = total + sp.csr_matrix(
                (extra_data, (extra_rows, extra_cols)), shape=(n, n)
            )
            self._full = total.tocsr()
        return self._full

    def lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.full_matrix().tocsc())
            except RuntimeError as exc:
                raise PressureSolveError(f"pressure matrix factorisation failed: {exc}")
        return self._lu


def assemble_pressure_poisson(
    disc: Discretization, params: PhysicalParams, dt: float = 1.0
) -> PressureSystem:
    st = disc.stencils
    n, s = st.indices.shape
    # Pinning a wall node keeps every interior divergence equation; the
    # lost condition is one approximate Neumann row.
    pin = int(disc.bnd_idx[0]) if len(disc.bnd_idx) else 0
    bnd = disc.bnd_idx[disc.bnd_idx != pin]
    bnd_rows = np.flatnonzero(disc.bnd_idx != pin)
    rows = np.concatenate(
        [np.repeat(disc.interior, s), np.repeat(bnd, s), [pin]]
    )
    cols = np.concatenate(
        [st.indices[disc.interior].ravel(), disc.bnd_st[bnd_rows].ravel(), [pin]]
    )
    data = np.concatenate(
        [disc.w_lap[disc.interior].ravel(), disc.bnd_normal_row[bnd_rows].ravel(), [1.0]]
    )
    lap_matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return PressureSystem(disc, lap_matrix, pin, params.rho)


def solve_pressure(
    system: PressureSystem,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    rtol: float = 1e-8,
    chunk: int = 50,
    max_chunks: int = 2,
    stats: dict | None = None,
) -> np.ndarray:
    """Stabilised Krylov solve with warm start and a direct fallback.

    Falls back to a cached sparse factorisation when 50 iterations pass
    without residual reduction.  Once the iteration has stagnated on a
    matrix it tends to keep stagnating, so after repeated fallbacks the
    direct path is taken up front and the Krylov solve is only retried
    occasionally.  Every accepted solution satisfies the tolerance.
    """
    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        return np.zeros_like(rhs)
    system._solves += 1
    try_krylov = system._direct_streak < 3 or system._solves % 1024 == 0
    if try_krylov:
        x = np.zeros_like(rhs) if x0 is None else x0.copy()
        r_prev = float(np.linalg.norm(system.matvec(x) - rhs))
        if r_prev <= rtol * b_norm:
            return x
        op = system.operator
        precond = system.preconditioner()
        iters = 0

        def count(_):
            nonlocal iters
            iters += 1

        for _ in range(max_chunks):
            x, info = spla.bicgstab(
                op, rhs, x0=x, rtol=rtol, atol=0.0, maxiter=chunk, M=precond,
                callback=count,
            )
            r = float(np.linalg.norm(system.matvec(x) - rhs))
            if info == 0 and r <= rtol * b_norm:
                if stats is not None:
                    stats["krylov"] = stats.get("krylov", 0) + 1
                # A converged but expensive iteration still loses to the
                # cached factorisation; steer future solves to it.
                system._direct_streak = system._direct_streak + 1 if iters > 10 else 0
                return x
            if not np.isfinite(r) or r >= r_prev * (1.0 - 1e-3):
                break
            r_prev = r
    x = system.lu().solve(rhs)
    system._direct_streak += 1
    if stats is not None:
        stats["direct"] = stats.get("direct", 0) + 1
    residual = float(np.linalg.norm(system.matvec(x) - rhs))
    if not residual <= rtol * b_norm:
        raise PressureSolveError(
            f"pressure solve stalled at relative residual {residual / b_norm:.3e}"
        )
    return x


def velocity_correction(
    vstar: np.ndarray,
    p: np.ndarray,
    disc: Discretization,
    params: PhysicalParams,
    dt: float,
) -> np.ndarray:
    """Subtract the scaled pressure gradient; walls stay no-slip."""
    return kernels.correct(
        vstar, p, disc.stencils.indices, disc.w_grad, disc.interior, dt / params.rho
    )


def temperature_step(
    state: State,
    v_new: np.ndarray,
    disc: Discretization,
    params: PhysicalParams,
    dt: float,
) -> np.ndarray:
    """Explicit advection-diffusion update with wall conditions re-imposed.

    Constant-temperature walls are reset to their Dirichlet values;
    insulated walls get the boundary value that makes the RBF-FD normal
    derivative vanish (one scalar solve per node, previous values of
    other boundary nodes on the stencil).
    """
    T = kernels.temperature(
        state.T,
        v_new,
        disc.stencils.indices,
        disc.w_lap,
        disc.w_grad,
        disc.interior,
        params.alpha,
        dt,
    )
    cold, hot = disc.wall_values(params)
    T[cold] = params.T_C
    T[hot] = params.T_H
    disc.apply_insulation(T)
    peak = float(np.max(np.abs(T)))
    if not np.isfinite(peak):
        node = int(np.argmax(~np.isfinite(T)))
        raise SolverDivergedError(
            f"temperature update produced non-finite value at node {node}", node=node
        )
    return T


def stable_dt(
    state: State,
    nodes: NodeSet,
    params: PhysicalParams,
    safety: float = 0.5,
) -> float:
    """Diffusive and advective step bound from the current fields."""
    h = nodes.spacing
    diffusivity = np.maximum(params.alpha, state.eta / params.rho)
    dt_diff = h**2 / (2.0 * nodes.dim * diffusivity)
    speed = np.linalg.norm(state.v, axis=1)
    dt_adv = h / (speed + 1e-30)
    return safety * float(min(dt_diff.min(), dt_adv.min()))


class _Log:
    """Growable float buffer."""

    def __init__(self):
        self.data = np.empty(1024)
        self.n = 0

    def append(self, value):
        if self.n == len(self.data):
            self.data = np.concatenate([self.data, np.empty(len(self.data))])
        self.data[self.n] = value
        self.n += 1

    def array(self):
        return self.data[: self.n].copy()


@dataclass
class RunResult:
    config: CaseConfig
    params: PhysicalParams
    nodes: NodeSet
    disc: Discretization
    state: State
    series: dict
    div_pre: np.ndarray
    div_post: np.ndarray
    steps: int
    steady: bool
    timings: dict


def run(config: CaseConfig, initial: "RunResult | None" = None) -> RunResult:
    """Advance the case until t_end or a steady Nusselt number.

    The optional ``initial`` result warm-starts the fields by local RBF
    interpolation from its node cloud; the clock restarts at zero.
    """
    from . import diagnostics

    params = from_dimensionless(
        config.ra, config.pr, config.n, config.dim, config.gravity_direction()
    )
    timings = {}
    tic = time.perf_counter()
    cold_face, hot_face = config.wall_faces()
    nodes = generate_nodes(
        config.domain(),
        config.density_field(),
        config.seed,
        cold_face,
        hot_face,
        config.max_nodes,
    )
    timings["nodegen"] = time.perf_counter() - tic

    tic = time.perf_counter()
    disc = build_discretization(nodes, config.stencil_size, config.k, config.m)
    system = assemble_pressure_poisson(disc, params)
    timings["weights"] = time.perf_counter() - tic

    state = initial_state(disc, params, config.init_temperature)
    if initial is not None:
        state = interpolate_state(initial, disc, params)
    convention = config.viscosity_convention
    floor = config.shear_floor
    grad = kernels.grad_tensor(state.v, disc.stencils.indices, disc.w_grad)
    state.eta = compute_viscosity(state, disc, params, convention, floor, grad)

    series = {key: _Log() for key in ("t", "nu_cold", "nu_hot", "max_v", "max_div")}
    log_pre, log_post = _Log(), _Log()
    stats = {}

    def record(div_post_max):
        series["t"].append(state.t)
        series["nu_cold"].append(
            diagnostics.nusselt_wall(state.T, nodes, disc, params, NodeType.WALL_COLD)
        )
        series["nu_hot"].append(
            diagnostics.nusselt_wall(state.T, nodes, disc, params, NodeType.WALL_HOT)
        )
        series["max_v"].append(float(np.abs(state.v).max()))
        series["max_div"].append(div_post_max)

    record(0.0)
    dt = config.dt if config.dt is not None else stable_dt(
        state, nodes, params, config.safety
    )
    steady = False
    step = 0
    checkpoint = state.copy()
    tic = time.perf_counter()
    try:
        while state.t < config.t_end * (1.0 - 1e-12):
            if config.dt is None and step % 10 == 0:
                dt = stable_dt(state, nodes, params, config.safety)
            dt_step = min(dt, config.t_end - state.t)

            vstar = momentum_predictor(state, disc, params, dt_step, grad)
            div_pre = divergence_of(vstar, disc)
            p = solve_pressure(
                system, system.rhs(div_pre, dt_step), x0=state.p, stats=stats
            )
            v_new = velocity_correction(vstar, p, disc, params, dt_step)
            T_new = temperature_step(state, v_new, disc, params, dt_step)

            state.v, state.T, state.p = v_new, T_new, p
            grad = kernels.grad_tensor(state.v, disc.stencils.indices, disc.w_grad)
            state.eta = compute_viscosity(state, disc, params, convention, floor, grad)
            state.t += dt_step
            step += 1

            log_pre.append(float(np.abs(div_pre).max()))
            div_post_max = float(
                np.abs(np.einsum("naa->n", grad[disc.interior])).max()
            ) if len(disc.interior) else 0.0
            log_post.append(div_post_max)

            if step % config.cadence == 0:
                record(div_post_max)
                checkpoint = state.copy()
                times = series["t"].array()
                nus = series["nu_cold"].array()
                if diagnostics.detect_steady(
                    times, nus, config.steady_window, config.steady_tol
                ):
                    steady = True
                    break
    except (SolverDivergedError, PressureSolveError) as exc:
        timings["time_loop"] = time.perf_counter() - tic
        raise SolverDivergedError(
            f"{exc} (step {step}, t={state.t:.6g})",
            step=step,
            t=state.t,
            node=getattr(exc, "node", None),
            checkpoint=checkpoint,
        ) from exc

    if step % config.cadence != 0:
        record(log_post.array()[-1] if log_post.n else 0.0)
    timings["time_loop"] = time.perf_counter() - tic
    timings["steps"] = step
    timings.update(stats)

    return RunResult(
        config=config,
        params=params,
        nodes=nodes,
        disc=disc,
        state=state,
        series={key: log.array() for key, log in series.items()},
        div_pre=log_pre.array(),
        div_post=log_post.array(),
        steps=step,
        steady=steady,
        timings=timings,
    )


def interpolate_state(
    source: RunResult, disc: Discretization, params: PhysicalParams
) -> State:
    """Project a previous result onto a new cloud and re-impose conditions."""
    from .diagnostics import interpolate

    fields = np.column_stack([source.state.v, source.state.T, source.state.p])
    values = interpolate(
        fields.T,
        source.nodes,
        source.disc.stencils,
        disc.nodes.positions,
        k=source.disc.ops.k,
        m=source.disc.ops.m,
    )
    dim = disc.dim
    v = values[:dim].T.copy()
    T = values[dim].copy()
    p = values[dim + 1].copy()
    v[disc.nodes.boundary_mask] = 0.0
    T[disc.nodes.indices_of(NodeType.WALL_COLD)] = params.T_C
    T[disc.nodes.indices_of(NodeType.WALL_HOT)] = params.T_H
    state = State(v, T, p, np.zeros(len(T)))
    state.eta = compute_viscosity(state, disc, params)
    return state
