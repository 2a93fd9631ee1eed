import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from cavityflow import solver
from cavityflow.config import CaseConfig
from cavityflow.geometry import DensityField, Domain
from cavityflow.nodes import NodeType, generate_nodes
from cavityflow.physics import from_dimensionless


@pytest.fixture(scope="module")
def setup():
    params = from_dimensionless(1e4, 100.0, 1.0)
    nodes = generate_nodes(Domain(dim=2), DensityField("constant", 0.05), seed=0)
    disc = solver.build_discretization(nodes, s=12, k=3, m=2)
    system = solver.assemble_pressure_poisson(disc, params)
    return nodes, disc, params, system


def test_viscosity_newtonian_reduces_to_eta0(setup):
    nodes, disc, params, _ = setup
    rng = np.random.default_rng(0)
    state = solver.initial_state(disc, params)
    state.v = rng.normal(size=state.v.shape)
    eta = solver.compute_viscosity(state, disc, params)
    assert np.allclose(eta, params.eta0, rtol=1e-14)


def test_viscosity_zero_velocity_clamped(setup):
    nodes, disc, _, _ = setup
    params = from_dimensionless(1e4, 100.0, 0.6)
    state = solver.initial_state(disc, params)
    state.v[:] = 0.0
    eta = solver.compute_viscosity(state, disc, params)
    # eta0 * (1e-10) ** ((0.6 - 1) / 2) = 100 * 100
    assert np.allclose(eta, 1e4, rtol=1e-12)


def shear_state(disc, params, gamma=2.0):
    state = solver.initial_state(disc, params)
    v = np.zeros_like(state.v)
    v[:, 0] = gamma * disc.nodes.positions[:, 1]
    state.v = v
    return state


def test_viscosity_shear_flow_both_conventions(setup):
    nodes, disc, _, _ = setup
    params = from_dimensionless(1e4, 100.0, 0.6)
    gamma = 2.0
    state = shear_state(disc, params, gamma)
    interior = disc.interior

    # finite-difference oracle for the velocity gradient of the linear field
    eps = 1e-6
    p0 = np.array([0.4, 0.5])
    du_dy = (gamma * (p0[1] + eps) - gamma * (p0[1] - eps)) / (2 * eps)
    s_tensor = np.array([[0.0, du_dy], [du_dy, 0.0]])
    fro = np.linalg.norm(s_tensor)
    assert fro == pytest.approx(2 * np.sqrt(2.0), rel=1e-9)

    eta_p = solver.compute_viscosity(state, disc, params, convention="printed")
    expect_p = 100.0 * (0.5 * fro) ** ((0.6 - 1) / 2)
    assert np.allclose(eta_p[interior], expect_p, rtol=1e-9)

    eta_i = solver.compute_viscosity(state, disc, params, convention="invariant")
    rate = np.sqrt(0.5) * fro  # equals gamma for simple shear
    assert rate == pytest.approx(gamma, rel=1e-9)
    expect_i = 100.0 * rate ** (0.6 - 1)
    assert np.allclose(eta_i[interior], expect_i, rtol=1e-9)


def test_predictor_rest_state_stays_at_rest(setup):
    nodes, disc, params, _ = setup
    state = solver.initial_state(disc, params)
    state.T[:] = 0.0
    state.eta = solver.compute_viscosity(state, disc, params)
    vstar = solver.momentum_predictor(state, disc, params, dt=1e-6)
    assert np.all(vstar == 0.0)


def test_predictor_pure_buoyancy(setup):
    nodes, disc, params, _ = setup
    state = solver.initial_state(disc, params)
    state.T[:] = 1.0  # uniform hot fluid, zero gradients
    state.eta = solver.compute_viscosity(state, disc, params)
    dt = 1e-6
    vstar = solver.momentum_predictor(state, disc, params, dt)
    g_beta = params.g_magnitude * params.beta
    expect = dt * g_beta
    interior = disc.interior
    assert np.allclose(vstar[interior, 1], expect, rtol=1e-12)
    assert np.allclose(vstar[interior, 0], 0.0, atol=1e-12 * expect)
    assert np.all(vstar[disc.bnd_idx] == 0.0)


def test_predictor_matches_analytic_viscous_update(setup):
    nodes, disc, params, _ = setup
    state = solver.initial_state(disc, params)
    y = nodes.positions[:, 1]
    state.v = np.zeros_like(state.v)
    state.v[:, 0] = y * (1.0 - y)  # d2u/dy2 = -2, advection vanishes
    state.T[:] = 0.0
    state.eta = solver.compute_viscosity(state, disc, params)
    dt = 1e-6
    vstar = solver.momentum_predictor(state, disc, params, dt)
    expect = state.v[:, 0] + dt * params.eta0 * (-2.0) / params.rho
    interior = disc.interior
    rel = np.abs(vstar[interior, 0] - expect[interior]) / np.abs(expect[interior]).max()
    assert rel.max() < 1e-2


def test_pressure_zero_rhs(setup):
    _, disc, params, system = setup
    div = np.zeros(len(disc.nodes))
    p = solver.solve_pressure(system, system.rhs(div, 1e-6))
    assert np.all(p == 0.0)


def test_pressure_matrix_row_sums(setup):
    _, disc, params, system = setup
    ones = np.ones(system.lap_matrix.shape[0])
    sums = system.lap_matrix @ ones
    interior = disc.interior
    scale = np.abs(disc.w_lap[interior]).max()
    assert np.abs(sums[interior]).max() <= 1e-8 * scale
    # composed operator annihilates constants away from the pin too
    mv = system.matvec(ones)
    keep = interior[interior != system.pin]
    assert np.abs(mv[keep]).max() <= 1e-6 * scale


def test_manufactured_projection(setup):
    nodes, disc, params, system = setup
    x, y = nodes.positions.T
    vstar = np.zeros_like(nodes.positions)
    interior = disc.interior
    vstar[interior, 0] = 2 * x[interior]
    vstar[interior, 1] = 2 * y[interior]  # div = 4 in the interior
    dt = 1e-6
    div = solver.divergence_of(vstar, disc)
    p = solver.solve_pressure(system, system.rhs(div, dt))
    # recovered p satisfies the assembled equations
    residual = system.matvec(p) - system.rhs(div, dt)
    assert np.abs(residual).max() <= 1e-6 * np.abs(system.rhs(div, dt)).max()


def test_projection_divergence_reduction(setup):
    nodes, disc, params, system = setup
    x, y = nodes.positions.T
    vstar = np.zeros_like(nodes.positions)
    interior = disc.interior
    vstar[interior, 0] = np.sin(np.pi * x[interior]) * np.cos(np.pi * y[interior])
    vstar[interior, 1] = np.cos(2 * np.pi * x[interior]) * np.sin(np.pi * y[interior])
    dt = 1e-6
    div_pre = solver.divergence_of(vstar, disc)
    p = solver.solve_pressure(system, system.rhs(div_pre, dt))
    v_new = solver.velocity_correction(vstar, p, disc, params, dt)
    div_post = solver.divergence_of(v_new, disc)
    assert np.abs(div_post).max() <= 0.1 * np.abs(div_pre).max()


def test_correction_constant_pressure(setup):
    nodes, disc, params, _ = setup
    vstar = np.random.default_rng(1).normal(size=nodes.positions.shape)
    vstar[disc.bnd_idx] = 0.0
    p = np.full(len(nodes), 3.2)
    v = solver.velocity_correction(vstar, p, disc, params, dt=1e-6)
    assert np.allclose(v, vstar, atol=1e-12)


def test_correction_is_scaled_gradient(setup):
    nodes, disc, params, _ = setup
    vstar = np.zeros_like(nodes.positions)
    p = nodes.positions[:, 0] ** 2
    dt = 2e-6
    v = solver.velocity_correction(vstar, p, disc, params, dt)
    interior = disc.interior
    expect = -(dt / params.rho) * 2 * nodes.positions[interior, 0]
    assert np.allclose(v[interior, 0], expect, rtol=1e-8, atol=1e-12)
    assert np.all(v[disc.bnd_idx] == 0.0)


class _ChainSystem:
    """Textbook 1D three-point Laplacian chain with pinned ends."""

    def __init__(self, n, h):
        main = np.full(n, -2.0) / h**2
        off = np.full(n - 1, 1.0) / h**2
        a = sp.diags([off, main, off], [-1, 0, 1]).tolil()
        a[0, :] = 0.0
        a[0, 0] = 1.0
        a[-1, :] = 0.0
        a[-1, -1] = 1.0
        self.matrix = a.tocsr()
        self._lu = None
        self._direct_streak = 0
        self._solves = 0

    def matvec(self, p):
        return self.matrix @ p

    @property
    def operator(self):
        return spla.aslinearoperator(self.matrix)

    def preconditioner(self):
        return None

    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc())
        return self._lu


def test_solve_pressure_tridiagonal_oracle():
    n = 41
    h = 1.0 / (n - 1)
    x = np.linspace(0, 1, n)
    exact = x * (1 - x)
    system = _ChainSystem(n, h)
    rhs = np.full(n, -2.0)
    rhs[0] = exact[0]
    rhs[-1] = exact[-1]
    p = solver.solve_pressure(system, rhs)
    assert np.allclose(p, exact, atol=1e-10)
    residual = np.linalg.norm(system.matvec(p) - rhs) / np.linalg.norm(rhs)
    assert residual <= 1e-8


def test_temperature_steady_conduction_fixed_point(setup):
    nodes, disc, params, _ = setup
    state = solver.initial_state(disc, params)
    state.T = -1.0 + 2.0 * nodes.positions[:, 0]
    t_new = solver.temperature_step(state, np.zeros_like(state.v), disc, params, 1e-5)
    assert np.allclose(t_new, state.T, atol=1e-9)


def test_temperature_uniform_interior_unchanged(setup):
    nodes, disc, params, _ = setup
    state = solver.initial_state(disc, params)
    state.T = np.full(len(nodes), 0.37)
    v = np.random.default_rng(2).normal(size=state.v.shape)
    t_new = solver.temperature_step(state, v, disc, params, 1e-5)
    assert np.allclose(t_new[disc.interior], 0.37, atol=1e-12)


def test_temperature_sine_decay_matches_analytic():
    params = from_dimensionless(1e4, 100.0, 1.0)
    nodes = generate_nodes(Domain(dim=2), DensityField("constant", 0.01), seed=0)
    disc = solver.build_discretization(nodes, s=12, k=3, m=2)
    state = solver.initial_state(disc, params)
    x = nodes.positions[:, 0]
    linear = -1.0 + 2.0 * x
    state.T = linear + np.sin(np.pi * x)
    # scattered-cloud Laplacian spectra need a smaller step than the
    # lattice bound; 0.08 h^2 / alpha is comfortably inside it
    dt = 0.08 * 0.01**2 / params.alpha
    v0 = np.zeros_like(state.v)
    for _ in range(100):
        state.T = solver.temperature_step(state, v0, disc, params, dt)
    analytic = linear + np.sin(np.pi * x) * np.exp(-np.pi**2 * params.alpha * 100 * dt)
    assert np.abs(state.T - analytic).max() < 1e-2


def test_stable_dt_formula(setup):
    nodes, disc, params, _ = setup
    state = solver.initial_state(disc, params)
    state.v[:] = 0.0
    state.eta = np.full(len(nodes), 1e-3)  # alpha-dominated
    h = nodes.spacing.min()
    expect = 0.5 * h**2 / (2 * 2 * params.alpha)
    assert solver.stable_dt(state, nodes, params) == pytest.approx(expect, rel=1e-12)
    # clamp-inflated viscosity shrinks the step accordingly
    state.eta = np.full(len(nodes), 1e4)
    expect = 0.5 * h**2 / (2 * 2 * 1e4)
    assert solver.stable_dt(state, nodes, params) == pytest.approx(expect, rel=1e-12)
    # fast flow switches to the advective bound
    state.eta[:] = 1e-3
    state.v[:, 0] = 1e6
    expect = 0.5 * h / 1e6
    assert solver.stable_dt(state, nodes, params) == pytest.approx(expect, rel=1e-6)


def test_stable_dt_quadruples_with_h():
    params = from_dimensionless(1e4, 100.0, 1.0)
    dts = []
    for h in (0.1, 0.05):
        nodes = generate_nodes(Domain(dim=2), DensityField("constant", h), seed=0)
        disc = solver.build_discretization(nodes, s=12)
        state = solver.initial_state(disc, params)
        state.eta = np.full(len(nodes), 1e-4)
        dts.append(solver.stable_dt(state, nodes, params))
    assert dts[0] == pytest.approx(4 * dts[1], rel=1e-9)


def test_run_divergence_aborts_with_checkpoint():
    # fixed step far above the stability bound blows up within a few steps
    cfg = CaseConfig(ra=1e4, pr=100, n=1.0, h=0.1, t_end=0.1, dt=2e-3)
    with pytest.raises(solver.SolverDivergedError) as err:
        solver.run(cfg)
    assert err.value.checkpoint is not None
    assert err.value.step is not None


def test_run_deterministic_series():
    cfg = CaseConfig(ra=1e4, pr=1.0, n=1.0, h=0.08, t_end=0.005, cadence=5)
    a = solver.run(cfg)
    b = solver.run(cfg)
    for key in a.series:
        assert np.array_equal(a.series[key], b.series[key])


def test_warm_start_interpolation_respects_bcs():
    coarse = solver.run(CaseConfig(ra=1e4, pr=1.0, n=1.0, h=0.08, t_end=0.01))
    fine_cfg = CaseConfig(ra=1e4, pr=1.0, n=1.0, h=0.05, t_end=1e-9)
    fine = solver.run(fine_cfg, initial=coarse)
    nodes = fine.nodes
    assert np.all(fine.state.v[nodes.boundary_mask] == 0.0)
    cold = nodes.indices_of(NodeType.WALL_COLD)
    assert np.allclose(fine.state.T[cold], -1.0)
    # interior temperature close to the coarse solution's range
    assert fine.state.T.min() >= -1.2 and fine.state.T.max() <= 1.2
