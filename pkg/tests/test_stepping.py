import numpy as np
import pytest

from alesupg import diagnostics, forms, linalg, motion, stepping
from alesupg.mesh import BoundaryCondition, unit_square_mesh
from alesupg.space import FunctionSpace
from alesupg.stepping import StepperConfig, StepState


def neumann_everywhere(mesh):
    return BoundaryCondition({}, frozenset(mesh.tags))


def zero_dirichlet(mesh):
    return BoundaryCondition({t: 0.0 for t in mesh.tags})


def example1_frame(mesh, t_n, dt):
    return motion.build_frame(mesh, motion.example1_map(t_n, mesh.nodes), motion.example1_map(t_n + dt, mesh.nodes), t_n, dt)


def static_frame(mesh, t_n=0.0, dt=0.01):
    return motion.build_frame(mesh, mesh.nodes, mesh.nodes, t_n, dt)


@pytest.mark.parametrize("scheme", ["be", "cn"])
def test_zero_is_a_fixed_point(scheme):
    m = unit_square_mesh(6)
    V = FunctionSpace(m, 1)
    coeffs = forms.Coefficients(0.01)
    state = StepState(0.0, np.zeros(V.n_dofs), m.nodes)
    res = stepping.step(state, static_frame(m), V, coeffs, zero_dirichlet(m), StepperConfig(scheme))
    assert np.array_equal(res.state.u, np.zeros(V.n_dofs))


@pytest.mark.parametrize("scheme", ["be", "cn"])
def test_constant_state_without_dynamics_is_kept(scheme):
    m = unit_square_mesh(5)
    V = FunctionSpace(m, 2)
    coeffs = forms.Coefficients(0.5)
    u = np.full(V.n_dofs, 0.7)
    res = stepping.step(StepState(0.0, u, m.nodes), static_frame(m), V, coeffs, neumann_everywhere(m), StepperConfig(scheme))
    assert np.allclose(res.state.u, u, rtol=1e-12, atol=0)


def test_cn_step_is_algebraically_reversible():
    m = unit_square_mesh(8)
    V = FunctionSpace(m, 1)
    coeffs = forms.Coefficients(0.01, (1.0, 0.5), 0.2)
    cfg = StepperConfig("cn", 0.02, stab=forms.Stabilization(1.0))
    x = m.nodes
    u0 = V.interpolate(lambda t, X: np.sin(3 * X[..., 0]) * X[..., 1], x)
    fr = static_frame(m, 0.0, cfg.dt)
    res = stepping.crank_nicolson_step(StepState(0.0, u0, x), fr, V, coeffs, None, cfg)
    A = forms.assemble_ale_supg(V, x, coeffs, fr.w_nodes, res.delta, res.t_eval)
    M = forms.assemble_mass(V, x)
    back = linalg.solve(M / cfg.dt - 0.5 * A, (M / cfg.dt + 0.5 * A) @ res.state.u)
    assert np.linalg.norm(back - u0) <= 1e-9 * np.linalg.norm(u0)


@pytest.mark.parametrize("scheme", ["be", "cn"])
@pytest.mark.parametrize("degree", [1, 2])
def test_constant_preserved_on_moving_mesh(scheme, degree):
    m = unit_square_mesh(6)
    V = FunctionSpace(m, degree)
    coeffs = forms.Coefficients(0.01)
    state = StepState(0.013, np.ones(V.n_dofs), motion.example1_map(0.013, m.nodes))
    for _ in range(3):
        fr = example1_frame(m, state.t, 0.004)
        state = stepping.step(state, fr, V, coeffs, neumann_everywhere(m), StepperConfig(scheme, 0.004)).state
    assert np.abs(state.u - 1.0).max() < 1e-11


@pytest.mark.parametrize("scheme", ["be", "cn"])
def test_total_mass_conserved_when_transport_follows_the_mesh(scheme):
    m = unit_square_mesh(8)
    V = FunctionSpace(m, 1)
    t_n, dt = 0.017, 0.005
    s0, s1 = motion.example1_scale(t_n), motion.example1_scale(t_n + dt)
    r = (s1 - s0) / (dt * 0.5 * (s0 + s1))
    # b equals the discrete mesh velocity on the midpoint geometry, c its divergence
    coeffs = forms.Coefficients(0.01, lambda t, X: r * X, 2.0 * r)
    fr = example1_frame(m, t_n, dt)
    u0 = V.interpolate(lambda t, X: 1.0 + X[..., 0] * X[..., 1] ** 2, fr.coords_n)
    cfg = StepperConfig(scheme, dt, stab=forms.Stabilization(1.0))
    res = stepping.step(StepState(t_n, u0, fr.coords_n), fr, V, coeffs, neumann_everywhere(m), cfg)
    one = np.ones(V.n_dofs)
    before = one @ (forms.assemble_mass(V, fr.coords_n) @ u0)
    after = one @ (forms.assemble_mass(V, fr.coords_np1) @ res.state.u)
    assert after == pytest.approx(before, rel=1e-12)


def test_cn_check_stationary_and_dilation():
    m = unit_square_mesh(4)
    chk = stepping.cn_timestep_check(static_frame(m))
    assert chk.ok and chk.bound == np.inf and chk.beta1 == chk.beta2 == 0.0
    tau = 1e-6
    fr = motion.build_frame(m, m.nodes, (1 + tau) * m.nodes, 0.0, tau)  # w = x
    chk = stepping.cn_timestep_check(fr, dt=1.0)
    assert not chk.ok
    assert chk.bound == pytest.approx(0.5, rel=1e-5)
    assert chk.margin < 0


def test_strict_cn_raises_and_lenient_cn_records():
    m = unit_square_mesh(4)
    V = FunctionSpace(m, 1)
    coeffs = forms.Coefficients(0.01)
    fr = example1_frame(m, 0.0, 0.025)
    state = StepState(0.0, np.zeros(V.n_dofs), fr.coords_n)
    with pytest.raises(stepping.TimeStepRestrictionError):
        stepping.step(state, fr, V, coeffs, zero_dirichlet(m), StepperConfig("cn", 0.025, strict_cn=True))
    res = stepping.step(state, fr, V, coeffs, zero_dirichlet(m), StepperConfig("cn", 0.025))
    assert res.cn_check is not None and not res.cn_check.ok


def test_project_initial_cases():
    m = unit_square_mesh(8)
    V = FunctionSpace(m, 2)
    assert np.array_equal(stepping.project_initial(lambda t, X: 0 * X[..., 0], V, m.nodes), np.zeros(V.n_dofs))
    # a quadratic lies in the P2 space, so projection returns its interpolant
    q = lambda t, X: 1 + X[..., 0] - 2 * X[..., 0] * X[..., 1] + 3 * X[..., 1] ** 2  # noqa: E731
    assert np.allclose(stepping.project_initial(q, V, m.nodes), V.interpolate(q, m.nodes), rtol=0, atol=1e-10)


def test_example1_initial_peak_approaches_100():
    u0 = lambda t, X: 1600 * X[..., 0] * (1 - X[..., 0]) * X[..., 1] * (1 - X[..., 1])  # noqa: E731
    errs = []
    for n in (8, 16, 32):
        m = unit_square_mesh(n)
        V = FunctionSpace(m, 1)
        u = stepping.project_initial(u0, V, m.nodes)
        centre = np.argmin(np.hypot(*(m.nodes - 0.5).T))
        assert u.argmax() == centre
        errs.append(abs(u[centre] - 100.0))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1.0


def test_endpoint_policy_uses_new_geometry():
    m = unit_square_mesh(4)
    V = FunctionSpace(m, 1)
    fr = example1_frame(m, 0.01, 0.01)
    state = StepState(0.01, np.zeros(V.n_dofs), fr.coords_n)
    coeffs = forms.Coefficients(0.01)
    res = stepping.step(state, fr, V, coeffs, zero_dirichlet(m), StepperConfig("be", 0.01, policy="endpoint"))
    assert res.t_eval == pytest.approx(0.02) and np.array_equal(res.coords_eval, fr.coords_np1)
    res = stepping.step(state, fr, V, coeffs, zero_dirichlet(m), StepperConfig("be", 0.01))
    assert res.t_eval == pytest.approx(0.015) and np.allclose(res.coords_eval, fr.coords_mid)


def test_config_and_state_validation():
    with pytest.raises(ValueError):
        StepperConfig("rk4")
    with pytest.raises(ValueError):
        StepperConfig(policy="start")
    with pytest.raises(ValueError):
        StepperConfig(dt=0.0)
    m = unit_square_mesh(3)
    V = FunctionSpace(m, 1)
    state = StepState(0.5, np.zeros(V.n_dofs), m.nodes)
    with pytest.raises(ValueError):
        stepping.step(state, static_frame(m, 0.0), V, forms.Coefficients(1.0), None, StepperConfig())


def test_backward_euler_l2_nonincreasing_with_zero_source():
    m = unit_square_mesh(12)
    V = FunctionSpace(m, 1)
    coeffs = forms.Coefficients(0.01)
    u0 = lambda t, X: 1600 * X[..., 0] * (1 - X[..., 0]) * X[..., 1] * (1 - X[..., 1])  # noqa: E731
    x = m.nodes
    state = StepState(0.0, stepping.project_initial(u0, V, x), x)
    cfg = StepperConfig("be", 0.01, stab=forms.Stabilization(1.0))
    ledger = diagnostics.StabilityLedger("be", bounds=(0.0, 100.0))
    for n in range(10):
        fr = example1_frame(m, state.t, 0.01)
        res = stepping.step(state, fr, V, coeffs, zero_dirichlet(m), cfg)
        diagnostics.record_step(ledger, n + 1, state, res, V, coeffs)
        state = res.state
    assert not ledger.violations
    assert np.all(ledger.column("slack") >= 0)
    assert np.all(np.diff(np.r_[ledger.records[0]["l2_n"], ledger.column("l2_np1")]) <= 0)
