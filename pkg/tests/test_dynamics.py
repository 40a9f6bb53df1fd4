import numpy as np
import pytest

from metamorph import (
    AdjointState,
    DynamicsConfig,
    FunctionalMetric,
    GrassmannKernelSpec,
    MatchProblem,
    RadialKernelSpec,
    ShootingState,
    VarifoldKernels,
    forward_rhs,
    integrate_adjoint_backward,
    integrate_forward,
    kernel_conv,
    lumped_vertex_weights,
    objective_gradient,
    quad_form,
    reduced_hamiltonian,
    to_varifold,
)
from metamorph.matching import _objective_with_traj

from conftest import jittered_grid, triangle_strip

KERNEL = RadialKernelSpec("gaussian", ((1.0, 0.4),))
LUMPED = FunctionalMetric(0, "lumped")
H1 = FunctionalMetric(1, "p1")

FID_KERNELS = VarifoldKernels(
    kp=RadialKernelSpec("gaussian", ((1.0, 0.5),)),
    kf=RadialKernelSpec("gaussian", ((1.0, 1.0),)),
    kt=GrassmannKernelSpec("unoriented_squared"),
)


def _config(metric=LUMPED, n_steps=10, gamma_V=1.0, gamma_f=2.0):
    return DynamicsConfig(
        gamma_V=gamma_V, gamma_f=gamma_f, kernel=KERNEL, metric=metric, n_steps=n_steps
    )


def _rest_state(fs):
    return ShootingState(
        x=fs.vertices,
        f=fs.signals,
        p=np.zeros_like(fs.vertices),
        pf=np.zeros(fs.n_vertices),
    )


def _random_state(fs, seed, amp=0.3):
    rng = np.random.default_rng(seed)
    return ShootingState(
        x=fs.vertices,
        f=fs.signals,
        p=amp * rng.standard_normal(fs.vertices.shape),
        pf=amp * rng.standard_normal(fs.n_vertices),
    )


def test_hamiltonian_zero_momenta():
    fs = triangle_strip(4, seed=0)
    assert reduced_hamiltonian(_rest_state(fs), fs, _config()) == 0.0


def test_hamiltonian_pf_zero_term_isolation():
    fs = triangle_strip(4, seed=1)
    rng = np.random.default_rng(2)
    p = rng.standard_normal(fs.vertices.shape)
    state = ShootingState(fs.vertices, fs.signals, p, np.zeros(fs.n_vertices))
    cfg = _config(gamma_V=1.7)
    expected = quad_form(KERNEL, fs.vertices, p) / (2 * 1.7)
    assert reduced_hamiltonian(state, fs, cfg) == pytest.approx(expected, rel=1e-13)


def test_hamiltonian_gamma_f_homogeneity():
    fs = triangle_strip(4, seed=3)
    state = _random_state(fs, 4)
    base = _config(gamma_f=1.0)
    doubled = _config(gamma_f=2.0)
    term = lambda cfg: reduced_hamiltonian(state, fs, cfg) - reduced_hamiltonian(
        ShootingState(state.x, state.f, state.p, np.zeros(fs.n_vertices)), fs, cfg
    )
    assert term(doubled) == pytest.approx(term(base) / 2.0, rel=1e-12)


def test_forward_rhs_zero_momenta():
    fs = triangle_strip(4, seed=5)
    dx, df, dp, dpf = forward_rhs(_rest_state(fs), fs, _config())
    for block in (dx, df, dp, dpf):
        np.testing.assert_array_equal(block, 0.0)


def test_forward_rhs_velocity_block():
    fs = triangle_strip(4, seed=6)
    state = _random_state(fs, 7)
    cfg = _config(gamma_V=1.3)
    dx, _, _, _ = forward_rhs(state, fs, cfg)
    expected = kernel_conv(KERNEL, state.x, state.x, state.p) / 1.3
    np.testing.assert_allclose(dx, expected, rtol=1e-13)


@pytest.mark.parametrize("metric", [LUMPED, FunctionalMetric(0, "p1"), H1])
def test_forward_rhs_is_minus_hamiltonian_gradient(metric):
    # dp/dt must equal -dH/dx: checked against central FD of the Hamiltonian
    fs = triangle_strip(4, seed=8)
    state = _random_state(fs, 9)
    cfg = _config(metric=metric)
    _, _, dp, _ = forward_rhs(state, fs, cfg)
    eps = 1e-6
    fd = np.zeros_like(dp)
    for i in range(fs.n_vertices):
        for j in range(3):
            xp = state.x.copy()
            xm = state.x.copy()
            xp[i, j] += eps
            xm[i, j] -= eps
            Hp = reduced_hamiltonian(
                ShootingState(xp, state.f, state.p, state.pf), fs, cfg
            )
            Hm = reduced_hamiltonian(
                ShootingState(xm, state.f, state.p, state.pf), fs, cfg
            )
            fd[i, j] = -(Hp - Hm) / (2 * eps)
    assert np.abs(dp - fd).max() / np.abs(fd).max() < 1e-6


def test_integrate_forward_constant_for_zero_momenta():
    fs = triangle_strip(4, seed=10)
    traj = integrate_forward(_rest_state(fs), fs, _config())
    assert len(traj.states) == _config().n_steps + 1
    for s in traj.states:
        np.testing.assert_array_equal(s.x, fs.vertices)
        np.testing.assert_array_equal(s.f, fs.signals)


def test_trajectory_initial_state_preserved():
    fs = triangle_strip(4, seed=11)
    s0 = _random_state(fs, 12)
    traj = integrate_forward(s0, fs, _config())
    np.testing.assert_array_equal(traj.initial.x, s0.x)
    np.testing.assert_array_equal(traj.initial.p, s0.p)


def test_pf_bitwise_constant_along_trajectory():
    fs = triangle_strip(4, seed=13)
    s0 = _random_state(fs, 14)
    traj = integrate_forward(s0, fs, _config())
    for s in traj.states:
        assert s.pf is traj.states[0].pf  # shared, never copied or integrated


@pytest.mark.parametrize("metric", [LUMPED, H1])
def test_hamiltonian_conservation_and_order(metric):
    fs = jittered_grid(15)
    areas = lumped_vertex_weights(fs)
    rng = np.random.default_rng(16)
    p0 = rng.standard_normal(fs.vertices.shape) * areas[:, None]
    pf = rng.standard_normal(fs.n_vertices) * areas
    drift = {}
    for n in (20, 40):
        cfg = DynamicsConfig(1.0, 1.0, KERNEL, metric, n_steps=n)
        traj = integrate_forward(
            ShootingState(fs.vertices, fs.signals, p0, pf), fs, cfg
        )
        H = [reduced_hamiltonian(s, fs, cfg) for s in traj.states]
        drift[n] = max(abs(h - H[0]) for h in H) / abs(H[0])
    assert drift[20] < 1e-6
    if drift[40] > 1e-14:  # ratio meaningful only above roundoff
        assert drift[20] / drift[40] >= 8.0


def test_time_reversal():
    fs = jittered_grid(17)
    areas = lumped_vertex_weights(fs)
    rng = np.random.default_rng(18)
    p0 = rng.standard_normal(fs.vertices.shape) * areas[:, None]
    pf = rng.standard_normal(fs.n_vertices) * areas
    cfg = DynamicsConfig(1.0, 1.0, KERNEL, LUMPED, n_steps=40)
    fwd = integrate_forward(ShootingState(fs.vertices, fs.signals, p0, pf), fs, cfg)
    e = fwd.final
    back = integrate_forward(ShootingState(e.x, e.f, -e.p, -e.pf), fs, cfg)
    b = back.final
    scale_x = np.abs(fs.vertices).max()
    scale_f = np.abs(fs.signals).max()
    assert np.abs(b.x - fs.vertices).max() / scale_x < 1e-6
    assert np.abs(b.f - fs.signals).max() / scale_f < 1e-6


def test_integrate_forward_nan_detection():
    # enormous momenta blow the flow up within a step
    fs = triangle_strip(4, seed=19)
    state = ShootingState(
        fs.vertices, fs.signals, 1e200 * np.ones_like(fs.vertices), np.zeros(6)
    )
    with np.errstate(all="ignore"), pytest.raises((RuntimeError, ValueError)):
        integrate_forward(state, fs, _config())


def test_pure_lddmm_reduction_matches_landmark_oracle():
    # independent landmark integrator written with explicit loops
    def landmark_rk4(x0, p0, sigma, gamma_V, n_steps):
        def kv(u):
            return np.exp(-u / (2 * sigma**2))

        def kvp(u):
            return -np.exp(-u / (2 * sigma**2)) / (2 * sigma**2)

        P = x0.shape[0]

        def rhs(x, p):
            dx = np.zeros_like(x)
            dp = np.zeros_like(p)
            for i in range(P):
                for j in range(P):
                    u = float(((x[i] - x[j]) ** 2).sum())
                    dx[i] += kv(u) * p[j] / gamma_V
                    dp[i] += -2.0 / gamma_V * kvp(u) * float(p[i] @ p[j]) * (x[i] - x[j])
            return dx, dp

        dt = 1.0 / n_steps
        xs, ps = [x0.copy()], [p0.copy()]
        x, p = x0.copy(), p0.copy()
        for _ in range(n_steps):
            k1 = rhs(x, p)
            k2 = rhs(x + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1])
            k3 = rhs(x + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1])
            k4 = rhs(x + dt * k3[0], p + dt * k3[1])
            x = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            p = p + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            xs.append(x.copy())
            ps.append(p.copy())
        return xs, ps

    pts = np.array(
        [[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0], [0.5, 0.5, 0.8]]
    )
    cells = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4]])
    fs = np.random.default_rng(20)
    p0 = 0.3 * fs.standard_normal((5, 3))
    mesh = triangle_strip(3, seed=None)
    from metamorph import DiscreteFshape

    mesh = DiscreteFshape(pts, np.full(5, 2.5), cells)
    sigma, gamma_V = 0.8, 1.3
    cfg = DynamicsConfig(
        gamma_V,
        1.0,
        RadialKernelSpec("gaussian", ((1.0, sigma),)),
        LUMPED,
        n_steps=20,
    )
    traj = integrate_forward(
        ShootingState(pts, mesh.signals, p0, np.zeros(5)), mesh, cfg
    )
    xs, ps = landmark_rk4(pts, p0, sigma, gamma_V, 20)
    for s, xo, po in zip(traj.states, xs, ps):
        assert np.abs(s.x - xo).max() < 1e-10
        assert np.abs(s.p - po).max() < 1e-10
        np.testing.assert_array_equal(s.f, mesh.signals)  # signals frozen


def test_adjoint_zero_end_state():
    fs = triangle_strip(4, seed=21)
    s0 = _random_state(fs, 22)
    cfg = _config()
    traj = integrate_forward(s0, fs, cfg)
    zero = AdjointState(
        X=np.zeros_like(s0.x),
        F=np.zeros(fs.n_vertices),
        Pvar=np.zeros_like(s0.x),
        Pf=np.zeros(fs.n_vertices),
    )
    out = integrate_adjoint_backward(traj, zero, fs, cfg)
    for block in (out.X, out.F, out.Pvar, out.Pf):
        np.testing.assert_array_equal(block, 0.0)


def test_adjoint_block_structure_signal_decoupled():
    # with pf = 0 and a signal-blind fidelity, F and Pf stay zero
    fs = triangle_strip(4, seed=23)
    rng = np.random.default_rng(24)
    p0 = 0.3 * rng.standard_normal(fs.vertices.shape)
    cfg = _config()
    s0 = ShootingState(fs.vertices, fs.signals, p0, np.zeros(fs.n_vertices))
    traj = integrate_forward(s0, fs, cfg)
    end = AdjointState(
        X=rng.standard_normal(fs.vertices.shape),
        F=np.zeros(fs.n_vertices),
        Pvar=np.zeros_like(p0),
        Pf=np.zeros(fs.n_vertices),
    )
    out = integrate_adjoint_backward(traj, end, fs, cfg)
    assert np.abs(out.F).max() < 1e-9
    assert np.abs(out.Pf).max() < 1e-9
    assert np.abs(out.X).max() > 0.0


def _gradient_fd_worst(problem, p0, pf, directions=10, eps=1e-5, seed=0):
    gp, gpf = objective_gradient(p0, pf, problem)
    gpf_euclid = gpf / lumped_vertex_weights(problem.template)
    rng = np.random.default_rng(seed)

    def J(a, b):
        return _objective_with_traj(a, b, problem)[0]

    worst = 0.0
    for _ in range(directions):
        dp = rng.standard_normal(p0.shape)
        dpf = rng.standard_normal(pf.shape)
        norm = np.sqrt((dp**2).sum() + (dpf**2).sum())
        dp /= norm
        dpf /= norm
        fd = (J(p0 + eps * dp, pf + eps * dpf) - J(p0 - eps * dp, pf - eps * dpf)) / (
            2 * eps
        )
        an = float((gp * dp).sum() + (gpf_euclid * dpf).sum())
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    return worst


@pytest.mark.parametrize("metric", [LUMPED, H1])
def test_objective_gradient_matches_fd(metric):
    src = triangle_strip(8, seed=25)
    tgt = triangle_strip(8, seed=26)
    cfg = DynamicsConfig(1.0, 2.0, KERNEL, metric, n_steps=10)
    problem = MatchProblem(src, to_varifold(tgt), FID_KERNELS, 3.0, cfg)
    rng = np.random.default_rng(27)
    p0 = 0.15 * rng.standard_normal(src.vertices.shape)
    pf = 0.15 * rng.standard_normal(src.n_vertices)
    assert _gradient_fd_worst(problem, p0, pf) < 1e-4


def test_objective_gradient_zero_at_global_minimum():
    src = triangle_strip(6, seed=28)
    cfg = _config()
    problem = MatchProblem(src, to_varifold(src), FID_KERNELS, 3.0, cfg)
    gp, gpf = objective_gradient(
        np.zeros_like(src.vertices), np.zeros(src.n_vertices), problem
    )
    assert np.abs(gp).max() < 1e-10
    assert np.abs(gpf).max() < 1e-10


def test_objective_gradient_energy_only_when_fidelity_off():
    # gamma_W = 0 leaves the plain energy gradients
    src = triangle_strip(6, seed=29)
    cfg = _config(gamma_f=2.0)
    problem = MatchProblem(src, to_varifold(src), FID_KERNELS, 0.0, cfg)
    rng = np.random.default_rng(30)
    p0 = 0.2 * rng.standard_normal(src.vertices.shape)
    pf = 0.2 * rng.standard_normal(src.n_vertices)
    gp, gpf = objective_gradient(p0, pf, problem)
    expected_gp = kernel_conv(KERNEL, src.vertices, src.vertices, p0) / cfg.gamma_V
    np.testing.assert_allclose(gp, expected_gp, atol=1e-9)
    from metamorph import assemble_metric, solve_spd

    h0 = solve_spd(assemble_metric(src, cfg.metric), pf)
    expected_gpf = lumped_vertex_weights(src) * h0 / cfg.gamma_f
    np.testing.assert_allclose(gpf, expected_gpf, atol=1e-9)
