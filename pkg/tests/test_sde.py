import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from droplet_lab.distributions import PointMass, UniformBall
from droplet_lab.geometry import FreeSystem, ReducedSystem, grad_hamiltonian, project, reduced_basis
from droplet_lab.potential import InvalidDeltaError, PotentialSpec
from droplet_lab.rng import stream_keys, normals
from droplet_lab.sde import (
    InsufficientStatisticsError,
    SimParams,
    SimulationBlowupError,
    SurvivalFit,
    dt_max,
    estimate_lambda1,
    mean_exit_time,
    run_killed_ensemble,
    simulate_killed,
    simulate_particles,
    step_em,
    step_em_reduced,
    survival_curve,
)

GW = PotentialSpec.gaussian_well()


def test_dt_max_enforced():
    assert dt_max(8) == pytest.approx(0.01)
    assert dt_max(20) == pytest.approx(0.005)
    assert dt_max(1) == 1e-2
    with pytest.raises(ValueError, match="dt_max"):
        SimParams(beta=20, dt=0.01, t_max=1)
    SimParams(beta=20, dt=0.01, t_max=1, allow_large_dt=True)


def test_step_at_critical_point_without_noise():
    p = SimParams(beta=1, dt=1e-3, t_max=1)
    np.testing.assert_array_equal(step_em(GW, p, np.zeros((3, 2)), np.zeros((3, 2))), 0)


@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 1000))
def test_projection_commutes_with_step(N, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, d))
    z = rng.normal(size=(N, d))
    p = SimParams(beta=2.0, dt=1e-3, t_max=1)
    s = ReducedSystem(GW, N, d)
    B = reduced_basis(N, d)
    full = project(step_em(GW, p, x, z)).reduced
    red = step_em_reduced(s, p, project(x).reduced, z.reshape(-1) @ B)
    np.testing.assert_allclose(full, red, atol=1e-12)
    # centre of mass moves by the noise alone
    com = step_em(GW, p, x, z).mean(axis=0) - x.mean(axis=0)
    np.testing.assert_allclose(com, p.noise_scale * z.mean(axis=0), atol=1e-12)


def test_blowup_reports_step():
    p = SimParams(beta=1, dt=1e-3, t_max=1)
    with pytest.raises(SimulationBlowupError) as err:
        step_em(GW, p, np.array([[0.0], [np.inf]]), np.zeros((2, 1)), step=7)
    assert err.value.step == 7


def test_killed_trajectory_invariants(sys21):
    p = SimParams(beta=2.0, dt=1e-3, t_max=50, seed=4)
    tr = simulate_killed(sys21, p, [0.0], path_id=3)
    R = sys21.ball_radius(0.5)
    assert tr.killed
    assert np.all(np.linalg.norm(tr.states, axis=1) < R)
    # the trajectory agrees with the ensemble runner for the same path id
    ens = run_killed_ensemble(sys21, SimParams(beta=2.0, dt=1e-3, t_max=50, seed=4, n_paths=5))
    assert ens.exit_times[3] == tr.exit_time
    rows = list(tr.to_rows())
    assert rows[-1][-1] == 1 and math.isnan(rows[-1][1])


def test_no_exit_at_low_temperature_short_horizon(sys21):
    p = SimParams(beta=60.0, dt=1e-3, t_max=0.5, seed=1)
    assert not simulate_killed(sys21, p, [0.0]).killed


def test_invalid_delta_rejected(sys21):
    with pytest.raises(InvalidDeltaError):
        run_killed_ensemble(sys21, SimParams(beta=2, dt=1e-3, t_max=1, delta=0.95, n_paths=3))
    with pytest.raises(ValueError):
        simulate_killed(sys21, SimParams(beta=2, dt=1e-3, t_max=1), [1.0])


def test_ensemble_chunk_and_order_independent(sys21):
    p = SimParams(beta=3.0, dt=1e-3, t_max=3.0, n_paths=300, seed=11)
    init = UniformBall([0.1], 0.3)
    a = run_killed_ensemble(sys21, p, init, snapshot_times=[0.5, 2.0])
    b = run_killed_ensemble(sys21, p, init, snapshot_times=[0.5, 2.0], chunk_size=37, n_jobs=2)
    np.testing.assert_array_equal(a.exit_times, b.exit_times)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    # paths are keyed by id: a run over the tail reproduces those paths
    c = run_killed_ensemble(sys21, SimParams(beta=3.0, dt=1e-3, t_max=3.0, n_paths=100, seed=11), init,
                            path_offset=200)
    np.testing.assert_array_equal(c.exit_times, a.exit_times[200:])


def test_survival_curve_monotone(sys21):
    ens = run_killed_ensemble(sys21, SimParams(beta=3.0, dt=1e-3, t_max=5.0, n_paths=400, seed=2))
    t, S = survival_curve(ens.exit_times, np.linspace(0, 5, 60))
    assert S[0] == 1.0 and np.all(np.diff(S) <= 0)
    assert ens.survival_at(5.0) == pytest.approx(S[-1])


def test_estimate_lambda1_edge_cases():
    t = np.linspace(0, 1, 11)
    assert estimate_lambda1(t, np.ones(11), (0, 1), n_paths=100) == (0.0, 1.0)
    with pytest.raises(InsufficientStatisticsError):
        estimate_lambda1(t, np.full(11, 0.01), (0, 1), n_paths=100)


def test_survival_fit_recovers_exponential_rate():
    rng = np.random.default_rng(0)
    tau = rng.exponential(1 / 0.3, size=20000)
    fit = SurvivalFit(t0=0.5).fit(tau)
    assert fit.lambda1_ == pytest.approx(0.3, rel=0.03)
    assert fit.alpha_ == pytest.approx(1.0, rel=0.05)
    assert fit.predict([0.0])[0] == pytest.approx(fit.alpha_)
    assert SurvivalFit(t0=0.5).get_params()["t0"] == 0.5


def test_survival_fit_censored():
    fit = SurvivalFit().fit(np.full(100, np.inf), horizon=10.0)
    assert fit.censored_ and fit.lambda1_ == 0.0
    assert fit.lambda1_upper_ == pytest.approx(3.0 / (100 * 10.0))


def test_free_brownian_mean_exit_time():
    # w ≡ 0: E τ = R² β / 2 for a start at the centre of (-R, R)
    free = FreeSystem(1, 2)
    beta = 1.0
    R = free.ball_radius(0.5)
    ens = run_killed_ensemble(free, SimParams(beta=beta, dt=2e-5, t_max=5.0, n_paths=3000, seed=8))
    m, se = mean_exit_time(ens.exit_times)
    # discrete monitoring overestimates τ by O(√dt)
    assert abs(m - R**2 * beta / 2) < 4 * se + 0.02 * m


def test_exit_time_median_decreasing_in_temperature(sys21):
    med = []
    for beta in (0.1, 0.5, 2.0):
        ens = run_killed_ensemble(sys21, SimParams(beta=beta, dt=1e-4, t_max=20.0, n_paths=400, seed=3))
        assert np.all(np.isfinite(ens.exit_times))
        med.append(np.median(ens.exit_times))
    assert med[0] < med[1] < med[2]


def test_lambda_hat_decreasing_in_beta(sys21):
    lam = []
    for beta in (4.0, 6.0, 8.0):
        ens = run_killed_ensemble(sys21, SimParams(beta=beta, dt=1e-3, t_max=60.0, n_paths=2000, seed=6))
        lam.append(SurvivalFit(lambda2=2.0).fit(ens.exit_times, ens.t_max).lambda1_)
    assert lam[0] > lam[1] > lam[2]


def test_weak_order_dt_refinement(sys21):
    """Halving dt with the same Brownian path moves the mean exit time by less than its MC error."""
    beta, dt, n = 4.0, 1e-3, 2000
    R2 = sys21.ball_radius(0.5) ** 2
    keys = stream_keys(21, np.arange(n), 1)
    fine = SimParams(beta=beta, dt=dt / 2, t_max=1)
    coarse = SimParams(beta=beta, dt=dt, t_max=1)
    yc = np.zeros((n, 1))
    yf = np.zeros((n, 1))
    tc = np.full(n, np.inf)
    tf = np.full(n, np.inf)
    for step in range(40000):
        z = normals(keys, 2 * step, 2)
        yf = step_em_reduced(sys21, fine, yf, z[0])
        hit = np.isinf(tf) & (np.sum(yf * yf, axis=1) >= R2)
        tf[hit] = (2 * step + 1) * dt / 2
        yf = step_em_reduced(sys21, fine, yf, z[1])
        hit = np.isinf(tf) & (np.sum(yf * yf, axis=1) >= R2)
        tf[hit] = (2 * step + 2) * dt / 2
        yc = step_em_reduced(sys21, coarse, yc, (z[0] + z[1]) / np.sqrt(2))
        hit = np.isinf(tc) & (np.sum(yc * yc, axis=1) >= R2)
        tc[hit] = (step + 1) * dt
        if np.all(np.isfinite(tc)) and np.all(np.isfinite(tf)):
            break
    m_c, se_c = mean_exit_time(tc)
    m_f, _ = mean_exit_time(tf)
    assert abs(m_c - m_f) < se_c


def test_centre_of_mass_variance():
    N, d, beta, T = 4, 2, 2.0, 0.5
    p = SimParams(beta=beta, dt=1e-2, t_max=T, seed=13)
    x0 = np.random.default_rng(0).normal(size=(N, d)) * 0.3
    tr = simulate_particles(GW, p, x0, path_ids=np.arange(4000))
    com = tr.centre_of_mass[:, -1, :] - x0.mean(axis=0)
    var = com.var(axis=0, ddof=1)
    target = 2 * T / (beta * N)
    se = target * math.sqrt(2 / (len(com) - 1))
    assert np.all(np.abs(var - target) < 5 * se)


def test_exchangeability_of_particle_labels():
    N, d = 3, 2
    p = SimParams(beta=2.0, dt=1e-2, t_max=0.3, seed=1)
    x0 = np.random.default_rng(5).normal(size=(N, d))
    perm = np.array([2, 0, 1])
    keys = stream_keys(1, [0], N * d)
    x, xp = x0.copy(), x0[perm].copy()
    for n in range(30):
        z = normals(keys, n, 1)[0, 0].reshape(N, d)
        x = step_em(GW, p, x, z)
        xp = step_em(GW, p, xp, z[perm])
    np.testing.assert_allclose(xp, x[perm], atol=1e-12)


def test_point_mass_and_ball_sampling():
    pts = UniformBall([0.2, 0.0], 0.1).sample(3, np.arange(500))
    assert np.all(np.linalg.norm(pts - [0.2, 0.0], axis=1) < 0.1)
    np.testing.assert_array_equal(UniformBall([0.0], 1.0).sample(3, [4, 5]), UniformBall([0.0], 1.0).sample(3, np.arange(6))[4:])
    np.testing.assert_array_equal(PointMass([0.5]).sample(0, [1, 2]), [[0.5], [0.5]])
