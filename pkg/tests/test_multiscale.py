import numpy as np
import pytest

from droplet_lab.multiscale import (
    MixtureModel,
    Observable,
    default_initial,
    default_test_functions,
    heat_kernel_remainder,
    identity_rhs,
    strictly_decreasing,
    time_window,
    tv_log_slope,
    verify_identity,
    verify_tv_bound,
)
from droplet_lab.sde import SimParams
from droplet_lab.spectral import density_ratio_norm, dirichlet_spectrum, qsd_and_alpha


@pytest.fixture(scope="module")
def spec8(sys21):
    return dirichlet_spectrum(sys21, 8.0, 0.5, n_points=2001, n_eigs=7)


@pytest.fixture(scope="module")
def nu8(sys21, spec8):
    return default_initial(sys21, 0.5).density(spec8.points)




def test_mixture_measure_mass(spec8, nu8):
    mix = MixtureModel.from_spectral(spec8, nu8)
    assert 0 < mix.alpha <= 1
    for t in (0.0, 0.5, 3.0, 50.0):
        m = mix.measure(t)
        assert m.total == pytest.approx(1.0)
        assert mix.is_probability(t)
    assert mix.mass_at_star(1e6) == pytest.approx(1.0)


def test_identity_exact_at_time_zero(spec8, nu8, sys21):
    """At t = 0 the spectral RHS reproduces ∫f dν up to the truncation bound."""
    _, alpha, _ = qsd_and_alpha(spec8, nu8)
    dv = spec8.grid.cell_volume
    for fn in default_test_functions(spec8.grid.radius):
        rhs, bound = identity_rhs(spec8, alpha, nu8, fn, 0.0, m=6)
        exact = float(np.sum(fn(spec8.points) * nu8) * dv / (np.sum(nu8) * dv))
        assert abs(rhs - exact) <= bound + 1e-8


def test_remainder_bound_decays(sys21, spec8, nu8):
    f = default_test_functions(spec8.grid.radius)[1]
    vals = f(spec8.points)
    bounds = [heat_kernel_remainder(spec8, nu8, vals, 0.0, t)[1] for t in (0.1, 0.5, 1.0)]
    assert strictly_decreasing(bounds)
    with pytest.raises(ValueError):
        # too few eigenpairs for m = 6
        small = dirichlet_spectrum(sys21, 8.0, 0.5, n_points=401)
        heat_kernel_remainder(small, small.gibbs, small.gibbs, 0.0, 1.0)


def test_identity_small_run(sys21, spec8):
    p = SimParams(beta=8.0, dt=1e-4, t_max=1, n_paths=3000, seed=5)
    rows = verify_identity(sys21, p, t_list=(0.5, 1.0), spectral=spec8)
    assert len(rows) == 2 * 4
    assert all(r.status == "pass" for r in rows), [(r.t, r.f, r.residual, r.se) for r in rows]
    one = [r for r in rows if r.f == "one"]
    # ⟨1⟩ is the survival probability and decreases
    assert one[0].lhs > one[1].lhs
    inconclusive = verify_identity(sys21, SimParams(beta=8.0, dt=1e-3, t_max=1, n_paths=50, seed=1),
                                   t_list=(1.0,), spectral=spec8, tolerance=1e-4)
    assert all(r.status == "inconclusive" for r in inconclusive)


def test_tv_bound_small_run(sys21, spec8):
    p = SimParams(beta=8.0, dt=5e-4, t_max=1, n_paths=20000, seed=6)
    rows, mix = verify_tv_bound(sys21, p, t_list=(0.2, 0.4, 0.6), spectral=spec8, bins=30)
    assert all(r.passed for r in rows)
    assert all(r.w1 <= r.w1_bound + 0.01 for r in rows)
    assert tv_log_slope(rows) < 0


def test_time_window_spectral_trends(gw):
    p = SimParams(beta=6.0, dt=5e-4, t_max=1, n_paths=10)
    rows = time_window(gw, 2, 1, p, beta_list=(6.0, 9.0, 12.0), max_horizon=0.0)
    assert all(r.status == "skipped" for r in rows)
    assert strictly_decreasing([r.lambda1_t for r in rows])
    assert strictly_decreasing([-r.lambda2_t for r in rows])
    assert strictly_decreasing([r.one_minus_alpha for r in rows])
    for r in rows:
        assert r.t_beta == pytest.approx(1 / np.sqrt(r.lambda1 * r.lambda2))


def test_density_ratio_norm_of_default_initial(spec8, nu8):
    assert density_ratio_norm(spec8, nu8) > 1.0


def test_observable_star_value():
    f = Observable("c", lambda Y: np.ones(len(Y)), f_star=2.0)
    assert f(np.zeros(1)).shape == (1,)
    assert f.f_star == 2.0
