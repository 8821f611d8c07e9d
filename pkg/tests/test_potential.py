import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from droplet_lab.potential import (
    InvalidDeltaError,
    InvalidPotentialError,
    PotentialSpec,
    check_delta,
    delta_admissible,
    delta_gap,
    eval_w,
    lambda_convexity,
)


def test_gaussian_well_constants(gw):
    assert gw.lam == pytest.approx(-4 * math.exp(-1.5), abs=1e-12)
    assert gw.delta_prime == pytest.approx(math.sqrt(1.5 - math.log(2)), abs=1e-12)
    # frozen: w(0.5) + λ 0.25/2
    assert float(delta_gap(gw, 0.5)) == pytest.approx(1 - math.exp(-0.25) - 0.5 * math.exp(-1.5), rel=1e-12)
    assert gw.c_w > 0


def test_lambda_is_infimum_of_hessian_spectrum(gw):
    r = np.linspace(1e-4, 6, 200001)
    _, dw, d2w = eval_w(gw, r)
    assert np.min(np.minimum(d2w, dw / r)) == pytest.approx(gw.lam, abs=1e-9)


def test_expression_matches_closed_form(gw):
    ex = PotentialSpec.from_expression("1 - exp(-r**2)")
    assert ex.lam == pytest.approx(gw.lam, abs=1e-9)
    assert ex.delta_prime == pytest.approx(gw.delta_prime, abs=1e-9)
    r = np.linspace(0, 3, 50)
    for a, b in zip(eval_w(ex, r), eval_w(gw, r)):
        np.testing.assert_allclose(a, b, atol=1e-13)


def test_user_radial_callbacks(gw):
    spec = PotentialSpec.user_radial(lambda r: eval_w(gw, r)[0], lambda r: eval_w(gw, r)[1],
                                     lambda r: eval_w(gw, r)[2])
    assert spec.lam == pytest.approx(gw.lam, abs=1e-9)
    assert lambda_convexity(spec) == pytest.approx(gw.lam, abs=1e-9)


@pytest.mark.parametrize("expr,clause", [
    ("2 - exp(-r**2)", "w(0)=0"),
    ("r**2", "-min w'' > 0"),
    ("1 - exp(-(r-1)**2) - (1 - exp(-1))", "w'(0)=0"),
    ("r**2*exp(-r**2)", "w'(r)>0 for r>0"),
])
def test_invalid_potentials_name_the_clause(expr, clause):
    with pytest.raises(InvalidPotentialError) as err:
        PotentialSpec.from_expression(expr)
    assert err.value.clause == clause


def test_weak_core_rejected():
    # w''(0) = 2 but a deep negative curvature further out
    with pytest.raises(InvalidPotentialError) as err:
        PotentialSpec.from_expression("r**4/(1 + r**4) + r**2/(100*(1 + r**2))")
    assert err.value.clause == "w''(0) > -min w''"


def test_gaussian_params_validated():
    with pytest.raises(InvalidPotentialError):
        PotentialSpec.gaussian_well(-1.0, 1.0)


def test_check_delta(gw):
    check_delta(gw, 0.5)
    with pytest.raises(InvalidDeltaError, match="delta-condition"):
        check_delta(gw, 0.95)
    with pytest.raises(InvalidDeltaError):
        check_delta(gw, 0.0)


@given(st.floats(0.05, 0.99))
def test_delta_condition_holds_below_delta_prime(frac, ):
    gw = PotentialSpec.gaussian_well()
    d = frac * gw.delta_prime
    assert delta_admissible(gw, d)
    assert float(delta_gap(gw, d)) >= gw.c_w * d * d - 1e-12


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_scaling_of_gaussian_constants(a, s):
    spec = PotentialSpec.gaussian_well(a, s)
    assert spec.lam == pytest.approx(-4 * a * math.exp(-1.5) / s**2, rel=1e-12)
    # δ′ is where d/dδ (w + λδ²/2) vanishes
    _, dw, _ = eval_w(spec, spec.delta_prime)
    assert float(dw) + spec.lam * spec.delta_prime == pytest.approx(0.0, abs=1e-10 * a / s)
    assert spec.delta_prime == pytest.approx(s * math.sqrt(1.5 - math.log(2)), rel=1e-12)


def test_to_config(gw):
    assert gw.to_config() == {"family": "GaussianWell", "params": [1.0, 1.0]}
    assert PotentialSpec.from_expression("1 - exp(-r**2)").to_config()["expression"] == "1 - exp(-r**2)"
