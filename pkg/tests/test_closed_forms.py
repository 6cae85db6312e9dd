import numpy as np
import pytest

from mmbm.acceptance import random_common_params, random_nodiff_params
from mmbm.closed_forms import (CommonTwoState, DividendTwoStateParams, TwoStateCommonParams, TwoStateParams,
                               cf_common_two_state, cf_dividend_two_state, cf_nodiff_state1, cf_nodiff_state2,
                               cf_regeneration, cf_single_state)
from mmbm.dividend import make_dividend_model, solve_value_function
from mmbm.errors import SignConstraintViolated
from mmbm.stationary import balance_residual, solve_stationary

REF_COMMON = TwoStateCommonParams(-0.5, 1.0, 1.0, 1.0, 1.0, 2.0)
REF_CASE1 = TwoStateParams(-1.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 2.0)
REF_CASE2 = TwoStateParams(-2.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0)
REF_DIVIDEND = DividendTwoStateParams(1.0, 0.5, (0.5, -0.5), (1.0, 1.0), 1.0, 2.0)


def _sup(a, b, n=200):
    zs = np.linspace(0, float(np.max(a.model.b)), n)
    return max(float(np.max(np.abs(a.cdf(zs, i) - b.cdf(zs, i)))) for i in range(a.model.n_states))


# common drift and diffusion ------------------------------------------------

def test_common_scalars():
    cf = CommonTwoState(TwoStateCommonParams(-1.0, 1.0, 1.0, 1.5, 1.0, 2.0))
    assert cf.delta == pytest.approx(-1.0)
    assert cf.theta2 == pytest.approx(-2.0)


def test_common_reference_values():
    cf = cf_common_two_state(REF_COMMON)
    assert cf.pi2_at_b1 == pytest.approx(0.4108187318725393, abs=1e-13)
    assert cf.cdf(0.5, 0) == pytest.approx(0.30159280521421616, abs=1e-13)
    assert cf.cdf(1.5, 1) == pytest.approx(0.47317705330910204, abs=1e-13)


def test_common_matches_general_solver():
    cf = cf_common_two_state(REF_COMMON)
    assert _sup(cf, solve_stationary(cf.model)) <= 1e-8
    assert balance_residual(cf) <= 1e-8


def test_common_random_draws(rng):
    for _ in range(10):
        cf = cf_common_two_state(random_common_params(rng))
        assert _sup(cf, solve_stationary(cf.model)) <= 1e-8


def test_common_rejects_zero_drift():
    with pytest.raises(SignConstraintViolated):
        cf_common_two_state(TwoStateCommonParams(0.0, 1.0, 1.0, 1.0, 1.0, 2.0))


def test_regeneration_reference():
    reg = cf_regeneration(REF_COMMON)
    assert reg.eta == pytest.approx(0.08918126812746069, abs=1e-13)
    assert reg.H(1.0) == pytest.approx(0.0, abs=1e-15)
    assert reg.H(2.0) == pytest.approx(1.0, abs=1e-15)
    assert reg.H(1.5) == pytest.approx(0.6992311585818476, abs=1e-12)
    zs = np.linspace(1.0, 2.0, 101)
    assert np.all(np.diff(reg.H(zs)) >= 0)
    assert reg.mean_cycle == pytest.approx(1 / reg.eta)


def test_regeneration_density_identity():
    cf = cf_common_two_state(REF_COMMON)
    reg = cf.regeneration()
    zs = np.linspace(1.01, 1.99, 50)
    lhs = reg.eta * reg.H_density(zs)
    rhs = REF_COMMON.q21 * cf.derivative(zs, 1)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


# one state without diffusion -----------------------------------------------

def test_case1_substitution():
    cf = cf_nodiff_state1(TwoStateParams(-2.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 2.0))
    assert cf.lam12_minus == pytest.approx(0.5)


def test_case1_reference_values():
    cf = cf_nodiff_state1(REF_CASE1)
    assert cf.lam_plus == pytest.approx(-0.41421356237309515, abs=1e-14)
    assert cf.gamma_plus == pytest.approx(0.7071067811865476, abs=1e-14)
    assert cf.lam21_minus == pytest.approx(1.4142135623730951, abs=1e-14)
    assert cf.pi2_at_b1 == pytest.approx(0.3034913690127134, abs=1e-13)
    assert cf.atom_mass(0, 0.0) == pytest.approx(0.27192885693697005, abs=1e-13)


def test_case1_defining_residuals():
    plus, minus = cf_nodiff_state1(REF_CASE1).defining_residuals()
    assert np.max(np.abs(plus)) <= 1e-10 and np.max(np.abs(minus)) <= 1e-10


def test_case1_matches_general_solver(rng):
    cf = cf_nodiff_state1(REF_CASE1)
    gen = solve_stationary(cf.model)
    assert _sup(cf, gen) <= 1e-8
    assert cf.atom_mass(0, 0.0) == pytest.approx(gen.atom_mass(0, 0.0), abs=1e-10)
    for _ in range(10):
        cf = cf_nodiff_state1(random_nodiff_params(rng, 1))
        assert _sup(cf, solve_stationary(cf.model)) <= 1e-8
        assert max(np.max(np.abs(r)) for r in cf.defining_residuals()) <= 1e-10
        assert balance_residual(cf) <= 1e-8


def test_case2_substitution():
    cf = cf_nodiff_state2(TwoStateParams(-5.0, 1.0, 4.0, 0.0, 1.0, 2.0, 1.0, 2.0))
    assert cf.lam21_plus == pytest.approx(0.5)
    assert cf.rate2 == pytest.approx(0.5)


def test_case2_reference_values():
    cf = cf_nodiff_state2(REF_CASE2)
    assert cf.lam_minus == pytest.approx(0.4384471871911697, abs=1e-14)
    assert cf.gamma_minus == pytest.approx(1.7807764064044151, abs=1e-14)
    assert cf.lam12_plus == pytest.approx(3.5615528128088303, abs=1e-14)
    assert cf.pi2_at_b1 == pytest.approx(0.24145763165504894, abs=1e-13)
    assert cf.atom_mass(1, 2.0) == pytest.approx(0.0951124219858818, abs=1e-13)


def test_case2_upper_interval_is_single_exponential():
    cf = cf_nodiff_state2(REF_CASE2)
    zs = np.linspace(1.1, 1.9, 9)
    tail = cf.pi[1] - cf.cdf(zs, 1)
    ratios = tail[1:] / tail[:-1]
    assert np.allclose(ratios, np.exp(-cf.rate2 * 0.1))


def test_case2_matches_general_solver(rng):
    cf = cf_nodiff_state2(REF_CASE2)
    gen = solve_stationary(cf.model)
    assert _sup(cf, gen) <= 1e-8
    assert cf.atom_mass(1, 2.0) == pytest.approx(gen.atom_mass(1, 2.0), abs=1e-10)
    for _ in range(10):
        cf = cf_nodiff_state2(random_nodiff_params(rng, 2))
        assert _sup(cf, solve_stationary(cf.model)) <= 1e-8
        assert max(np.max(np.abs(r)) for r in cf.defining_residuals()) <= 1e-10
        assert balance_residual(cf) <= 1e-8


@pytest.mark.parametrize("factory, params", [
    (cf_nodiff_state1, TwoStateParams(1.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 2.0)),
    (cf_nodiff_state1, TwoStateParams(-1.0, 0.0, 3.0, 1.0, 1.0, 1.0, 1.0, 2.0)),
    (cf_nodiff_state2, TwoStateParams(-2.0, 1.0, -1.0, 0.0, 1.0, 1.0, 1.0, 2.0)),
    (cf_nodiff_state2, TwoStateParams(-2.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0)),
])
def test_case_sign_constraints(factory, params):
    with pytest.raises(SignConstraintViolated):
        factory(params)


# single state ----------------------------------------------------------------

def test_single_state():
    cf = cf_single_state(-1.0, 2 ** 0.5, 0.0, 1.0)
    z = np.linspace(0, 1, 101)
    assert np.max(np.abs(cf.cdf(z, 0) - (1 - np.exp(-z)) / (1 - np.exp(-1)))) <= 1e-15
    assert cf.cdf(0.0, 0) == 0.0 and cf.cdf(1.0, 0) == 1.0
    assert _sup(cf, solve_stationary(cf.model)) <= 1e-10
    with pytest.raises(SignConstraintViolated):
        cf_single_state(0.0, 1.0, 0.0, 1.0)


# dividends -----------------------------------------------------------------

def test_dividend_roots_and_identities():
    cf = cf_dividend_two_state(REF_DIVIDEND)
    assert np.allclose(cf.roots, [-2.488489984622653, -0.8985641860394548, 0.8985641860394548, 2.488489984622653],
                       atol=1e-12)
    assert cf.quartic_residual() <= 1e-9
    assert np.max(np.abs(cf.F(0.0))) <= 1e-12
    assert cf.f(REF_DIVIDEND.b2, 1) == pytest.approx(0.5 / 1.5, abs=1e-14)
    assert cf.h(REF_DIVIDEND.b2) == pytest.approx(1.0) and cf.h(REF_DIVIDEND.b2, 1) == pytest.approx(0.0)


def test_dividend_reference_values():
    cf = cf_dividend_two_state(REF_DIVIDEND)
    assert cf.value(0.5, 0) == pytest.approx(0.4299233208628236, abs=1e-12)
    assert cf.value(1.0, 1) == pytest.approx(0.4659480574388839, abs=1e-12)
    assert cf.value(2.0, 1) == pytest.approx(1.2082238564059575, abs=1e-12)
    assert cf.value(1.0, 0) == pytest.approx(0.8693773356690421, abs=1e-12)
    assert cf.k3 == pytest.approx(-0.4824721451511817, abs=1e-12)
    assert np.allclose(cf.k.real, [-0.390625917578314, -0.24963419813603924], atol=1e-12)


def test_dividend_boundary_conditions():
    cf = cf_dividend_two_state(REF_DIVIDEND)
    assert abs(cf.value(0.0, 0)) <= 1e-12 and abs(cf.value(0.0, 1)) <= 1e-12
    assert cf.derivative(1.0, 0) == pytest.approx(1.0, abs=1e-10)
    assert cf.derivative(2.0, 1) == pytest.approx(1.0, abs=1e-10)
    assert max(abs(g) for g in cf.gluing_gaps()) <= 1e-10
    assert cf.residual() <= 1e-8


def test_dividend_matches_general_solver():
    cf = cf_dividend_two_state(REF_DIVIDEND)
    vf = solve_value_function(make_dividend_model(cf.model.to_dict(), delta=0.5))
    zs = cf.grid(200)
    for j in range(2):
        assert np.max(np.abs(cf.value(zs, j) - vf.value(zs, j))) <= 1e-6


def test_dividend_overshoot_above_first_barrier():
    cf = cf_dividend_two_state(REF_DIVIDEND)
    assert cf.value(1.3, 0) == pytest.approx(cf.value(1.0, 0) + 0.3)


def test_dividend_sign_constraints():
    with pytest.raises(SignConstraintViolated):
        cf_dividend_two_state(DividendTwoStateParams(1.0, 0.5, (0.5, -0.5), (0.0, 1.0), 1.0, 2.0))
    with pytest.raises(SignConstraintViolated):
        cf_dividend_two_state(DividendTwoStateParams(1.0, 0.0, (0.5, -0.5), (1.0, 1.0), 1.0, 2.0))
