import numpy as np
import pytest

from mmbm.dividend import (ValueFunction, assemble_dividend_system, evaluate_value, evaluate_value_derivative,
                           make_dividend_model, solve_value_function, value_residual, verify_boundary)
from mmbm.errors import ModelValidationError
from mmbm.piecewise import PiecewiseSolution

R = 2 ** -0.5
SINGLE = {"q": [[0.0]], "mu": [0.0], "sigma": [2 ** 0.5], "a": [0.0], "b": [1.0]}
TWO = {"q": [[-1, 1], [1, -1]], "mu": [0.5, -0.5], "sigma": [1, 1], "a": [0, 0], "b": [1, 2]}


def _exact_single(z):
    return np.sinh(R * z) / (R * np.cosh(R))


def test_single_state_value():
    vf = solve_value_function(make_dividend_model(SINGLE, delta=0.5))
    z = np.linspace(0, 1, 101)
    assert np.max(np.abs(vf.value(z, 0) - _exact_single(z))) <= 1e-13
    assert evaluate_value(vf, 0.0, 0) == pytest.approx(0.0, abs=1e-15)
    assert evaluate_value_derivative(vf, 1.0, 0) == pytest.approx(1.0, abs=1e-12)
    assert vf.boundary_constants[0] == pytest.approx(_exact_single(1.0))


def test_single_state_system_is_three_by_three():
    system = assemble_dividend_system(make_dividend_model(SINGLE, delta=0.5))
    assert system.matrix.shape == (3, 3)


def test_two_state_system_is_eight_by_eight():
    system = assemble_dividend_system(make_dividend_model(TWO, delta=0.5))
    assert system.matrix.shape == (8, 8)
    families = sorted(lab["family"] for lab in system.labels)
    assert families.count("tie") == 2
    assert families.count("smoothness") == 1 and families.count("continuity") == 1


def test_pure_drift_state_has_no_smoothness_row():
    raw = dict(TWO, sigma=[1.0, 0.0])
    system = assemble_dividend_system(make_dividend_model(raw, delta=0.5))
    assert "smoothness" not in [lab["family"] for lab in system.labels]
    assert system.matrix.shape[0] == system.matrix.shape[1]
    vf = solve_value_function(system)
    assert vf.residual() <= 1e-6


def test_symmetric_collapse():
    raw = {"q": [[-1, 1], [1, -1]], "mu": [0.0, 0.0], "sigma": [2 ** 0.5] * 2, "a": [0, 0], "b": [1, 1]}
    vf = solve_value_function(make_dividend_model(raw, delta=0.5))
    z = np.linspace(0, 1, 51)
    for j in range(2):
        assert np.max(np.abs(vf.value(z, j) - _exact_single(z))) <= 1e-12


def test_reference_values():
    vf = solve_value_function(make_dividend_model(TWO, delta=0.5))
    assert vf.value(0.5, 0) == pytest.approx(0.4299233208628236, abs=1e-12)
    assert vf.value(1.0, 1) == pytest.approx(0.4659480574388839, abs=1e-12)
    assert vf.value(2.0, 1) == pytest.approx(1.2082238564059575, abs=1e-12)
    assert vf.boundary_constants == pytest.approx([0.8693773356690421, 1.2082238564059575], abs=1e-12)


def test_overshoot_convention():
    vf = solve_value_function(make_dividend_model(TWO, delta=0.5))
    assert vf.value(1.3, 0) == pytest.approx(vf.value(1.0, 0) + 0.3)
    assert vf.value(2.3, 1) == pytest.approx(vf.value(2.0, 1) + 0.3)
    assert vf.value(-0.1, 0) == 0.0


def test_verify_boundary_passes_on_reference():
    for raw in (SINGLE, TWO):
        report = verify_boundary(solve_value_function(make_dividend_model(raw, delta=0.5)))
        assert report.passed, report.to_dict()
        names = {c.name for c in report.checks}
        assert {"value_at_zero", "slope_at_barrier", "finite_difference_slope", "concavity"} <= names


def test_concavity_is_informational():
    # V'' = r^2 V > 0 for the driftless single state, so the margin is positive
    report = verify_boundary(solve_value_function(make_dividend_model(SINGLE, delta=0.5)))
    conc = [c for c in report.checks if c.name == "concavity"][0]
    assert not conc.gating and conc.value > 0
    assert report.passed


def test_perturbed_coefficient_fails():
    vf = solve_value_function(make_dividend_model(TWO, delta=0.5))
    x = np.concatenate(vf.solution.coefficients + [vf.solution.extras])
    x[0] += 1e-3
    bad = ValueFunction(vf.dmodel, vf.partition, PiecewiseSolution(vf.solution.segments, x, n_extra=2),
                        vf.report, vf.labels)
    assert not verify_boundary(bad).passed


def test_random_models_residual(rng):
    for _ in range(20):
        n = int(rng.integers(1, 4))
        q = rng.uniform(0.2, 2.0, (n, n))
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        raw = {"q": q.tolist(), "mu": rng.uniform(-1, 1, n).tolist(), "sigma": rng.uniform(0.5, 1.5, n).tolist(),
               "a": [0.0] * n, "b": rng.choice([0.5, 1.0, 1.5, 2.0], n).tolist()}
        delta = float(rng.uniform(0.1, 1.0))
        vf = solve_value_function(make_dividend_model(raw, delta=delta))
        scale = max(delta, float(np.abs(q).max()), 1.0)
        assert value_residual(vf) <= 1e-6 * scale
        assert vf.verify_boundary().passed


@pytest.mark.parametrize("raw, delta, code", [
    (SINGLE, 0.0, "NonPositiveDiscount"),
    (dict(SINGLE, a=[0.5], b=[1.0]), 0.5, "NonZeroLowerBarrier"),
    (dict(TWO, mu=[0.0, -0.5], sigma=[0.0, 1.0]), 0.5, "StaticState"),
])
def test_dividend_model_validation(raw, delta, code):
    with pytest.raises(ModelValidationError) as exc:
        make_dividend_model(raw, delta=delta)
    assert code in exc.value.codes


def test_delta_from_model_json():
    dm = make_dividend_model(dict(SINGLE, delta=0.5))
    assert dm.delta == 0.5


def test_diagnostics_keys():
    diag = solve_value_function(make_dividend_model(TWO, delta=0.5)).diagnostics()
    assert diag["n_unknowns"] == 8
    assert diag["boundary"]["passed"]
    assert diag["ode_residual"] <= 1e-8
