import numpy as np
import pytest

from mmbm.decomposition import compute_partition
from mmbm.errors import DegenerateZeroMode, SingularA0
from mmbm.model import validate_model
from mmbm.spectral import QuadraticPencil, build_pencil, particular_solution, solve_pencil

from mmbm.acceptance import random_model


def _modes(pencil):
    return np.sort_complex(solve_pencil(pencil).modes)


def _scalar(a2, a1, a0):
    return QuadraticPencil(np.array([[a2]], float), np.array([[a1]], float), np.array([[a0]], float))


def test_single_state_stationary_modes():
    m = validate_model({"q": [[0]], "mu": [-1], "sigma": [2 ** 0.5], "a": [0], "b": [1]})
    pencil = build_pencil(m, compute_partition(m), 0)
    assert np.allclose(_modes(pencil), [-1, 0], atol=1e-14)


def test_common_two_state_modes():
    m = validate_model({"q": [[-1, 1], [1, -1]], "mu": [-1, -1], "sigma": [2 ** 0.5] * 2, "a": [0, 0], "b": [1, 2]})
    pencil = build_pencil(m, compute_partition(m), 0)
    assert np.allclose(_modes(pencil), [-2, -1, 0, 1], atol=1e-12)


def test_dividend_pencil_modes():
    m = validate_model({"q": [[0]], "mu": [0], "sigma": [2 ** 0.5], "a": [0], "b": [1]}, for_solver=False)
    pencil = build_pencil(m, compute_partition(m), 0, "dividend", delta=0.5)
    assert np.allclose(_modes(pencil), [-2 ** -0.5, 2 ** -0.5], atol=1e-14)
    with pytest.raises(ValueError):
        build_pencil(m, compute_partition(m), 0, "dividend")


def test_scalar_quadratic():
    pair = solve_pencil(_scalar(1, 0, -1))
    assert np.allclose(pair.modes, [-1, 1])
    assert np.allclose(np.abs(pair.gamma), 1)


def test_upper_interval_scalar_pencil():
    assert np.allclose(_modes(_scalar(1, 0, -2)), [-2 ** 0.5, 2 ** 0.5])


def test_mode_count_with_pure_drift_state(nodiff1_model):
    pencil = build_pencil(nodiff1_model, compute_partition(nodiff1_model), 0)
    assert pencil.mode_count == 3
    assert solve_pencil(pencil).m == 3


def test_mode_count_matches_determinant_degree(rng):
    for _ in range(30):
        n = int(rng.integers(1, 4))
        sigma = rng.uniform(0.5, 2, n) * (rng.random(n) < 0.6)
        mu = rng.uniform(-2, 2, n)
        q = rng.uniform(0.2, 2, (n, n))
        np.fill_diagonal(q, 0)
        np.fill_diagonal(q, -q.sum(1))
        pencil = QuadraticPencil(np.diag(sigma**2 / 2), np.diag(-mu), q.T)
        # degree of det P from samples on a circle
        lams = np.exp(2j * np.pi * np.arange(16) / 16) * 3.0
        coeffs = np.fft.fft([np.linalg.det(pencil(x)) for x in lams]) / 16
        powers = coeffs / 3.0 ** np.arange(16)
        degree = max(k for k in range(16) if abs(powers[k]) > 1e-9)
        assert degree == pencil.mode_count


def test_particular_solution_upper_interval():
    q12, q21 = 1.5, 0.5
    pi1, pi2 = q21 / (q12 + q21), q12 / (q12 + q21)
    part = particular_solution(_scalar(0.5, 0.5, -q21), [-q12 * pi1])
    assert part.alpha[0, 0] == pytest.approx(pi2)
    assert part.beta[0, 0] == 0


def test_particular_solution_zero_forcing():
    part = particular_solution(QuadraticPencil(np.eye(2), np.eye(2), np.array([[-1.0, 1], [1, -1]])), [0, 0])
    assert not np.any(part.alpha) and not np.any(part.beta)


def test_particular_solution_singular_a0():
    with pytest.raises(SingularA0):
        particular_solution(QuadraticPencil(np.eye(2), np.eye(2), np.array([[-1.0, 1], [1, -1]])), [1, 0])


def test_particular_solution_affine_with_parameter():
    # w'' - w/2 = -lam (z - b + C) with C symbolic: columns (fixed, C)
    lam, b = 1.0, 1.0
    pencil = _scalar(1, 0, -0.5 - lam)
    part = particular_solution(pencil, np.array([[lam * b, -lam]]), np.array([[-lam, 0.0]]))
    for c in (0.0, 0.7):
        for z in (0.1, 0.5, 0.9):
            w = part.alpha[0] @ [1, c] + part.beta[0] @ [1, c] * z
            assert pencil.a0[0, 0] * w == pytest.approx(-lam * (z - b + c))


def test_degenerate_zero_mode():
    pencil = QuadraticPencil(np.eye(2) * 0.5, np.zeros((2, 2)), np.array([[-1.0, 1], [1, -1]]))
    with pytest.raises(DegenerateZeroMode):
        solve_pencil(pencil)


def test_pencil_residual_random_models(rng):
    worst = 0.0
    for _ in range(200):
        model = random_model(rng, int(rng.integers(1, 5)))
        part = compute_partition(model)
        for k in range(part.n_intervals):
            pencil = build_pencil(model, part, k)
            pair = solve_pencil(pencil)
            worst = max(worst, pair.residual(pencil))
            assert pair.stacked_rank() == pencil.mode_count
            cplx = pair.modes[np.abs(pair.modes.imag) > 0]
            if cplx.size:
                dist = np.abs(cplx[:, None] - cplx.conj()[None, :]).min(axis=1)
                assert np.all(dist <= 1e-8 * np.abs(cplx))
    assert worst <= 1e-10
