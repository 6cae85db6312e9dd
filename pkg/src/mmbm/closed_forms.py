"""Explicit two-state solutions used as independent oracles.

Each stationary closed form returns an object with the same evaluation
surface as :class:`mmbm.stationary.StationaryDistribution` (``cdf``,
``derivative``, ``density``, ``atoms``), so the residual and comparison
helpers apply to both.

Every exponent and constant here is checked against the equations that
define it (see the ``defining_residuals`` and ``quartic_residual`` methods)
and against the general solvers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .decomposition import compute_partition
from .errors import RootMultiplicity, SignConstraintViolated
from .model import validate_model
from .stationary import Atom, balance_residual


def _exp_sinh(c, e, shift, z, order):
    """``d^order/dz^order [exp(c z) sinh(e (z - shift))]``; complex-safe."""
    z = np.asarray(z, dtype=float)
    up = (c + e) ** order * np.exp(c * z + e * (z - shift))
    down = (c - e) ** order * np.exp(c * z - e * (z - shift))
    return 0.5 * (up - down)


class _ClosedFormDistribution:
    """Shared clamping and grid logic; subclasses provide ``_piece``."""

    model = None
    atoms: list

    def _setup(self, model):
        self.model = model
        self.partition = compute_partition(model)
        self.pi = model.pi

    def _piece(self, z, i, order):
        raise NotImplementedError

    def cdf(self, z, i):
        z_arr = np.asarray(z, dtype=float)
        zz = np.atleast_1d(z_arr)
        a_i, b_i = self.model.a[i], self.model.b[i]
        inside = self._piece(np.clip(zz, a_i, b_i), i, 0)
        out = np.where(zz < a_i, 0.0, np.where(zz >= b_i, self.pi[i], inside))
        return out if z_arr.ndim else float(out[0])

    def derivative(self, z, i, order=1):
        z_arr = np.asarray(z, dtype=float)
        zz = np.atleast_1d(z_arr)
        a_i, b_i = self.model.a[i], self.model.b[i]
        out = np.where((zz < a_i) | (zz > b_i), 0.0, self._piece(np.clip(zz, a_i, b_i), i, order))
        return out if z_arr.ndim else float(out[0])

    def density(self, z, i):
        return self.derivative(z, i, 1)

    def check_grid(self, n_per_interval=1000, edge=1e-9):
        pts = [np.linspace(lo + edge, hi - edge, n_per_interval)
               for lo, hi in zip(self.partition.breakpoints[:-1], self.partition.breakpoints[1:])]
        return np.unique(np.concatenate(pts))

    def grid(self, n=400):
        lo, hi = self.partition.breakpoints[0], self.partition.breakpoints[-1]
        return np.unique(np.concatenate([np.linspace(lo, hi, n), self.partition.breakpoints]))

    def balance_residual(self, grid=None):
        return balance_residual(self, grid)

    def atom_mass(self, i, location):
        return sum(at.mass for at in self.atoms if at.state == i and at.location == location)


def _two_state_model(mu, sigma, q12, q21, b1, b2):
    return validate_model(
        {"q": [[-q12, q12], [q21, -q21]], "mu": list(mu), "sigma": list(sigma), "a": [0.0, 0.0], "b": [b1, b2]}
    )


def _check_two_state(q12, q21, b1, b2):
    if not (q12 > 0 and q21 > 0):
        raise SignConstraintViolated("both switching rates must be positive")
    if not (0 < b1 < b2):
        raise SignConstraintViolated("need 0 < b1 < b2")


# ---------------------------------------------------------------------------
# common drift and diffusion, modulated buffer


@dataclass(frozen=True)
class TwoStateCommonParams:
    mu: float
    sigma: float
    q12: float
    q21: float
    b1: float
    b2: float

    def validate(self):
        _check_two_state(self.q12, self.q21, self.b1, self.b2)
        if self.mu == 0:
            raise SignConstraintViolated("mu = 0 is the excluded zero-drift case")
        if not self.sigma > 0:
            raise SignConstraintViolated("sigma must be positive")


class CommonTwoState(_ClosedFormDistribution):
    """Two states sharing ``(mu, sigma)`` with buffers ``b1 < b2``."""

    def __init__(self, params):
        params.validate()
        self.params = p = params
        self._setup(_two_state_model((p.mu, p.mu), (p.sigma, p.sigma), p.q12, p.q21, p.b1, p.b2))
        pi1, pi2 = self.pi
        s2 = p.sigma**2
        self.delta = p.mu / s2
        self.theta1 = -np.sqrt(p.mu**2 + 2 * (p.q12 + p.q21) * s2) / s2
        self.theta2 = -np.sqrt(p.mu**2 + 2 * p.q21 * s2) / s2
        self.theta_matrix = (self.theta1 * np.array([[pi2, -pi2], [-pi1, pi1]])
                             + self.delta * np.array([[pi1, pi2], [pi1, pi2]]))
        ev, vec = np.linalg.eig(self.theta_matrix)
        self._ev, self._vec, self._vec_inv = ev, vec, np.linalg.inv(vec)
        self._P = np.diag(self.pi)
        self._P_inv = np.diag(1.0 / self.pi)

        b1, b2 = p.b1, p.b2
        theta_coth = self._matfun(lambda e: e / np.tanh(e * b1))
        kmat = self._P @ theta_coth @ self._P_inv
        self.k1, self.k2 = kmat[1, 0], kmat[1, 1]
        self.k3 = self.theta2 / np.tanh(self.theta2 * (b2 - b1))
        self.pi2_at_b1 = (pi2 * (self.k3 - self.delta) - pi1 * self.k1) / (self.k2 + self.k3)
        self.atoms = []

    def _matfun(self, f):
        return (self._vec * f(self._ev)) @ self._vec_inv

    def _piece(self, z, i, order):
        p = self.params
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        low = z <= p.b1
        v = np.array([self.pi[0], self.pi2_at_b1])
        if np.any(low):
            zl = z[low]
            w = self._vec_inv @ self._P_inv @ v / np.sinh(self._ev * p.b1)
            # exp(delta (z - b1)) sinh(e z), differentiated termwise
            terms = np.stack([_exp_sinh(self.delta, e, 0.0, zl, order) for e in self._ev], axis=1)
            vals = (self._P @ self._vec @ (terms * w).T) * np.exp(-self.delta * p.b1)
            out[low] = vals[i].real
        if np.any(~low):
            zh = z[~low]
            if i == 0:
                out[~low] = self.pi[0] if order == 0 else 0.0
            else:
                scale = (self.pi[1] - self.pi2_at_b1) / np.sinh(self.theta2 * (p.b2 - p.b1))
                # exp(delta (z - b1)) sinh(theta2 (b2 - z)) = -exp(-delta b1) exp(delta z) sinh(theta2 (z - b2))
                shape = -np.exp(-self.delta * p.b1) * _exp_sinh(self.delta, self.theta2, p.b2, zh, order)
                out[~low] = (self.pi[1] if order == 0 else 0.0) - scale * shape
        return out

    def regeneration(self):
        return cf_regeneration(self.params, self)


def cf_common_two_state(params):
    return CommonTwoState(params)


@dataclass(frozen=True)
class RegenerationResult:
    """Rate of clamping down-jumps and law of the pre-jump level on ``(b1, b2]``."""

    eta: float
    params: TwoStateCommonParams
    delta: float
    theta2: float

    def H(self, z):
        p = self.params
        z = np.clip(np.asarray(z, dtype=float), p.b1, p.b2)
        return 1.0 - np.exp(self.delta * (z - p.b1)) * np.sinh(self.theta2 * (p.b2 - z)) / np.sinh(
            self.theta2 * (p.b2 - p.b1))

    def H_density(self, z):
        p = self.params
        z = np.asarray(z, dtype=float)
        num = -np.exp(-self.delta * p.b1) * _exp_sinh(self.delta, self.theta2, p.b2, z, 1)
        return -num / np.sinh(self.theta2 * (p.b2 - p.b1))

    @property
    def mean_cycle(self):
        return 1.0 / self.eta


def cf_regeneration(params, dist=None):
    """Down-jump rate ``q21 (pi2 - Pi2(b1))`` and overshoot law ``H``."""
    dist = dist if dist is not None else CommonTwoState(params)
    eta = params.q21 * (dist.pi[1] - dist.pi2_at_b1)
    return RegenerationResult(eta=float(eta), params=params, delta=dist.delta, theta2=dist.theta2)


# ---------------------------------------------------------------------------
# one state without diffusion


@dataclass(frozen=True)
class TwoStateParams:
    mu1: float
    sigma1: float
    mu2: float
    sigma2: float
    q12: float
    q21: float
    b1: float
    b2: float

    @property
    def kappa(self):
        return (self.q21 * self.mu1 + self.q12 * self.mu2) / (self.q12 + self.q21)


class _NoDiffusionBase(_ClosedFormDistribution):
    def _interval2(self, p, pi2_b1, z, order):
        """State 2 above ``b1`` for a diffusive state 2 (shared sinh form)."""
        s2 = p.sigma2**2
        delta2 = p.mu2 / s2
        theta2 = -np.sqrt(p.mu2**2 + 2 * p.q21 * s2) / s2
        scale = (self.pi[1] - pi2_b1) / np.sinh(theta2 * (p.b2 - p.b1))
        shape = -np.exp(-delta2 * p.b1) * _exp_sinh(delta2, theta2, p.b2, z, order)
        return (self.pi[1] if order == 0 else 0.0) - scale * shape


class NoDiffusionState1(_NoDiffusionBase):
    """State 1 pure drift down (``mu1 < 0``, ``sigma1 = 0``), state 2 diffusive.

    State 1 keeps an atom at the empty level.
    """

    def __init__(self, params):
        p = self.params = params
        _check_two_state(p.q12, p.q21, p.b1, p.b2)
        if not (p.mu1 < 0 and p.sigma1 == 0 and p.sigma2 > 0 and p.kappa < 0):
            raise SignConstraintViolated("case needs mu1 < 0, sigma1 = 0, sigma2 > 0 and negative mean drift")
        self._setup(_two_state_model((p.mu1, p.mu2), (0.0, p.sigma2), p.q12, p.q21, p.b1, p.b2))
        mu1, mu2, q12, q21 = p.mu1, p.mu2, p.q12, p.q21
        s2 = p.sigma2**2
        half = s2 / 2

        self.d1 = np.sqrt(mu1**2 * mu2**2 + 2 * mu1 * mu2 * q12 * half + 4 * mu1**2 * q21 * half
                          + q12**2 * half**2)
        # negative root of the first-passage quadratic
        self.lam_plus = mu2 / s2 - q12 / (2 * mu1) + self.d1 / (mu1 * s2)
        self.gamma_plus = (-0.5 * (mu2 / mu1) * (q12 / q21) - q12**2 * s2 / (4 * q21 * mu1**2)
                           + q12 * self.d1 / (2 * mu1**2 * q21))
        self.d2 = np.sqrt(2 * q21 * mu1**2 * s2 + (mu1 * mu2 + q12 * half) ** 2)
        self.lam12_minus = -q12 / mu1
        # non-negative root, so the matrix below is a sub-generator
        self.lam21_minus = mu2 / s2 + q12 / (2 * mu1) - self.d2 / (mu1 * s2)
        x, y = self.lam12_minus, self.lam21_minus
        self.Lambda_minus = np.array([[-x, x], [y, -y]])
        self.gamma_hat = np.array([[0.0, self.gamma_plus], [0.0, 1.0]])
        self._P = np.diag(self.pi)
        self._P_inv = np.diag(1.0 / self.pi)

        b1 = p.b1
        self.C = self.gamma_hat * np.exp(b1 * self.lam_plus) - scipy.linalg.expm(-b1 * self.Lambda_minus)
        self._C_inv = np.linalg.inv(self.C)
        kmat = self._P @ self._block(b1, 1) @ self._C_inv @ self._P_inv
        self.k1, self.k2 = kmat[1, 0], kmat[1, 1]
        self.delta2 = mu2 / s2
        self.theta2 = -np.sqrt(mu2**2 + 2 * q21 * s2) / s2
        self.k3 = self.theta2 / np.tanh(self.theta2 * (p.b2 - b1))
        # the -delta2 term appears because the lower-interval derivative has no
        # exp(delta z) factor pulled out
        self.pi2_at_b1 = (self.pi[1] * (self.k3 - self.delta2) - self.pi[0] * self.k1) / (
            self.k2 + self.k3 - self.delta2)
        self._v = np.array([self.pi[0], self.pi2_at_b1])
        atom = (self._P @ (self.gamma_hat - np.eye(2)) @ self._C_inv @ self._P_inv @ self._v)[0]
        self.atoms = [Atom(0, 0.0, float(atom))]

    def defining_residuals(self):
        """Residuals of the two first-passage systems at the computed roots."""
        p = self.params
        half = p.sigma2**2 / 2
        lam, g = self.lam_plus, self.gamma_plus
        r_plus = (p.q12 * (1 - g) - p.mu1 * lam * g, -p.q21 * (1 - g) - p.mu2 * lam + half * lam**2)
        x, y = self.lam12_minus, self.lam21_minus
        r_minus = (p.q12 + p.mu1 * x, p.q21 + p.mu2 * y - half * x * y - half * y**2)
        return np.array(r_plus), np.array(r_minus)

    def _block(self, z, order):
        """``d^order/dz^order [Gamma_hat exp(z lam+) - exp(-z Lambda-)]``."""
        plus = self.gamma_hat * self.lam_plus**order * np.exp(z * self.lam_plus)
        minus = np.linalg.matrix_power(-self.Lambda_minus, order) @ scipy.linalg.expm(-z * self.Lambda_minus)
        return plus - minus

    def _piece(self, z, i, order):
        p = self.params
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        w = self._C_inv @ self._P_inv @ self._v
        for idx, zz in np.ndenumerate(z):
            if zz <= p.b1:
                out[idx] = (self._P @ self._block(zz, order) @ w)[i]
            elif i == 0:
                out[idx] = self.pi[0] if order == 0 else 0.0
            else:
                out[idx] = self._interval2(p, self.pi2_at_b1, zz, order)
        return out


class NoDiffusionState2(_NoDiffusionBase):
    """State 1 diffusive, state 2 pure drift up (``mu2 > 0``, ``sigma2 = 0``).

    State 2 keeps an atom at its full buffer ``b2``.
    """

    def __init__(self, params):
        p = self.params = params
        _check_two_state(p.q12, p.q21, p.b1, p.b2)
        if not (p.sigma1 > 0 and p.mu2 > 0 and p.sigma2 == 0 and p.kappa < 0):
            raise SignConstraintViolated("case needs sigma1 > 0, mu2 > 0, sigma2 = 0 and negative mean drift")
        self._setup(_two_state_model((p.mu1, p.mu2), (p.sigma1, 0.0), p.q12, p.q21, p.b1, p.b2))
        mu1, mu2, q12, q21 = p.mu1, p.mu2, p.q12, p.q21
        s1 = p.sigma1**2
        half = s1 / 2

        self.lam21_plus = q21 / mu2
        self.d1 = np.sqrt(2 * q12 * mu2**2 * s1 + (mu2 * mu1 + q21 * half) ** 2)
        self.lam12_plus = -mu1 / s1 - q21 / (2 * mu2) + self.d1 / (mu2 * s1)
        x, y = self.lam12_plus, self.lam21_plus
        self.Lambda_plus = np.array([[-x, x], [y, -y]])
        self.d2 = np.sqrt(mu2**2 * mu1**2 + 2 * mu2 * mu1 * q21 * half + 4 * mu2**2 * q12 * half
                          + q21**2 * half**2)
        # positive root of the first-passage quadratic
        self.lam_minus = -mu1 / s1 + q21 / (2 * mu2) - self.d2 / (mu2 * s1)
        self.gamma_minus = (-0.5 * (mu1 / mu2) * (q21 / q12) - q21**2 * s1 / (4 * q12 * mu2**2)
                            + q21 * self.d2 / (2 * mu2**2 * q12))
        self.Gamma_minus = np.array([1.0, self.gamma_minus])
        self._P = np.diag(self.pi)
        self.c1 = (self._P @ self._block(p.b1, 0))[0]
        self.pi2_at_b1 = float(self.pi[0] / self.c1 * (self._P @ self._block(p.b1, 0))[1])
        self.rate2 = q21 / mu2
        atom = np.exp(-self.rate2 * (p.b2 - p.b1)) * (self.pi[1] - self.pi2_at_b1)
        self.atoms = [Atom(1, float(p.b2), float(atom))]

    def defining_residuals(self):
        p = self.params
        half = p.sigma1**2 / 2
        x, y = self.lam12_plus, self.lam21_plus
        r_plus = (p.q12 - p.mu1 * x - half * y * x - half * x**2, p.q21 - p.mu2 * y)
        lam, g = self.lam_minus, self.gamma_minus
        # the first row couples through q12
        r_minus = (-p.q12 * (1 - g) + p.mu1 * lam + half * lam**2, p.q21 * (1 - g) + p.mu2 * lam * g)
        return np.array(r_plus), np.array(r_minus)

    def _block(self, z, order):
        """``d^order/dz^order [(exp(-z lam-) I - exp(z Lambda+)) Gamma-]``."""
        minus = (-self.lam_minus) ** order * np.exp(-z * self.lam_minus) * self.Gamma_minus
        plus = np.linalg.matrix_power(self.Lambda_plus, order) @ scipy.linalg.expm(z * self.Lambda_plus)
        return minus - plus @ self.Gamma_minus

    def _piece(self, z, i, order):
        p = self.params
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        for idx, zz in np.ndenumerate(z):
            if zz <= p.b1:
                out[idx] = self.pi[0] / self.c1 * (self._P @ self._block(zz, order))[i]
            elif i == 0:
                out[idx] = self.pi[0] if order == 0 else 0.0
            else:
                tail = np.exp(-self.rate2 * (zz - p.b1)) * (self.pi[1] - self.pi2_at_b1)
                out[idx] = self.pi[1] - tail if order == 0 else -((-self.rate2) ** order) * tail
        return out


def cf_nodiff_state1(params):
    return NoDiffusionState1(params)


def cf_nodiff_state2(params):
    return NoDiffusionState2(params)


# ---------------------------------------------------------------------------
# single state


class SingleState(_ClosedFormDistribution):
    """``Pi(z) = (exp(2 mu (z - a) / sigma^2) - 1) / (exp(2 mu (b - a) / sigma^2) - 1)``."""

    def __init__(self, mu, sigma, a, b):
        if mu == 0 or not sigma > 0 or not a < b:
            raise SignConstraintViolated("single-state form needs mu != 0, sigma > 0, a < b")
        self.mu, self.sigma, self.a, self.b = float(mu), float(sigma), float(a), float(b)
        self._setup(validate_model({"q": [[0.0]], "mu": [mu], "sigma": [sigma], "a": [a], "b": [b]}))
        self.rate = 2 * self.mu / self.sigma**2
        self.atoms = []

    def _piece(self, z, i, order):
        z = np.asarray(z, dtype=float)
        denom = np.expm1(self.rate * (self.b - self.a))
        if order == 0:
            return np.expm1(self.rate * (z - self.a)) / denom
        return self.rate**order * np.exp(self.rate * (z - self.a)) / denom


def cf_single_state(mu, sigma, a, b):
    return SingleState(mu, sigma, a, b)


# ---------------------------------------------------------------------------
# dividends, two states with equal switching rates


@dataclass(frozen=True)
class DividendTwoStateParams:
    lam: float
    delta: float
    mu: tuple
    sigma: tuple
    b1: float
    b2: float

    def validate(self):
        if not (self.lam > 0 and self.delta > 0):
            raise SignConstraintViolated("need lam > 0 and delta > 0")
        if not (self.sigma[0] > 0 and self.sigma[1] > 0):
            raise SignConstraintViolated("both states must be diffusive")
        if not (0 < self.b1 < self.b2):
            raise SignConstraintViolated("need 0 < b1 < b2")
        if self.mu[1] == 0:
            raise SignConstraintViolated("the interval-2 special solution needs mu2 != 0")


class DividendTwoState:
    """Expected discounted dividends for two states with ``q12 = q21 = lam``.

    Below ``b1`` the value vector is ``F(z) (k1, k2)`` with ``F(0) = 0``;
    between ``b1`` and ``b2`` state 2 follows ``f + k3 h + g + lam/(lam+delta) V(b1, 1)``
    where ``f`` carries the barrier slope and ``h'(b2) = 0``.
    """

    def __init__(self, params):
        params.validate()
        self.params = p = params
        lam, dl = p.lam, p.delta
        mu1, mu2 = p.mu
        s1, s2 = p.sigma[0] ** 2, p.sigma[1] ** 2
        m1, m2 = 2 * mu1 / s1, 2 * mu2 / s2
        ld = lam + dl
        # characteristic quartic of the lower-interval system
        self.coefficients = np.array([
            1.0,
            m1 + m2,
            m1 * m2 - ld * (2 / s1 + 2 / s2),
            -ld * 4 * (mu1 + mu2) / (s1 * s2),
            4 * dl * (2 * lam + dl) / (s1 * s2),
        ])
        roots = np.roots(self.coefficients)
        dpoly = np.polyder(self.coefficients)
        for _ in range(2):
            roots = roots - np.polyval(self.coefficients, roots) / np.polyval(dpoly, roots)
        if np.max(np.abs(roots.imag)) < 1e-12 * np.max(np.abs(roots)):
            roots = roots.real
        roots = np.sort_complex(roots) if np.iscomplexobj(roots) else np.sort(roots)
        gaps = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.min(gaps) < 1e-8 * max(1.0, np.max(np.abs(roots))):
            raise RootMultiplicity("quartic has a repeated root")
        self.roots = roots
        dp = np.polyval(dpoly, roots)
        top = -(2 * lam / s1) / dp
        bottom = -(2 * ld / s1 - roots * (m1 + roots)) / dp
        X = np.vstack([top, bottom])
        self.X1, self.X2 = X[:, :2], X[:, 2:]
        self._X1_inv, self._X2_inv = np.linalg.inv(self.X1), np.linalg.inv(self.X2)

        self.theta = mu2 / s2
        self.Delta = np.sqrt(self.theta**2 + 2 * ld / s2)
        self.ld = ld
        b1, b2 = p.b1, p.b2
        Fb, dFb = self.F(b1), self.F(b1, 1)
        c = lam / ld
        # unknowns (k1, k2, k3)
        A = np.zeros((3, 3), dtype=complex)
        rhs = np.zeros(3, dtype=complex)
        A[0, :2] = dFb[0]
        rhs[0] = 1.0
        A[1, :2] = dFb[1]
        A[1, 2] = -self.h(b1, 1)
        rhs[1] = self.f(b1, 1) + c
        A[2, :2] = Fb[1] - c * Fb[0]
        A[2, 2] = -self.h(b1)
        rhs[2] = self.f(b1) + self.g(b1)
        sol = np.linalg.solve(A, rhs)
        self.k = sol[:2]
        self.k3 = sol[2].real
        self.v_b1_state1 = float((Fb @ self.k)[0].real)
        self.model = validate_model({"q": [[-lam, lam], [lam, -lam]], "mu": list(p.mu), "sigma": list(p.sigma),
                                     "a": [0.0, 0.0], "b": [b1, b2]}, for_solver=False)
        self.delta = dl
        self.breakpoints = np.array([0.0, b1, b2])

    def check_grid(self, n_per_interval=1000, edge=1e-9):
        pts = [np.linspace(lo + edge, hi - edge, n_per_interval)
               for lo, hi in zip(self.breakpoints[:-1], self.breakpoints[1:])]
        return np.unique(np.concatenate(pts))

    def grid(self, n=400):
        return np.unique(np.concatenate([np.linspace(0.0, self.params.b2, n), self.breakpoints]))

    def residual(self, grid=None):
        from .dividend import value_residual

        return value_residual(self, grid)

    def gluing_gaps(self):
        """Value and slope jumps of ``V(., 2)`` at ``b1``."""
        b1 = self.params.b1
        lo = (self.F(b1) @ self.k)[1].real, (self.F(b1, 1) @ self.k)[1].real
        c = self.params.lam / self.ld
        hi = (self.f(b1) + self.k3 * self.h(b1) + self.g(b1) + c * self.v_b1_state1,
              self.f(b1, 1) + self.k3 * self.h(b1, 1) + self.g(b1, 1))
        return float(hi[0] - lo[0]), float(hi[1] - lo[1])

    def F(self, z, order=0):
        """``X1 J1^n e^{J1 z} X1^-1 - X2 J2^n e^{J2 z} X2^-1``."""
        r1, r2 = self.roots[:2], self.roots[2:]
        e1 = (self.X1 * (r1**order * np.exp(r1 * z))) @ self._X1_inv
        e2 = (self.X2 * (r2**order * np.exp(r2 * z))) @ self._X2_inv
        return e1 - e2

    def f(self, z, order=0):
        p = self.params
        amp = -(p.delta / self.ld) * p.sigma[1] ** 2 / p.mu[1]
        # exp(theta (b2 - z)) cosh(Delta (b2 - z)) = (e^{r+ (z - b2)} + e^{r- (z - b2)}) / 2
        rp, rm = -self.theta - self.Delta, -self.theta + self.Delta
        u = z - p.b2
        return amp * 0.5 * (rp**order * np.exp(rp * u) + rm**order * np.exp(rm * u))

    def h(self, z, order=0):
        """Homogeneous interval-2 solution with ``h(b2) = 1`` and ``h'(b2) = 0``."""
        p = self.params
        rp, rm = -self.theta - self.Delta, -self.theta + self.Delta
        u = z - p.b2
        cp, cm = rm / (rm - rp), -rp / (rm - rp)
        return cp * rp**order * np.exp(rp * u) + cm * rm**order * np.exp(rm * u)

    def g(self, z, order=0):
        p = self.params
        lam, ld = p.lam, self.ld
        if order == 0:
            return lam / ld * z + lam * p.mu[1] / ld**2 - lam / ld * p.b1
        return lam / ld if order == 1 else 0.0

    def value(self, z, j, order=0):
        """``V(z, j)`` (or its derivative) with the overshoot convention above ``b(j)``."""
        p = self.params
        z_arr = np.asarray(z, dtype=float)
        zz = np.atleast_1d(z_arr)
        out = np.empty(zz.shape)
        bj = p.b1 if j == 0 else p.b2
        for idx, x in np.ndenumerate(zz):
            if x > bj:
                out[idx] = (self._inner(bj, j, 0) + (x - bj)) if order == 0 else (1.0 if order == 1 else 0.0)
            elif x < 0:
                out[idx] = 0.0
            else:
                out[idx] = self._inner(x, j, order)
        return out if z_arr.ndim else float(out[0])

    def _inner(self, x, j, order):
        p = self.params
        if x <= p.b1:
            return float((self.F(x, order) @ self.k)[j].real)
        c = p.lam / self.ld
        val = self.f(x, order) + self.k3 * self.h(x, order) + self.g(x, order)
        if order == 0:
            val = val + c * self.v_b1_state1
        return float(np.real(val))

    def derivative(self, z, j):
        return self.value(z, j, 1)

    def quartic_residual(self):
        vals = np.abs(np.polyval(self.coefficients, self.roots))
        scale = np.polyval(np.abs(self.coefficients), np.abs(self.roots))
        return float(np.max(vals / scale))


def cf_dividend_two_state(params):
    return DividendTwoState(params)
