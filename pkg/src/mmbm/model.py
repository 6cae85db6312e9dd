"""Problem instances: modulating chain, per-state dynamics and barriers.

States are indexed from 0 inside the library. File formats (CSV, JSON
reports) use 1-based state labels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ModelValidationError, SingularSystem, Violation

ROW_SUM_RTOL = 1e-12
BARRIER_RTOL = 1e-12
KAPPA_RTOL = 1e-12


@dataclass(frozen=True)
class StateClassification:
    """States able to move up (``e_plus``) and down (``e_minus``)."""

    e_plus: frozenset
    e_minus: frozenset

    @property
    def both(self):
        return self.e_plus & self.e_minus

    @property
    def either(self):
        return self.e_plus | self.e_minus


@dataclass(frozen=True, eq=False)
class MmbmModel:
    """Validated two-sided reflected Markov-modulated Brownian motion.

    Build instances through :func:`validate_model`; the arrays are frozen.

    Attributes
    ----------
    q : ndarray, shape (N, N)
        Generator of the modulating chain.
    mu, sigma : ndarray, shape (N,)
        Drift and diffusion coefficient per state.
    a, b : ndarray, shape (N,)
        Lower and upper barrier per state.
    """

    q: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def n_states(self):
        return self.q.shape[0]

    @cached_property
    def pi(self):
        return stationary_vector(self.q)

    @cached_property
    def kappa(self):
        return asymptotic_drift(self)

    @cached_property
    def classification(self):
        return classify_states(self)

    @property
    def deterministic(self):
        """True when no state moves: Z is a function of the chain alone."""
        return not self.classification.either

    @property
    def rate_scale(self):
        return float(np.max(np.abs(self.q))) if self.n_states > 1 else 1.0

    def to_dict(self):
        return {
            "q": self.q.tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }

    def shifted(self, offset):
        """Same model with both barriers moved by ``offset``."""
        raw = self.to_dict()
        raw["a"] = (self.a + offset).tolist()
        raw["b"] = (self.b + offset).tolist()
        return validate_model(raw)


def _as_vector(raw, key, n, violations):
    try:
        arr = np.asarray(raw[key], dtype=float).reshape(-1)
    except (KeyError, TypeError, ValueError) as exc:
        violations.append(Violation("MissingField", f"{key}: {exc}", {"field": key}))
        return None
    if arr.shape != (n,):
        violations.append(
            Violation("ShapeMismatch", f"{key} has length {arr.size}, expected {n}", {"field": key})
        )
        return None
    if not np.all(np.isfinite(arr)):
        violations.append(Violation("NonFinite", f"{key} has non-finite entries", {"field": key}))
        return None
    return arr


def _irreducible(q):
    n = q.shape[0]
    if n == 1:
        return True
    support = (q > 0) & ~np.eye(n, dtype=bool)
    n_comp, _ = connected_components(support.astype(float), directed=True, connection="strong")
    return n_comp == 1


def _freeze(*arrays):
    for arr in arrays:
        arr.setflags(write=False)


def validate_model(raw, *, for_solver=True):
    """Validate a raw model description and return an :class:`MmbmModel`.

    Parameters
    ----------
    raw : mapping or MmbmModel
        Keys ``q``, ``mu``, ``sigma``, ``a``, ``b`` (the model JSON schema).
    for_solver : bool
        Also reject models the analytic solvers cannot handle: no moving
        state at all, or zero asymptotic drift while some interval carries
        every state.

    Raises
    ------
    ModelValidationError
        With the complete list of violations.
    """
    if isinstance(raw, MmbmModel):
        raw = raw.to_dict()
    violations = []
    try:
        q = np.array(raw["q"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelValidationError([Violation("MissingField", f"q: {exc}", {"field": "q"})])
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] == 0:
        raise ModelValidationError(
            [Violation("ShapeMismatch", f"q must be a non-empty square matrix, got shape {q.shape}")]
        )
    if not np.all(np.isfinite(q)):
        raise ModelValidationError([Violation("NonFinite", "q has non-finite entries")])
    n = q.shape[0]
    mu = _as_vector(raw, "mu", n, violations)
    sigma = _as_vector(raw, "sigma", n, violations)
    a = _as_vector(raw, "a", n, violations)
    b = _as_vector(raw, "b", n, violations)

    off = ~np.eye(n, dtype=bool)
    for i, j in zip(*np.nonzero((q < 0) & off)):
        violations.append(
            Violation("NegativeRate", f"q[{i + 1},{j + 1}] = {q[i, j]} < 0", {"row": int(i + 1), "col": int(j + 1)})
        )
    scale = float(np.max(np.abs(q))) if np.any(q) else 1.0
    row_sums = q.sum(axis=1)
    for i in np.nonzero(np.abs(row_sums) > ROW_SUM_RTOL * scale)[0]:
        violations.append(
            Violation("RowSumViolation", f"row {i + 1} of q sums to {row_sums[i]:.17g}", {"row": int(i + 1)})
        )
    if not any(v.code in ("NegativeRate", "RowSumViolation") for v in violations):
        # absorb round-off into the diagonal
        q[np.diag_indices(n)] = 0.0
        q[np.diag_indices(n)] = -q.sum(axis=1)
        if not _irreducible(q):
            violations.append(Violation("Reducible", "the modulating chain is not irreducible"))

    if sigma is not None:
        for i in np.nonzero(sigma < 0)[0]:
            violations.append(Violation("NegativeDiffusion", f"sigma[{i + 1}] < 0", {"state": int(i + 1)}))
    if a is not None and b is not None:
        for i in np.nonzero(a > b)[0]:
            violations.append(
                Violation("BarrierOrder", f"a[{i + 1}] = {a[i]} > b[{i + 1}] = {b[i]}", {"state": int(i + 1)})
            )
        levels = np.unique(np.concatenate([a, b]))
        if levels.size > 1:
            span = max(float(np.max(np.abs(levels))), float(levels[-1] - levels[0]))
            gaps = np.diff(levels)
            for g_idx in np.nonzero(gaps < BARRIER_RTOL * span)[0]:
                violations.append(
                    Violation(
                        "BarrierTooClose",
                        f"barrier levels {levels[g_idx]!r} and {levels[g_idx + 1]!r} differ by less than "
                        f"{BARRIER_RTOL:g} x scale; make them equal or separate them",
                        {"levels": [float(levels[g_idx]), float(levels[g_idx + 1])]},
                    )
                )
    if violations:
        raise ModelValidationError(violations)

    if for_solver:
        cls = classify_states_raw(mu, sigma)
        if not cls.either:
            violations.append(
                Violation(
                    "DeterministicOfJ",
                    "no state has sigma > 0 or mu != 0; Z is a function of J alone (simulator only)",
                )
            )
        else:
            pi = stationary_vector(q)
            kappa = float(mu @ pi)
            if abs(kappa) <= KAPPA_RTOL * max(float(np.max(np.abs(mu))), 1e-300):
                full = _full_overlap(a, b)
                if full:
                    violations.append(
                        Violation(
                            "AllBarriersDegenerateWithKappaZero",
                            "asymptotic drift is zero while some interval has every state active "
                            "(double zero mode, not supported)",
                            {"kappa": kappa},
                        )
                    )
        if violations:
            raise ModelValidationError(violations)

    _freeze(q, mu, sigma, a, b)
    return MmbmModel(q=q, mu=mu, sigma=sigma, a=a, b=b)


def _full_overlap(a, b):
    lo, hi = float(np.max(a)), float(np.min(b))
    return lo < hi


def load_model(path, **kwargs):
    with open(path) as fh:
        return validate_model(json.load(fh), **kwargs)


def stationary_vector(q):
    """Stationary distribution of an irreducible generator.

    One balance equation is replaced by the normalisation row.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if n == 1:
        return np.ones(1)
    lhs = q.T.copy()
    lhs[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"stationary equations are singular: {exc}") from exc
    # one refinement step; cheap and tightens the balance residual
    pi = pi + np.linalg.solve(lhs, rhs - lhs @ pi)
    if np.any(pi <= 0):
        raise SingularSystem("stationary vector has non-positive entries; is q irreducible?")
    return pi / pi.sum()


def asymptotic_drift(model):
    """pi-weighted mean drift of the free process."""
    return float(np.dot(model.mu, model.pi))


def classify_states_raw(mu, sigma):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    up = frozenset(int(i) for i in np.nonzero((sigma > 0) | (mu > 0))[0])
    down = frozenset(int(i) for i in np.nonzero((sigma > 0) | (mu < 0))[0])
    return StateClassification(e_plus=up, e_minus=down)


def classify_states(model):
    """Split states by whether they can move up and/or down."""
    return classify_states_raw(model.mu, model.sigma)
