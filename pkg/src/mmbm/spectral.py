"""Exponential modes of the per-interval second-order systems.

On each interval the unknown vector function ``w`` solves

    A2 w'' + A1 w' + A0 w = r0 + r1 z

with diagonal ``A2``, ``A1``. Homogeneous solutions are ``v exp(lam z)`` for
the finite eigenpairs of the quadratic pencil ``P(lam) = A2 lam^2 + A1 lam + A0``,
found here from a companion linearisation of size ``2n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateZeroMode, NotSemisimple, RankDeficient, SingularA0

RANK_RTOL = 1e-10
CLUSTER_RTOL = 1e-8
RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class QuadraticPencil:
    a2: np.ndarray
    a1: np.ndarray
    a0: np.ndarray

    @property
    def n(self):
        return self.a0.shape[0]

    @property
    def mode_count(self):
        """Degree of ``det P``: two modes per diffusive row, one per pure-drift row."""
        d2 = np.diag(self.a2)
        d1 = np.diag(self.a1)
        return int(2 * np.count_nonzero(d2 > 0) + np.count_nonzero((d2 == 0) & (d1 != 0)))

    @property
    def scale(self):
        return max(np.abs(self.a2).max(initial=0.0), np.abs(self.a1).max(initial=0.0),
                   np.abs(self.a0).max(initial=0.0), 1e-300)

    def __call__(self, lam):
        return self.a2 * lam**2 + self.a1 * lam + self.a0


@dataclass(frozen=True)
class JordanPair:
    """Mode vectors (columns of ``gamma``) and exponents (``modes``).

    Only the semisimple case is represented, so the exponent matrix is
    ``diag(modes)``.
    """

    gamma: np.ndarray
    modes: np.ndarray

    @property
    def m(self):
        return self.modes.size

    @property
    def lam(self):
        return np.diag(self.modes)

    def residual(self, pencil):
        """Max-norm of ``A2 G L^2 + A1 G L + A0 G``, each column scaled by its own size."""
        if self.m == 0:
            return 0.0
        g, lam = self.gamma, self.modes
        res = pencil.a2 @ g * lam**2 + pencil.a1 @ g * lam + pencil.a0 @ g
        col_scale = (np.abs(pencil.a2).max() * np.abs(lam) ** 2 + np.abs(pencil.a1).max() * np.abs(lam)
                     + np.abs(pencil.a0).max())
        return float(np.max(np.abs(res) / np.maximum(col_scale, 1e-300)))

    def stacked_rank(self):
        if self.m == 0:
            return 0
        stacked = np.vstack([self.gamma, self.gamma * self.modes])
        stacked = stacked / np.linalg.norm(stacked, axis=0)
        s = np.linalg.svd(stacked, compute_uv=False)
        return int(np.count_nonzero(s > RANK_RTOL * s[0]))


@dataclass(frozen=True)
class ParticularSolution:
    """Affine particular solution ``alpha + beta z``.

    Both arrays have shape ``(n, p)``: column 0 is the fixed part, further
    columns multiply extra scalar unknowns the forcing depends on linearly.
    """

    alpha: np.ndarray
    beta: np.ndarray


def build_pencil(model, partition, k, mode="stationary", delta=None):
    """Pencil of interval ``k``.

    ``mode="stationary"``: ``S l^2 - M l + Q_k^T`` acting on CDFs.
    ``mode="dividend"``: ``S l^2 + M l + (Q_k - delta I)`` acting on values.
    """
    act = list(partition.active_sets[k])
    s = np.diag(0.5 * model.sigma[act] ** 2)
    qk = model.q[np.ix_(act, act)]
    if mode == "stationary":
        return QuadraticPencil(a2=s, a1=np.diag(-model.mu[act]), a0=qk.T.copy())
    if mode == "dividend":
        if delta is None or not delta > 0:
            raise ValueError("dividend pencil needs a discount rate delta > 0")
        return QuadraticPencil(a2=s, a1=np.diag(model.mu[act].astype(float)), a0=qk - delta * np.eye(len(act)))
    raise ValueError(f"unknown pencil mode {mode!r}")


def _phase_normalise(v):
    v = v / np.linalg.norm(v)
    idx = int(np.argmax(np.abs(v)))
    return v * (abs(v[idx]) / v[idx])


def solve_pencil(pencil):
    """Finite eigenpairs of the pencil, sorted by real then imaginary part.

    Raises
    ------
    DegenerateZeroMode
        Two exponents at zero (zero asymptotic drift on a full interval).
    NotSemisimple
        A repeated exponent without enough independent mode vectors.
    RankDeficient
        Mode vectors fail to span the solution space for another reason.
    """
    n = pencil.n
    m = pencil.mode_count
    if m == 0:
        return JordanPair(gamma=np.zeros((n, 0), dtype=complex), modes=np.zeros(0, dtype=complex))
    eye, zero = np.eye(n), np.zeros((n, n))
    lhs = np.block([[zero, eye], [-pencil.a0, -pencil.a1]])
    rhs = np.block([[eye, zero], [zero, pencil.a2]])
    w, vr = scipy.linalg.eig(lhs, rhs, right=True, homogeneous_eigvals=True)
    alpha, beta = w
    # |beta| / |(alpha, beta)| is ~1/|lam| for finite modes and ~eps for infinite ones
    finiteness = np.abs(beta) / np.hypot(np.abs(alpha), np.abs(beta))
    keep = np.argsort(-finiteness, kind="stable")[:m]
    modes = alpha[keep] / beta[keep]
    gamma = np.column_stack([_phase_normalise(vr[:n, j]) for j in keep])
    # snap round-off imaginary parts of real modes
    modes = np.where(np.abs(modes.imag) <= 1e-13 * np.maximum(np.abs(modes), 1.0), modes.real + 0j, modes)
    order = np.lexsort((np.round(modes.imag, 12), np.round(modes.real, 12)))
    pair = JordanPair(gamma=gamma[:, order], modes=modes[order])

    if pair.stacked_rank() < m:
        tol = CLUSTER_RTOL * max(1.0, float(np.max(np.abs(pair.modes))))
        near_zero = np.abs(pair.modes) <= tol
        if np.count_nonzero(near_zero) >= 2:
            raise DegenerateZeroMode("repeated zero exponent (zero asymptotic drift on a full interval)")
        gaps = np.abs(pair.modes[:, None] - pair.modes[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.any(gaps <= tol):
            raise NotSemisimple("repeated exponent without a full set of mode vectors")
        raise RankDeficient("mode vectors do not span the solution space")
    res = pair.residual(pencil)
    if res > RESIDUAL_RTOL:
        raise RankDeficient(f"pencil residual {res:.3e} too large; eigen-solve lost accuracy")
    return pair


def particular_solution(pencil, rhs0, rhs1=None):
    """Affine particular solution of ``A2 w'' + A1 w' + A0 w = rhs0 + rhs1 z``.

    ``rhs0`` and ``rhs1`` may be vectors or ``(n, p)`` arrays (one column per
    linear parameter). Zero forcing returns zero without touching ``A0``,
    which is singular on intervals where every state is active.
    """
    rhs0 = np.asarray(rhs0, dtype=float)
    if rhs0.ndim == 1:
        rhs0 = rhs0[:, None]
    rhs1 = np.zeros_like(rhs0) if rhs1 is None else np.asarray(rhs1, dtype=float).reshape(rhs0.shape)
    if not np.any(rhs0) and not np.any(rhs1):
        return ParticularSolution(alpha=np.zeros_like(rhs0), beta=np.zeros_like(rhs0))
    a0 = pencil.a0
    if a0.size and np.linalg.cond(a0) > 1e14:
        raise SingularA0("A0 is singular but the forcing is not zero")
    beta = np.linalg.solve(a0, rhs1) if np.any(rhs1) else np.zeros_like(rhs1)
    alpha = np.linalg.solve(a0, rhs0 - pencil.a1 @ beta)
    return ParticularSolution(alpha=alpha, beta=beta)
