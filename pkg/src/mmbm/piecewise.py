"""Piecewise exponential representation shared by the stationary and dividend solvers.

On segment ``k`` the vector function over its active states is

    w_k(z) = Gamma_k exp(Lambda_k (z - anchor)) u_k + (alpha_k + beta_k z) @ ext

with ``ext = (1, c_1, ..., c_p)`` the fixed part followed by extra scalar
unknowns. Each mode has its own anchor (left end for decaying or neutral
modes, right end for growing ones) so every exponential is bounded by one
on its segment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CountMismatch, NumericallySingular

COND_LIMIT = 1e14
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class Segment:
    left: float
    right: float
    states: tuple
    pencil: object
    pair: object
    particular: object
    anchors: np.ndarray = field(init=False)

    def __post_init__(self):
        modes = self.pair.modes
        anchors = np.where(modes.real > 0, self.right, self.left).astype(float)
        object.__setattr__(self, "anchors", anchors)

    @property
    def m(self):
        return self.pair.m

    def local(self, i):
        return self.states.index(i)

    def mode_rows(self, i, z, order=0):
        """Row(s) of ``Gamma Lambda^order exp(Lambda (z - anchor))`` for state ``i``; shape ``(len(z), m)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        lam = self.pair.modes
        g = self.pair.gamma[self.local(i)]
        return g * lam**order * np.exp(lam * (z[:, None] - self.anchors))

    def affine_rows(self, i, z, order=0):
        """Particular-part coefficients on ``ext``; shape ``(len(z), p + 1)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        li = self.local(i)
        al, be = self.particular.alpha[li], self.particular.beta[li]
        if order == 0:
            return al + z[:, None] * be
        if order == 1:
            return np.broadcast_to(be, (z.size, be.size)).copy()
        return np.zeros((z.size, be.size))


@dataclass
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    labels: list


class SystemBuilder:
    """Collect linear constraint rows over the stacked unknowns ``(u_1, ..., u_K, c)``."""

    def __init__(self, segments, n_extra=0):
        self.segments = segments
        self.n_extra = n_extra
        self.offsets = np.concatenate([[0], np.cumsum([s.m for s in segments])]).astype(int)
        self.n_unknowns = int(self.offsets[-1]) + n_extra
        self._rows = []
        self._rhs = []
        self.labels = []

    def functional(self, k, i, z, order=0):
        """``(coef, const)`` with value ``coef @ x + const`` for state ``i`` on segment ``k`` at ``z``."""
        seg = self.segments[k]
        coef = np.zeros(self.n_unknowns, dtype=complex)
        coef[self.offsets[k]:self.offsets[k + 1]] = seg.mode_rows(i, z, order)[0]
        aff = seg.affine_rows(i, z, order)[0]
        if self.n_extra:
            coef[self.offsets[-1]:] += aff[1:]
        return coef, float(aff[0])

    def add(self, coef, rhs, **label):
        self._rows.append(coef)
        self._rhs.append(rhs)
        self.labels.append(label)

    def fix(self, k, i, z, target, order=0, **label):
        coef, const = self.functional(k, i, z, order)
        self.add(coef, target - const, **label)

    def match(self, k_left, k_right, i, z, order=0, **label):
        c1, k1 = self.functional(k_left, i, z, order)
        c2, k2 = self.functional(k_right, i, z, order)
        self.add(c1 - c2, k2 - k1, **label)

    def extra_index(self, j):
        return int(self.offsets[-1]) + j

    def build(self):
        n_rows = len(self._rows)
        if n_rows != self.n_unknowns:
            raise CountMismatch(f"{n_rows} constraint rows for {self.n_unknowns} unknowns")
        if n_rows == 0:
            return LinearSystem(np.zeros((0, 0), dtype=complex), np.zeros(0, dtype=complex), [])
        return LinearSystem(np.vstack(self._rows), np.asarray(self._rhs, dtype=complex), list(self.labels))


@dataclass
class SolveReport:
    residual: float
    condition: float


def solve_system(system):
    """Dense solve with a condition check."""
    a, rhs = system.matrix, system.rhs
    if a.size == 0:
        return np.zeros(0, dtype=complex), SolveReport(0.0, 1.0)
    # equilibrate rows; the raw rows mix values, derivatives and ties
    row_scale = np.max(np.abs(a), axis=1)
    row_scale[row_scale == 0] = 1.0
    a_s = a / row_scale[:, None]
    rhs_s = rhs / row_scale
    cond = float(np.abs(np.linalg.cond(a_s, 1)))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericallySingular(f"constraint matrix condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    x = np.linalg.solve(a_s, rhs_s)
    res = float(np.max(np.abs(a_s @ x - rhs_s)))
    return x, SolveReport(residual=res, condition=cond)


class PiecewiseSolution:
    """Solved representation; evaluation returns real values."""

    def __init__(self, segments, x, n_extra=0):
        self.segments = segments
        offsets = np.concatenate([[0], np.cumsum([s.m for s in segments])]).astype(int)
        self.coefficients = [x[offsets[k]:offsets[k + 1]] for k in range(len(segments))]
        self.extras = np.real(x[offsets[-1]:offsets[-1] + n_extra]).copy()
        self.ext = np.concatenate([[1.0], self.extras])
        self.max_imag = 0.0

    def evaluate(self, k, i, z, order=0):
        seg = self.segments[k]
        z = np.atleast_1d(np.asarray(z, dtype=float))
        val = seg.mode_rows(i, z, order) @ self.coefficients[k] + seg.affine_rows(i, z, order) @ self.ext
        imag = float(np.max(np.abs(val.imag), initial=0.0))
        self.max_imag = max(self.max_imag, imag)
        return val.real

    def check_real(self, n_points=50):
        """Largest imaginary residue over a grid of every segment and state."""
        worst = 0.0
        for k, seg in enumerate(self.segments):
            zs = np.linspace(seg.left, seg.right, n_points)
            for i in seg.states:
                val = seg.mode_rows(i, zs, 0) @ self.coefficients[k]
                worst = max(worst, float(np.max(np.abs(val.imag), initial=0.0)))
        self.max_imag = max(self.max_imag, worst)
        return worst
