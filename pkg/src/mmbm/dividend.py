"""Expected discounted dividends under state-dependent barrier strategies.

With ruin at level 0 and dividends paid by pushing the surplus down to
``b(j)``, the value ``V(z, j)`` solves, for ``0 < z < b(j)``,

    sigma_j^2 / 2 V'' + mu_j V' - delta V + sum_k q_jk [V(z ^ b(k), k) + (z - b(k))^+] = 0

with ``V(0, j) = 0`` and ``V'(b(j), j) = 1``. Above ``b(k)`` state ``k``
enters through ``C_k + (z - b(k))`` with the unknown constant
``C_k = V(b(k), k)``. Each constant is kept as an extra unknown with its own
tie row, so the whole problem is a single dense linear solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import compute_partition
from .errors import ModelValidationError, Violation
from .model import validate_model
from .piecewise import PiecewiseSolution, Segment, SystemBuilder, solve_system
from .spectral import build_pencil, particular_solution, solve_pencil

VALUE_TOL = 1e-9
SLOPE_TOL = 1e-6
GAP_TOL = 1e-8
CONCAVITY_TOL = 1e-8
FD_TOL = 1e-4


@dataclass(frozen=True)
class DividendModel:
    """A model with every lower barrier at 0 (ruin) and a discount rate."""

    model: object
    delta: float

    @property
    def n_states(self):
        return self.model.n_states

    @property
    def b(self):
        return self.model.b

    def to_dict(self):
        return {**self.model.to_dict(), "delta": self.delta}


def make_dividend_model(raw, delta=None):
    """Validate ``raw`` (model mapping, optionally carrying ``delta``) as a dividend problem.

    States with ``sigma = 0`` must have ``mu != 0``: a static state has no
    equation to carry a boundary condition.
    """
    if isinstance(raw, DividendModel):
        return raw
    if delta is None:
        delta = raw.get("delta") if hasattr(raw, "get") else None
    model = validate_model(raw, for_solver=False)
    violations = []
    try:
        delta = float(delta)
    except (TypeError, ValueError):
        delta = float("nan")
    if not (np.isfinite(delta) and delta > 0):
        violations.append(Violation("NonPositiveDiscount", f"delta must be a finite positive number, got {delta}"))
    for i in np.nonzero(model.a != 0.0)[0]:
        violations.append(Violation("NonZeroLowerBarrier", f"a[{i + 1}] must be 0 (ruin level)", {"state": int(i + 1)}))
    for i in np.nonzero(model.b <= 0.0)[0]:
        violations.append(Violation("NonPositiveBarrier", f"b[{i + 1}] must be positive", {"state": int(i + 1)}))
    for i in np.nonzero((model.sigma == 0) & (model.mu == 0))[0]:
        violations.append(
            Violation("StaticState", f"state {i + 1} has sigma = 0 and mu = 0", {"state": int(i + 1)})
        )
    if violations:
        raise ModelValidationError(violations)
    return DividendModel(model=model, delta=delta)


@dataclass
class DividendSystem:
    dmodel: DividendModel
    partition: object
    segments: list
    matrix: np.ndarray
    rhs: np.ndarray
    labels: list


def _forcing(dmodel, partition, k):
    """Affine forcing ``r0 + r1 z`` over ``ext = (1, C_1, ..., C_N)`` for interval ``k``."""
    model = dmodel.model
    act = partition.active_sets[k]
    n_ext = model.n_states + 1
    r0 = np.zeros((len(act), n_ext))
    r1 = np.zeros((len(act), n_ext))
    for r, j in enumerate(act):
        for c in partition.saturated(k):
            qjc = model.q[j, c]
            if qjc == 0.0:
                continue
            # q_jc (C_c + z - b_c) moved to the right-hand side
            r1[r, 0] -= qjc
            r0[r, 0] += qjc * model.b[c]
            r0[r, 1 + c] -= qjc
    return r0, r1


def dividend_segments(dmodel, partition):
    segments = []
    for k in range(partition.n_intervals):
        left, right = partition.bounds(k)
        pencil = build_pencil(dmodel.model, partition, k, "dividend", delta=dmodel.delta)
        pair = solve_pencil(pencil)
        r0, r1 = _forcing(dmodel, partition, k)
        part = particular_solution(pencil, r0, r1)
        segments.append(Segment(left, right, partition.active_sets[k], pencil, pair, part))
    return segments


def _last_interval(partition, j):
    return partition.intervals_of(j)[-1]


def assemble_dividend_system(dmodel):
    """Square system over the mode coefficients and the constants ``V(b(k), k)``.

    Rows: ``V(0, j) = 0`` for states that can move down, ``V'(b(j), j) = 1``
    for states that can move up, continuity of every state across interior
    breakpoints, smoothness for diffusive states, and one tie per constant.
    """
    dmodel = make_dividend_model(dmodel)
    model = dmodel.model
    partition = compute_partition(model)
    segments = dividend_segments(dmodel, partition)
    cls = model.classification
    bld = SystemBuilder(segments, n_extra=model.n_states)
    for j in range(model.n_states):
        if j in cls.e_minus:
            bld.fix(0, j, 0.0, 0.0, family="ruin", state=j, at=0.0)
        last = _last_interval(partition, j)
        if j in cls.e_plus:
            bld.fix(last, j, float(model.b[j]), 1.0, order=1, family="barrier_slope", state=j, at=float(model.b[j]))
        for k in range(last):
            at = partition.bounds(k)[1]
            bld.match(k, k + 1, j, at, 0, family="continuity", state=j, at=at)
            if model.sigma[j] > 0:
                bld.match(k, k + 1, j, at, 1, family="smoothness", state=j, at=at)
    for j in range(model.n_states):
        last = _last_interval(partition, j)
        coef, const = bld.functional(last, j, float(model.b[j]), 0)
        coef[bld.extra_index(j)] -= 1.0
        bld.add(coef, -const, family="tie", state=j, at=float(model.b[j]))
    system = bld.build()
    return DividendSystem(dmodel, partition, segments, system.matrix, system.rhs, system.labels)


def solve_value_function(system):
    """Solve an assembled system (or a dividend model directly)."""
    if not isinstance(system, DividendSystem):
        system = assemble_dividend_system(system)
    x, report = solve_system(system)
    sol = PiecewiseSolution(system.segments, x, n_extra=system.dmodel.n_states)
    return ValueFunction(system.dmodel, system.partition, sol, report, system.labels)


@dataclass
class BoundaryCheck:
    name: str
    state: int
    value: float
    tolerance: float
    gating: bool = True

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and abs(self.value) <= self.tolerance)

    def to_dict(self):
        return {"name": self.name, "state": self.state + 1, "value": self.value,
                "tolerance": self.tolerance, "passed": self.passed, "gating": self.gating}


@dataclass
class BoundaryReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks if c.gating)

    def failures(self):
        return [c for c in self.checks if c.gating and not c.passed]

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


class ValueFunction:
    """Evaluator for ``V(z, j)``.

    Inside ``[0, b(j)]`` the piecewise representation is used; above
    ``b(j)`` the value is ``V(b(j), j) + (z - b(j))`` and below 0 it is 0.
    """

    def __init__(self, dmodel, partition, solution, report, labels):
        self.dmodel = dmodel
        self.model = dmodel.model
        self.delta = dmodel.delta
        self.partition = partition
        self.solution = solution
        self.report = report
        self.labels = labels
        self.max_imag = solution.check_real()

    @property
    def boundary_constants(self):
        """``V(b(k), k)`` as solved through the tie rows."""
        return self.solution.extras.copy()

    def _inside(self, z, j, order, side="right"):
        out = np.zeros(z.shape)
        ks = np.minimum(self.partition.locate(z, side=side), _last_interval(self.partition, j))
        for k in np.unique(ks):
            sel = ks == k
            out[sel] = self.solution.evaluate(k, j, z[sel], order)
        return out

    def value(self, z, j, order=0):
        z_arr = np.asarray(z, dtype=float)
        zz = np.atleast_1d(z_arr)
        b_j = float(self.model.b[j])
        inner = np.clip(zz, 0.0, b_j)
        top = zz >= b_j
        out = self._inside(inner, j, order)
        if np.any(top):
            out[top] = self._inside(np.full(int(top.sum()), b_j), j, order, side="left")
        above = zz > b_j
        if order == 0:
            out[above] += zz[above] - b_j
            out[zz < 0] = 0.0
        else:
            out[above] = 1.0 if order == 1 else 0.0
            out[zz < 0] = 0.0
        return out if z_arr.ndim else float(out[0])

    def derivative(self, z, j, order=1):
        return self.value(z, j, order)

    def grid(self, n=400):
        hi = float(np.max(self.model.b))
        return np.unique(np.concatenate([np.linspace(0.0, hi, n), self.partition.breakpoints]))

    def check_grid(self, n_per_interval=1000, edge=1e-9):
        pts = [np.linspace(lo + edge, hi - edge, n_per_interval)
               for lo, hi in zip(self.partition.breakpoints[:-1], self.partition.breakpoints[1:])]
        return np.unique(np.concatenate(pts))

    def residual(self, grid=None):
        return value_residual(self, grid)

    def verify_boundary(self):
        return verify_boundary(self)

    def diagnostics(self):
        rep = self.verify_boundary()
        return {
            "constraint_residual": self.report.residual,
            "condition_estimate": self.report.condition,
            "ode_residual": float(self.residual()),
            "max_imag_residue": float(self.max_imag),
            "boundary_constants": [float(c) for c in self.boundary_constants],
            "boundary": rep.to_dict(),
            "n_unknowns": len(self.labels),
        }


def evaluate_value(vf, z, j):
    return vf.value(z, j)


def evaluate_value_derivative(vf, z, j):
    return vf.derivative(z, j)


def value_residual(vf, grid=None):
    """Largest defect of the value equations over ``grid`` (interior points of each state's range).

    Works with any evaluator exposing ``model``, ``delta`` and
    ``value(z, j, order)`` that follows the overshoot convention above
    ``b(j)``.
    """
    model = vf.model
    if grid is None:
        grid = vf.check_grid()
    grid = np.asarray(grid, dtype=float)
    worst = 0.0
    for j in range(model.n_states):
        zs = grid[(grid > 0) & (grid < model.b[j])]
        if zs.size == 0:
            continue
        res = (0.5 * model.sigma[j] ** 2 * vf.value(zs, j, 2) + model.mu[j] * vf.value(zs, j, 1)
               - vf.delta * vf.value(zs, j, 0))
        for k in range(model.n_states):
            if model.q[j, k] != 0.0:
                res = res + model.q[j, k] * vf.value(zs, k, 0)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def verify_boundary(vf, n_grid=1000, fd_step=1e-6):
    """Residuals of the boundary, gluing, shape and finite-difference checks.

    The concavity margin is the largest second difference of ``V(., j)`` on
    an ``n_grid`` grid of ``(0, b(j))``, for diffusive states only. It is
    reported but does not gate ``passed``: below a non-optimal barrier ``V``
    can be convex (driftless single state: ``V'' = 2 delta V / sigma^2 > 0``).
    """
    model = vf.model
    cls = model.classification
    checks = []
    for j in range(model.n_states):
        b_j = float(model.b[j])
        if j in cls.e_minus:
            checks.append(BoundaryCheck("value_at_zero", j, float(vf.value(0.0, j)), VALUE_TOL))
        if j in cls.e_plus:
            checks.append(BoundaryCheck("slope_at_barrier", j, float(vf.value(b_j, j, 1)) - 1.0, SLOPE_TOL))
        for l in vf.partition.breakpoints[1:]:
            if not l < b_j:
                break
            k = int(vf.partition.locate(l, side="right"))
            left = vf.solution.evaluate(k - 1, j, l, 0)[0]
            right = vf.solution.evaluate(k, j, l, 0)[0]
            checks.append(BoundaryCheck("continuity_gap", j, float(right - left), GAP_TOL))
            if model.sigma[j] > 0:
                dl = vf.solution.evaluate(k - 1, j, l, 1)[0]
                dr = vf.solution.evaluate(k, j, l, 1)[0]
                checks.append(BoundaryCheck("smoothness_gap", j, float(dr - dl), GAP_TOL))
        zs = np.linspace(0.0, b_j, n_grid)
        v = vf.value(zs, j)
        checks.append(BoundaryCheck("monotonicity", j, float(max(0.0, -np.min(np.diff(v)))), GAP_TOL))
        checks.append(BoundaryCheck("nonnegativity", j, float(max(0.0, -np.min(v))), VALUE_TOL))
        if model.sigma[j] > 0:
            second = v[2:] - 2 * v[1:-1] + v[:-2]
            checks.append(BoundaryCheck("concavity", j, float(max(0.0, np.max(second))), CONCAVITY_TOL,
                                        gating=False))
            fd = (vf.value(b_j + fd_step, j) - vf.value(b_j - fd_step, j)) / (2 * fd_step)
            # the right neighbour follows the unit-slope overshoot, so both sides share slope 1 at b(j)
            checks.append(BoundaryCheck("finite_difference_slope", j, float(fd - vf.value(b_j, j, 1)), FD_TOL))
    return BoundaryReport(checks)
