"""Joint stationary distribution of the reflected process and its environment.

For each state ``i`` the function ``Pi_i(z) = P(Z <= z, J = i)`` solves, on
``[a(i), b(i)]``,

    sigma_i^2 / 2 Pi_i'' - mu_i Pi_i' + sum_j q_ji F_j(z) = 0

where ``F_j`` is the CDF of state ``j`` (zero below ``a(j)``, ``pi_j`` from
``b(j)`` on). The axis is cut at every barrier, each piece is solved in
exponential modes, and the pieces are glued by entry, exit, continuity and
smoothness rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .decomposition import compute_partition, forcing_constants, projection_maps
from .errors import CountMismatch
from .piecewise import PiecewiseSolution, Segment, SystemBuilder, solve_system
from .spectral import build_pencil, particular_solution, solve_pencil

GRID_EDGE = 1e-9


@dataclass(frozen=True)
class Atom:
    state: int
    location: float
    mass: float

    def to_dict(self):
        return {"state": self.state + 1, "location": self.location, "mass": self.mass}


@dataclass
class ConstraintSystem:
    builder: SystemBuilder
    matrix: np.ndarray
    rhs: np.ndarray
    labels: list


def interval_segments(model, partition):
    """Pencil, modes and particular part of every interval."""
    segments = []
    for k in range(partition.n_intervals):
        left, right = partition.bounds(k)
        act = partition.active_sets[k]
        pencil = build_pencil(model, partition, k, "stationary")
        pair = solve_pencil(pencil)
        part = particular_solution(pencil, forcing_constants(partition, model, k))
        segments.append(Segment(left, right, act, pencil, pair, part))
    return segments


def assemble_constraints(model, partition, segments):
    """Boundary and gluing rows for the stationary problem.

    Entry rows (value 0 at ``a(i)``) for new states that can move up, exit
    rows (value ``pi_i`` at ``b(i)``) for ending states that can move down,
    continuity for every moving state across shared breakpoints and first
    derivative continuity for diffusive states.
    """
    proj = projection_maps(partition, model.classification)
    moving = model.classification.either
    pi = model.pi
    bld = SystemBuilder(segments)
    for k, pm in enumerate(proj):
        left, right = partition.bounds(k)
        for i in pm.d_bar_plus:
            bld.fix(k, i, left, 0.0, family="entry", state=i, at=left)
        for i in pm.u_bar_minus:
            bld.fix(k, i, right, float(pi[i]), family="exit", state=i, at=right)
        for i in pm.u:
            if i in moving:
                bld.match(k, k + 1, i, right, 0, family="continuity", state=i, at=right)
        for i in pm.u_tilde:
            bld.match(k, k + 1, i, right, 1, family="smoothness", state=i, at=right)
    system = bld.build()
    return ConstraintSystem(bld, system.matrix, system.rhs, system.labels)


def solve_coefficients(model, partition, segments, constraints):
    x, report = solve_system(constraints)
    sol = PiecewiseSolution(segments, x)
    return StationaryDistribution(model, partition, sol, report, constraints.labels)


def solve_stationary(model):
    """Compute the stationary distribution of a validated model."""
    partition = compute_partition(model)
    segments = interval_segments(model, partition)
    constraints = assemble_constraints(model, partition, segments)
    return solve_coefficients(model, partition, segments, constraints)


class StationaryDistribution:
    """Evaluator for ``Pi_i(z)``, densities, atoms and moments.

    ``cdf(z, i)`` is right-continuous, zero strictly below ``a(i)`` and
    ``pi_i`` from ``b(i)`` upward.
    """

    def __init__(self, model, partition, solution, report, labels):
        self.model = model
        self.partition = partition
        self.solution = solution
        self.report = report
        self.labels = labels
        self.pi = model.pi
        self.max_imag = solution.check_real()
        self.atoms = self._find_atoms()

    # evaluation -------------------------------------------------------

    def _inside(self, z, i, order, side):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros(z.shape)
        ks = self.partition.locate(z, side=side)
        for k in np.unique(ks):
            if i not in self.partition.active_sets[k]:
                continue
            sel = ks == k
            out[sel] = self.solution.evaluate(k, i, z[sel], order)
        return out

    def cdf(self, z, i):
        z_arr = np.asarray(z, dtype=float)
        a_i, b_i = self.model.a[i], self.model.b[i]
        zz = np.atleast_1d(z_arr)
        inside = self._inside(np.clip(zz, a_i, b_i), i, 0, "right") if a_i < b_i else np.zeros(zz.shape)
        out = np.where(zz < a_i, 0.0, np.where(zz >= b_i, self.pi[i], inside))
        return out if z_arr.ndim else float(out[0])

    def cdf_left(self, z, i):
        """Left limit ``Pi_i(z-)``."""
        z_arr = np.asarray(z, dtype=float)
        a_i, b_i = self.model.a[i], self.model.b[i]
        zz = np.atleast_1d(z_arr)
        inside = self._inside(np.clip(zz, a_i, b_i), i, 0, "left") if a_i < b_i else np.zeros(zz.shape)
        out = np.where(zz <= a_i, 0.0, np.where(zz > b_i, self.pi[i], inside))
        return out if z_arr.ndim else float(out[0])

    def derivative(self, z, i, order=1):
        z_arr = np.asarray(z, dtype=float)
        a_i, b_i = self.model.a[i], self.model.b[i]
        zz = np.atleast_1d(z_arr)
        if a_i == b_i:
            out = np.zeros(zz.shape)
        else:
            # at b(i) use the interval to the left
            side_left = zz >= b_i
            out = self._inside(np.clip(zz, a_i, b_i), i, order, "right")
            if np.any(side_left):
                out[side_left] = self._inside(np.full(side_left.sum(), b_i), i, order, "left")
            out = np.where((zz < a_i) | (zz > b_i), 0.0, out)
        return out if z_arr.ndim else float(out[0])

    def density(self, z, i):
        return self.derivative(z, i, 1)

    # structure --------------------------------------------------------

    def _find_atoms(self):
        cls = self.model.classification
        atoms = []
        for i in range(self.model.n_states):
            a_i, b_i = float(self.model.a[i]), float(self.model.b[i])
            if a_i == b_i:
                atoms.append(Atom(i, a_i, float(self.pi[i])))
                continue
            if i not in cls.e_plus:
                atoms.append(Atom(i, a_i, float(self.cdf(a_i, i))))
            if i not in cls.either:
                for l in self.partition.breakpoints:
                    if a_i < l < b_i:
                        jump = float(self.cdf(l, i) - self.cdf_left(l, i))
                        atoms.append(Atom(i, float(l), jump))
            if i not in cls.e_minus:
                atoms.append(Atom(i, b_i, float(self.pi[i] - self.cdf_left(b_i, i))))
        return atoms

    def atom_mass(self, i, location):
        return sum(at.mass for at in self.atoms if at.state == i and at.location == location)

    def check_grid(self, n_per_interval=1000, edge=GRID_EDGE):
        """Grid of interior points: ``n`` per interval plus both ends shifted inward by ``edge``."""
        pts = []
        for k in range(self.partition.n_intervals):
            left, right = self.partition.bounds(k)
            pts.append(np.linspace(left + edge, right - edge, n_per_interval))
        return np.unique(np.concatenate(pts))

    def grid(self, n=400):
        """Plot grid over the whole axis, barrier levels included."""
        lo, hi = self.partition.breakpoints[0], self.partition.breakpoints[-1]
        return np.unique(np.concatenate([np.linspace(lo, hi, n), self.partition.breakpoints]))

    def balance_residual(self, grid=None):
        return balance_residual(self, grid)

    def moments(self, r):
        return moments(self, r)

    def diagnostics(self):
        return {
            "constraint_residual": self.report.residual,
            "condition_estimate": self.report.condition,
            "balance_residual": float(self.balance_residual()),
            "max_imag_residue": float(self.max_imag),
            "total_mass": float(sum(self.cdf(self.model.b[i], i) for i in range(self.model.n_states))),
            "n_unknowns": len(self.labels),
        }


def _true_cdf(dist, j, z):
    return dist.cdf(z, j)


def balance_residual(dist, grid=None):
    """Largest absolute defect of the balance equations on ``grid``.

    Works with any object exposing ``model``, ``cdf(z, i)`` and
    ``derivative(z, i, order)``. The default grid is 1000 interior points per
    interval plus the interval ends moved inward by 1e-9.
    """
    model = dist.model
    if grid is None:
        grid = dist.check_grid()
    grid = np.asarray(grid, dtype=float)
    worst = 0.0
    for i in range(model.n_states):
        a_i, b_i = model.a[i], model.b[i]
        zs = grid[(grid > a_i) & (grid < b_i)]
        if zs.size == 0:
            continue
        res = 0.5 * model.sigma[i] ** 2 * dist.derivative(zs, i, 2) - model.mu[i] * dist.derivative(zs, i, 1)
        for j in range(model.n_states):
            if model.q[j, i] != 0.0:
                res = res + model.q[j, i] * _true_cdf(dist, j, zs)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def moments(dist, r):
    """``E[Z^r; J = i]`` for every state: atoms plus quadrature of the density."""
    model = dist.model
    out = np.zeros(model.n_states)
    if r == 0:
        return np.asarray(model.pi, dtype=float).copy()
    for i in range(model.n_states):
        total = sum(at.mass * at.location**r for at in dist.atoms if at.state == i)
        for k in dist.partition.intervals_of(i):
            left, right = dist.partition.bounds(k)
            val, _ = integrate.quad(
                lambda z: z**r * float(dist.solution.evaluate(k, i, z, 1)[0]),
                left, right, epsabs=1e-11, epsrel=1e-11, limit=200,
            )
            total += val
        out[i] = total
    return out


@dataclass(frozen=True)
class Regeneration:
    """Clamping down-jumps into ``target``: their rate and the law of the pre-jump level.

    A switch ``j -> target`` with ``Z > b(target)`` forces a jump down to
    ``b(target)``; such switches occur at rate
    ``eta = sum_j q_j,target (pi_j - Pi_j(b(target)))`` and the pre-jump
    level has CDF ``H(z) = sum_j q_j,target (Pi_j(z) - Pi_j(b(target))) / eta``.
    """

    dist: object
    target: int
    eta: float

    @property
    def lower(self):
        return float(self.dist.model.b[self.target])

    @property
    def upper(self):
        return float(np.max(self.dist.model.b))

    def H(self, z):
        model, t = self.dist.model, self.target
        z = np.clip(np.asarray(z, dtype=float), self.lower, self.upper)
        total = np.zeros(z.shape)
        for j in range(model.n_states):
            if j != t and model.q[j, t] > 0:
                total = total + model.q[j, t] * (self.dist.cdf(z, j) - self.dist.cdf(self.lower, j))
        return total / self.eta


def regeneration(dist, target=0):
    """Rate and pre-jump law of the clamping down-jumps into ``target``."""
    model = dist.model
    b_t = float(model.b[target])
    eta = sum(model.q[j, target] * (dist.pi[j] - dist.cdf(b_t, j))
              for j in range(model.n_states) if j != target)
    return Regeneration(dist, target, float(eta))
