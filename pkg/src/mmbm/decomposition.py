"""Breakpoint intervals, active states and saturated-state forcing.

Intervals are numbered from 0 here: interval ``k`` is
``[breakpoints[k], breakpoints[k + 1]]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModel


@dataclass(frozen=True)
class IntervalPartition:
    breakpoints: np.ndarray
    active_sets: tuple
    a: np.ndarray
    b: np.ndarray

    @property
    def n_intervals(self):
        return len(self.active_sets)

    def bounds(self, k):
        return float(self.breakpoints[k]), float(self.breakpoints[k + 1])

    def saturated(self, k):
        """States whose whole range lies at or below the left end of interval ``k``."""
        left = self.breakpoints[k]
        return tuple(int(j) for j in np.nonzero(self.b <= left)[0])

    def locate(self, z, side="right"):
        """Index of the interval holding ``z``.

        ``side="right"`` picks the interval to the right of a breakpoint,
        ``side="left"`` the one to its left. Values are clipped to the range.
        """
        k = np.searchsorted(self.breakpoints, z, side=side) - 1
        return np.clip(k, 0, self.n_intervals - 1)

    def intervals_of(self, i):
        return [k for k, act in enumerate(self.active_sets) if i in act]

    def to_dict(self):
        return {
            "breakpoints": [float(x) for x in self.breakpoints],
            "intervals": [
                {
                    "index": k + 1,
                    "left": self.bounds(k)[0],
                    "right": self.bounds(k)[1],
                    "active_states": [i + 1 for i in act],
                    "saturated_states": [j + 1 for j in self.saturated(k)],
                }
                for k, act in enumerate(self.active_sets)
            ],
        }


@dataclass(frozen=True)
class BoundaryProjections:
    """Row selectors of one interval, as state lists.

    ``d_*`` concern the left end (shared with the previous interval),
    ``u_*`` the right end (shared with the next one).
    """

    d: tuple
    d_plus: tuple
    d_tilde: tuple
    d_bar: tuple
    d_bar_plus: tuple
    u: tuple
    u_minus: tuple
    u_tilde: tuple
    u_bar: tuple
    u_bar_minus: tuple


def compute_partition(model):
    """Cut the content axis at every barrier level."""
    a = np.asarray(model.a, dtype=float)
    b = np.asarray(model.b, dtype=float)
    levels = np.unique(np.concatenate([a, b]))
    if levels.size < 2:
        raise DegenerateModel("all barriers coincide; the content axis is a single point")
    active = []
    for left, right in zip(levels[:-1], levels[1:]):
        active.append(tuple(int(i) for i in np.nonzero((a <= left) & (right <= b))[0]))
    return IntervalPartition(breakpoints=levels, active_sets=tuple(active), a=a, b=b)


def forcing_constants(partition, model, k):
    """Right-hand side of the interval-``k`` balance equations.

    States saturated below the interval sit at their full mass ``pi_j``;
    moving ``q_ji pi_j`` to the right-hand side gives a minus sign. States
    not yet started contribute zero.
    """
    act = partition.active_sets[k]
    sat = list(partition.saturated(k))
    if not sat:
        return np.zeros(len(act))
    pi = model.pi
    return -np.array([np.dot(model.q[sat, i], pi[sat]) for i in act])


def _sel(states, pred):
    return tuple(i for i in states if pred(i))


def projection_maps(partition, classification):
    """Selectors for entry, exit, continuity and smoothness rows of every interval."""
    up, down = classification.e_plus, classification.e_minus
    both = up & down
    sets = [set(s) for s in partition.active_sets]
    out = []
    n = len(sets)
    for k, act in enumerate(partition.active_sets):
        prev = sets[k - 1] if k > 0 else set()
        nxt = sets[k + 1] if k + 1 < n else set()
        d = _sel(act, lambda i: i in prev)
        d_bar = _sel(act, lambda i: i not in prev)
        u = _sel(act, lambda i: i in nxt)
        u_bar = _sel(act, lambda i: i not in nxt)
        out.append(
            BoundaryProjections(
                d=d,
                d_plus=_sel(d, lambda i: i in up),
                d_tilde=_sel(d, lambda i: i in both),
                d_bar=d_bar,
                d_bar_plus=_sel(d_bar, lambda i: i in up),
                u=u,
                u_minus=_sel(u, lambda i: i in down),
                u_tilde=_sel(u, lambda i: i in both),
                u_bar=u_bar,
                u_bar_minus=_sel(u_bar, lambda i: i in down),
            )
        )
    return out


def clamped_cdf(values_inside, z, a_i, b_i, pi_i):
    """CDF of one state at ``z`` from its in-range values.

    Zero strictly below ``a_i`` and ``pi_i`` from ``b_i`` upward; mass
    sitting at ``a_i`` is not counted below it.
    """
    z = np.asarray(z, dtype=float)
    out = np.where(z < a_i, 0.0, np.where(z >= b_i, pi_i, values_inside))
    return out
