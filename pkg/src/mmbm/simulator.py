"""Seeded Monte Carlo for the reflected modulated process.

Sojourn lengths are drawn exactly; within a sojourn the path moves in
steps of at most ``dt``. Two step rules are available:

``"euler"``
    Gaussian increment, then projection onto ``[a(j), b(j)]``; the amount
    removed is the regulator increment.
``"bridge"``
    Same endpoint, but the regulator increment is taken from the running
    maximum (minimum) of the Brownian bridge between the two endpoints, and
    first passage below 0 in the dividend runs uses the bridge crossing
    probability. This removes the ``O(sqrt(dt))`` monitoring bias.

``"bridge"`` is the default everywhere. Projection piles up time exactly on
the barriers (an ``O(sqrt(dt))`` share of the occupancy), and a discretely
monitored ruin time is late by ``O(sqrt(dt))``, which biases dividend
payouts upward near 0. ``"euler"`` stays available for comparison.

Every replication owns a Philox stream keyed by ``(seed, replication)``;
results are reduced in replication order, so they do not depend on the
number of threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .errors import ConfigInvalid, NoRuinObserved, TooFewCycles
from .model import validate_model

SCHEMES = ("euler", "bridge")
REGEN_TOL = 1e-9
DISCOUNT_CUTOFF = 1e-12


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 2e4
    burn_in: float = 1e3
    replications: int = 1
    seed: int = 0
    z0: float | None = None
    j0: int = 0
    scheme: str | None = None
    threads: int | None = None
    grid_points: int = 2001

    def validate(self, model=None):
        problems = []
        if not (np.isfinite(self.dt) and self.dt > 0):
            problems.append("dt must be positive")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            problems.append("horizon must be positive")
        if not (0 <= self.burn_in < self.horizon):
            problems.append("need 0 <= burn_in < horizon")
        if int(self.replications) < 1:
            problems.append("replications must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            problems.append("seed must fit in 64 unsigned bits")
        if self.scheme is not None and self.scheme not in SCHEMES:
            problems.append(f"scheme must be one of {SCHEMES}")
        if self.threads is not None and int(self.threads) < 1:
            problems.append("threads must be >= 1")
        if self.grid_points < 2:
            problems.append("grid_points must be >= 2")
        if model is not None:
            if not 0 <= self.j0 < model.n_states:
                problems.append(f"j0 must lie in [0, {model.n_states})")
            levels = np.unique(np.concatenate([model.a, model.b]))
            if levels.size > 1:
                width = float(np.min(np.diff(levels)))
                if self.dt > width / 10:
                    problems.append(f"dt = {self.dt:g} exceeds a tenth of the narrowest interval ({width:g})")
        if problems:
            raise ConfigInvalid("; ".join(problems))
        return self

    def scheme_for(self, default):
        """Step rule in use: the explicit choice, else the per-mode ``default``."""
        return self.scheme or default

    @property
    def n_threads(self):
        return int(self.threads) if self.threads else (os.cpu_count() or 1)


def _stream(seed, rep):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def _switch_table(q):
    """Exit rates and cumulative next-state probabilities of every state."""
    n = q.shape[0]
    rates = -np.diag(q).copy()
    cum = np.zeros((n, n))
    for j in range(n):
        row = np.where(np.arange(n) == j, 0.0, q[j])
        if rates[j] > 0:
            cum[j] = np.cumsum(row) / rates[j]
            cum[j, -1] = 1.0
    return rates, cum


@numba.njit(nogil=True, cache=True)
def _next_state(rng, cum, j):
    u = rng.random()
    n = cum.shape[1]
    for k in range(n):
        if k != j and u < cum[j, k]:
            return k
    for k in range(n - 1, -1, -1):
        if k != j:
            return k
    return j


@numba.njit(nogil=True, cache=True)
def _bridge_extreme(rng, z, x1, var, upper):
    """Maximum (``upper``) or minimum of a Brownian bridge from ``z`` to ``x1`` with variance ``var``."""
    e = rng.standard_exponential()
    root = math.sqrt((x1 - z) ** 2 + 2.0 * var * e)
    if upper:
        return 0.5 * (z + x1 + root)
    return 0.5 * (z + x1 - root)


@numba.njit(nogil=True, cache=True)
def _reflect(rng, z, x1, lo, hi, var, bridge):
    """Return ``(new z, lower push, upper push)`` for one step from ``z`` with free endpoint ``x1``."""
    if not bridge or var == 0.0:
        if x1 < lo:
            return lo, lo - x1, 0.0
        if x1 > hi:
            return hi, 0.0, x1 - hi
        return x1, 0.0, 0.0
    reach = 8.0 * math.sqrt(var)
    push_up = 0.0
    push_lo = 0.0
    if max(z, x1) > hi - reach:
        m = _bridge_extreme(rng, z, x1, var, True)
        if m > hi:
            push_up = m - hi
    if min(z, x1) < lo + reach:
        m = _bridge_extreme(rng, z, x1, var, False)
        if m < lo:
            push_lo = lo - m
    out = x1 - push_up + push_lo
    if out < lo:
        out = lo
    elif out > hi:
        out = hi
    return out, push_lo, push_up


@numba.njit(nogil=True, cache=True)
def _path_kernel(rng, rates, cum, mu, sigma, a, b, dt, horizon, burn_in, z0, j0, grid, bridge,
                 occ, at_lo, at_hi, reg_l, reg_u, jump_up, jump_down,
                 ev_t, ev_z, ev_from, ev_to, check):
    t = 0.0
    j = j0
    z = min(max(z0, a[j]), b[j])
    n_ev = 0
    overflow = False
    violations = 0
    while t < horizon:
        if rates[j] > 0.0:
            t_end = t + rng.standard_exponential() / rates[j]
        else:
            t_end = horizon
        if t_end > horizon:
            t_end = horizon
        while t < t_end:
            h = t_end - t
            if h > dt:
                h = dt
            tn = t + h
            if tn <= t:
                break
            w = min(tn, horizon) - max(t, burn_in)
            if w > 0.0:
                occ[j, np.searchsorted(grid, z)] += w
                if z == a[j]:
                    at_lo[j] += w
                if z == b[j]:
                    at_hi[j] += w
            x1 = z + mu[j] * h + sigma[j] * math.sqrt(h) * rng.standard_normal()
            z, pl, pu = _reflect(rng, z, x1, a[j], b[j], sigma[j] ** 2 * h, bridge)
            if tn > burn_in:
                reg_l[j] += pl
                reg_u[j] += pu
            if check and (z < a[j] or z > b[j]):
                violations += 1
            t = tn
        t = t_end
        if t >= horizon:
            break
        k = _next_state(rng, cum, j)
        z_pre = z
        if z < a[k]:
            z = a[k]
        elif z > b[k]:
            z = b[k]
        if t > burn_in:
            if z > z_pre:
                jump_up[k] += z - z_pre
            elif z < z_pre:
                jump_down[k] += z_pre - z
            if z_pre > b[k] + REGEN_TOL:
                if n_ev < ev_t.size:
                    ev_t[n_ev] = t
                    ev_z[n_ev] = z_pre
                    ev_from[n_ev] = j
                    ev_to[n_ev] = k
                    n_ev += 1
                else:
                    overflow = True
        j = k
    return n_ev, overflow, violations


@numba.njit(nogil=True, cache=True)
def _dividend_kernel(rng, rates, cum, mu, sigma, b, delta, dt, t_cap, z0, j0, bridge):
    """One discounted-dividend replication: ``(payout, ruined, stop time)``."""
    j = j0
    z = z0
    total = 0.0
    if z > b[j]:
        total += z - b[j]
        z = b[j]
    if z <= 0.0:
        return total, True, 0.0
    t = 0.0
    while t < t_cap:
        if rates[j] > 0.0:
            t_end = t + rng.standard_exponential() / rates[j]
        else:
            t_end = t_cap
        if t_end > t_cap:
            t_end = t_cap
        while t < t_end:
            h = t_end - t
            if h > dt:
                h = dt
            tn = t + h
            if tn <= t:
                break
            var = sigma[j] ** 2 * h
            x1 = z + mu[j] * h + math.sqrt(var) * rng.standard_normal()
            if x1 <= 0.0:
                return total, True, tn
            if bridge and var > 0.0 and z * x1 < 8.0 * var:
                if rng.random() < math.exp(-2.0 * z * x1 / var):
                    return total, True, tn
            push = 0.0
            if bridge and var > 0.0:
                if max(z, x1) > b[j] - 8.0 * math.sqrt(var):
                    m = _bridge_extreme(rng, z, x1, var, True)
                    if m > b[j]:
                        push = m - b[j]
            elif x1 > b[j]:
                push = x1 - b[j]
            if push > 0.0:
                total += push * math.exp(-delta * tn)
                x1 -= push
                if x1 > b[j]:
                    x1 = b[j]
            z = x1
            t = tn
        t = t_end
        if t >= t_cap:
            break
        k = _next_state(rng, cum, j)
        if z > b[k]:
            total += (z - b[k]) * math.exp(-delta * t)
            z = b[k]
        j = k
    return total, False, t


@numba.njit(nogil=True, cache=True)
def _exit_kernel(rng, n, h, mu, sigma, rate, dt, out):
    """Fill ``out`` with ``exp(-rate T)`` for ``n`` exits of ``(-h, h)`` from 0."""
    sd = sigma * math.sqrt(dt)
    var = sd * sd
    for r in range(n):
        x = 0.0
        t = 0.0
        while True:
            x1 = x + mu * dt + sd * rng.standard_normal()
            if x1 >= h or x1 <= -h:
                break
            p = math.exp(-2.0 * (h - x) * (h - x1) / var) + math.exp(-2.0 * (x + h) * (x1 + h) / var)
            if rng.random() < p:
                break
            x = x1
            t += dt
        out[r] = math.exp(-rate * (t + 0.5 * dt))


# ---------------------------------------------------------------------------
# stationary and regeneration


@dataclass
class PathEstimates:
    """Pooled statistics of one or more simulated paths.

    ``occupancy[j, m]`` is the time with ``J = j`` and ``Z`` in
    ``(grid[m-1], grid[m]]`` (index ``len(grid)`` collects anything above
    the grid). Regulator totals and jump totals are per state; events are
    the switch down-jumps with the pre-jump level above the new barrier.
    """

    model: object
    config: SimConfig
    grid: np.ndarray
    occupancy: np.ndarray
    elapsed: float
    time_at_lower: np.ndarray
    time_at_upper: np.ndarray
    lower_regulator: np.ndarray
    upper_regulator: np.ndarray
    jump_up: np.ndarray
    jump_down: np.ndarray
    event_times: np.ndarray
    event_levels: np.ndarray
    event_from: np.ndarray
    event_to: np.ndarray
    event_overflow: bool = False
    bound_violations: int = 0
    per_replication_elapsed: list = field(default_factory=list)

    @property
    def empirical_cdf(self):
        return empirical_stationary(self)

    @property
    def atom_masses(self):
        """Fraction of time sitting exactly on each state's lower and upper barrier."""
        return {"lower": self.time_at_lower / self.elapsed, "upper": self.time_at_upper / self.elapsed}

    @property
    def occupancy_fraction(self):
        return self.occupancy.sum(axis=1) / self.elapsed


def default_grid(model, n=2001):
    lo, hi = float(np.min(model.a)), float(np.max(model.b))
    return np.unique(np.concatenate([np.linspace(lo, hi, n), model.a, model.b]))


def _event_capacity(model, config):
    rate = float(np.max(-np.diag(model.q), initial=0.0))
    span = config.horizon - config.burn_in
    return int(2 * rate * span + 10 * math.sqrt(rate * span + 1) + 1000)


def _run_path(model, config, grid, rep):
    rng = _stream(config.seed, rep)
    n, g = model.n_states, grid.size
    rates, cum = _switch_table(np.asarray(model.q))
    occ = np.zeros((n, g + 1))
    vecs = [np.zeros(n) for _ in range(6)]
    cap = _event_capacity(model, config)
    ev_t, ev_z = np.zeros(cap), np.zeros(cap)
    ev_from, ev_to = np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64)
    z0 = float(model.a[config.j0]) if config.z0 is None else float(config.z0)
    n_ev, overflow, bad = _path_kernel(
        rng, rates, cum, np.asarray(model.mu), np.asarray(model.sigma), np.asarray(model.a), np.asarray(model.b),
        float(config.dt), float(config.horizon), float(config.burn_in), z0, int(config.j0), grid,
        config.scheme_for("bridge") == "bridge", occ, *vecs, ev_t, ev_z, ev_from, ev_to, True,
    )
    return occ, vecs, (ev_t[:n_ev], ev_z[:n_ev], ev_from[:n_ev], ev_to[:n_ev]), overflow, bad


def simulate_path(model, config=None, grid=None):
    """Simulate ``config.replications`` independent paths and pool them.

    Parameters
    ----------
    model : MmbmModel or mapping
        Any valid model; models without a moving state are allowed here.
    config : SimConfig
    grid : array_like, optional
        Levels at which occupancy is binned; barrier levels are always added.
    """
    model = validate_model(model, for_solver=False)
    config = (config or SimConfig()).validate(model)
    grid = default_grid(model, config.grid_points) if grid is None else np.unique(
        np.concatenate([np.asarray(grid, dtype=float), model.a, model.b]))
    reps = range(int(config.replications))
    with ThreadPoolExecutor(max_workers=config.n_threads) as pool:
        results = list(pool.map(lambda r: _run_path(model, config, grid, r), reps))
    n = model.n_states
    occ = np.zeros((n, grid.size + 1))
    vecs = [np.zeros(n) for _ in range(6)]
    events = [[], [], [], []]
    overflow, bad = False, 0
    for r_occ, r_vecs, r_ev, r_over, r_bad in results:
        occ += r_occ
        for acc, v in zip(vecs, r_vecs):
            acc += v
        for acc, v in zip(events, r_ev):
            acc.append(v)
        overflow |= bool(r_over)
        bad += int(r_bad)
    if bad:
        raise AssertionError(f"{bad} recorded steps left the barrier band")
    span = config.horizon - config.burn_in
    # event times are offset per replication so the pooled record stays ordered
    times = np.concatenate([t + r * config.horizon for r, t in enumerate(events[0])]) if events[0] else np.zeros(0)
    return PathEstimates(
        model=model, config=config, grid=grid, occupancy=occ, elapsed=span * config.replications,
        time_at_lower=vecs[0], time_at_upper=vecs[1], lower_regulator=vecs[2], upper_regulator=vecs[3],
        jump_up=vecs[4], jump_down=vecs[5],
        event_times=times, event_levels=np.concatenate(events[1]), event_from=np.concatenate(events[2]),
        event_to=np.concatenate(events[3]), event_overflow=overflow, bound_violations=bad,
        per_replication_elapsed=[span] * config.replications,
    )


def empirical_stationary(estimates, grid=None):
    """Time-average estimate of ``P(Z <= z, J = j)``; shape ``(n_states, len(grid))``.

    Exact on the simulation grid; other points take the value of the grid
    point at or below them.
    """
    cum = np.cumsum(estimates.occupancy[:, :-1], axis=1) / estimates.elapsed
    if grid is None:
        return cum
    grid = np.asarray(grid, dtype=float)
    idx = np.searchsorted(estimates.grid, grid, side="right") - 1
    out = np.where(idx[None, :] >= 0, cum[:, np.clip(idx, 0, None)], 0.0)
    above = grid >= estimates.grid[-1]
    out[:, above] = (np.cumsum(estimates.occupancy, axis=1)[:, -1] / estimates.elapsed)[:, None]
    return out


def ks_distance(estimates, dist):
    """Per-state sup distance between the empirical and an analytic CDF on the simulation grid."""
    emp = empirical_stationary(estimates)
    return np.array([float(np.max(np.abs(emp[i] - dist.cdf(estimates.grid, i))))
                     for i in range(estimates.model.n_states)])


@dataclass
class RegenerationEstimate:
    eta: float
    eta_half_width: float
    levels: np.ndarray
    n_cycles: int
    elapsed: float
    h_half_width: float
    lower: float
    upper: float

    def H(self, z):
        """Empirical CDF of the pre-jump levels."""
        z = np.asarray(z, dtype=float)
        return np.searchsorted(self.levels, z, side="right") / self.levels.size

    def sup_distance(self, H):
        """Kolmogorov distance to a continuous CDF ``H`` on ``[lower, upper]``."""
        x = self.levels
        n = x.size
        hx = np.asarray(H(x), dtype=float)
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - hx), np.max(hx - (i - 1) / n)))


def empirical_regeneration(estimates, target=0, min_cycles=200, level=0.95):
    """Rate of clamping down-jumps into ``target`` and the law of the pre-jump level.

    The half-widths are a Poisson band for the rate and the DKW band for
    the CDF at the given level.

    Raises
    ------
    TooFewCycles
        Fewer than ``min_cycles`` events were observed.
    """
    sel = estimates.event_to == target
    levels = np.sort(estimates.event_levels[sel])
    n = int(levels.size)
    if n < min_cycles:
        raise TooFewCycles(f"observed {n} regeneration cycles, need at least {min_cycles}")
    zq = float(stats.norm.ppf(0.5 + level / 2))
    eta = n / estimates.elapsed
    return RegenerationEstimate(
        eta=eta, eta_half_width=zq * math.sqrt(n) / estimates.elapsed, levels=levels, n_cycles=n,
        elapsed=estimates.elapsed, h_half_width=math.sqrt(math.log(2 / (1 - level)) / (2 * n)),
        lower=float(estimates.model.b[target]), upper=float(np.max(estimates.model.b)),
    )


# ---------------------------------------------------------------------------
# dividends


@dataclass
class DividendEstimate:
    mean: float
    stderr: float
    ruin_fraction: float
    replications: int
    unruined: int
    time_cap: float
    truncated: bool
    payouts: np.ndarray = field(repr=False)

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "ruin_fraction": self.ruin_fraction,
                "replications": self.replications, "unruined": self.unruined, "time_cap": self.time_cap,
                "truncated": self.truncated}


def _dividend_rep(model, delta, z0, j0, config, t_cap, rep, rates, cum):
    rng = _stream(config.seed, rep)
    return _dividend_kernel(rng, rates, cum, np.asarray(model.mu), np.asarray(model.sigma), np.asarray(model.b),
                            float(delta), float(config.dt), float(t_cap), float(z0), int(j0),
                            config.scheme_for("bridge") == "bridge")


def empirical_dividend(model, delta, z0, j0, config=None, strict=False):
    """Mean discounted upper-regulator payout until ruin, with its standard error.

    Each replication stops at ruin or at ``min(horizon, -log(1e-12) / delta)``,
    after which the discounted remainder is negligible.

    Raises
    ------
    NoRuinObserved
        With ``strict=True``, when some replication reached a cap shorter
        than the negligible-discount time without ruin.
    """
    from .dividend import make_dividend_model

    dmodel = make_dividend_model(model, delta)
    model, delta = dmodel.model, dmodel.delta
    config = (config or SimConfig()).validate(model)
    if not 0 <= j0 < model.n_states:
        raise ConfigInvalid(f"j0 must lie in [0, {model.n_states})")
    natural = -math.log(DISCOUNT_CUTOFF) / delta
    t_cap = min(config.horizon, natural)
    rates, cum = _switch_table(np.asarray(model.q))
    reps = range(int(config.replications))
    with ThreadPoolExecutor(max_workers=config.n_threads) as pool:
        out = list(pool.map(lambda r: _dividend_rep(model, delta, z0, j0, config, t_cap, r, rates, cum), reps))
    pay = np.array([o[0] for o in out])
    ruined = np.array([o[1] for o in out], dtype=bool)
    n = pay.size
    unruined = int(np.count_nonzero(~ruined))
    truncated = unruined > 0 and t_cap < natural
    est = DividendEstimate(
        mean=float(pay.mean()), stderr=float(pay.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        ruin_fraction=float(ruined.mean()), replications=n, unruined=unruined, time_cap=t_cap,
        truncated=truncated, payouts=pay,
    )
    if strict and truncated:
        err = NoRuinObserved(f"{unruined} of {n} replications reached t = {t_cap:g} without ruin")
        err.partial = est
        raise err
    return est


# ---------------------------------------------------------------------------
# two-sided exit


def exit_transform(h, mu, sigma, rate):
    """``E[exp(-rate T)]`` for the exit time ``T`` of ``(-h, h)`` by ``mu t + sigma W`` from 0."""
    s2 = sigma**2
    return math.cosh(mu * h / s2) / math.cosh(h * math.sqrt(mu**2 + 2 * rate * s2) / s2)


@dataclass
class ExitEstimate:
    mean: float
    stderr: float
    replications: int
    dt: float


def exit_lst_mc(h, mu, sigma, rate, replications=100_000, seed=0, dt=None, chunk=2000, threads=None):
    """Monte Carlo estimate of ``E[exp(-rate T)]`` for the exit of ``(-h, h)``.

    Crossings between steps are caught with the Brownian-bridge crossing
    probability; the exit time is placed mid-step. The default step is
    ``(h / sigma)^2 / 400``.
    """
    if not (h > 0 and sigma > 0 and rate > 0):
        raise ConfigInvalid("need h > 0, sigma > 0 and rate > 0")
    dt = (h / sigma) ** 2 / 400 if dt is None else float(dt)
    n_chunks = -(-int(replications) // chunk)
    sizes = [min(chunk, replications - c * chunk) for c in range(n_chunks)]

    def run(c):
        out = np.empty(sizes[c])
        _exit_kernel(_stream(seed, c), sizes[c], float(h), float(mu), float(sigma), float(rate), dt, out)
        return out

    with ThreadPoolExecutor(max_workers=int(threads) if threads else (os.cpu_count() or 1)) as pool:
        vals = np.concatenate(list(pool.map(run, range(n_chunks))))
    return ExitEstimate(mean=float(vals.mean()), stderr=float(vals.std(ddof=1) / math.sqrt(vals.size)),
                        replications=int(vals.size), dt=dt)


def small_h_coefficient(mu, sigma, rate, hs=(0.05, 0.1, 0.2), **kwargs):
    """Intercept of ``(1 - estimate) / h^2`` regressed on ``h^2``; tends to ``rate / sigma^2``."""
    hs = np.asarray(hs, dtype=float)
    ys = np.array([(1 - exit_lst_mc(h, mu, sigma, rate, **kwargs).mean) / h**2 for h in hs])
    slope, intercept = np.polyfit(hs**2, ys, 1)
    return float(intercept), ys
