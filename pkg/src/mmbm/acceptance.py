"""Acceptance criteria, runnable from tests or ``mmbm selftest``.

Each ``criterion_N`` returns a :class:`CriterionResult`; :func:`run_all`
prints one PASS/FAIL line per criterion.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import closed_forms as cf
from .dividend import make_dividend_model, solve_value_function
from .errors import ModelValidationError
from .model import validate_model
from .simulator import (SimConfig, empirical_dividend, empirical_regeneration, exit_lst_mc, ks_distance,
                        simulate_path, small_h_coefficient)
from .stationary import solve_stationary

REFERENCE_COMMON = cf.TwoStateCommonParams(mu=-0.5, sigma=1.0, q12=1.0, q21=1.0, b1=1.0, b2=2.0)
REFERENCE_NODIFF1 = cf.TwoStateParams(mu1=-1.0, sigma1=0.0, mu2=0.5, sigma2=1.0, q12=1.0, q21=1.0, b1=1.0, b2=2.0)
REFERENCE_NODIFF2 = cf.TwoStateParams(mu1=-2.0, sigma1=1.0, mu2=1.0, sigma2=0.0, q12=1.0, q21=1.0, b1=1.0, b2=2.0)
REFERENCE_DIVIDEND = cf.DividendTwoStateParams(lam=1.0, delta=0.5, mu=(0.5, -0.5), sigma=(1.0, 1.0), b1=1.0, b2=2.0)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    elapsed: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d}: {self.title} | {self.summary} | {self.elapsed:.2f}s"

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "summary": self.summary, "elapsed": self.elapsed, "details": self.details}


# ---------------------------------------------------------------------------
# parameter draws


def random_common_params(rng):
    mu = rng.uniform(0.2, 1.5) * rng.choice([-1.0, 1.0])
    b1 = rng.uniform(0.5, 1.5)
    return cf.TwoStateCommonParams(mu=float(mu), sigma=float(rng.uniform(0.5, 1.5)), q12=float(rng.uniform(0.3, 2)),
                                   q21=float(rng.uniform(0.3, 2)), b1=float(b1), b2=float(b1 + rng.uniform(0.5, 1.5)))


def random_nodiff_params(rng, case):
    """Draw parameters inside one of the two no-diffusion cases (negative mean drift)."""
    while True:
        q12, q21 = rng.uniform(0.3, 2, size=2)
        b1 = rng.uniform(0.5, 1.5)
        b2 = b1 + rng.uniform(0.5, 1.5)
        if case == 1:
            mu1, mu2 = -rng.uniform(0.3, 2), rng.uniform(-1.5, 1.5)
            s1, s2 = 0.0, rng.uniform(0.5, 1.5)
        else:
            mu1, mu2 = rng.uniform(-2.5, 0.5), rng.uniform(0.3, 2)
            s1, s2 = rng.uniform(0.5, 1.5), 0.0
        p = cf.TwoStateParams(float(mu1), float(s1), float(mu2), float(s2), float(q12), float(q21), float(b1), float(b2))
        if p.kappa < -0.05 and abs(mu2) > 0.05:
            return p


def random_model(rng, n):
    """A valid model with ``n`` states, some without diffusion, barriers on a coarse lattice."""
    while True:
        q = rng.uniform(0.2, 2.0, (n, n))
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        diff = rng.random(n) < 0.6
        if n > 1 and diff.all():
            diff[rng.integers(n)] = False
        if not diff.any():
            diff[rng.integers(n)] = True
        sigma = np.where(diff, rng.uniform(0.5, 1.5, n), 0.0)
        mu = rng.uniform(-1.5, 1.5, n)
        mu = np.where(~diff & (np.abs(mu) < 0.2), np.copysign(0.2, mu), mu)
        raw = {"q": q.tolist(), "mu": mu.tolist(), "sigma": sigma.tolist(),
               "a": rng.choice([0.0, 0.25, 0.5], n).tolist(), "b": rng.choice([1.0, 1.5, 2.0, 2.5], n).tolist()}
        try:
            return validate_model(raw)
        except ModelValidationError:
            continue


# ---------------------------------------------------------------------------
# helpers


def _sup_cdf(a, b, model, n=200):
    zs = np.linspace(float(np.min(model.a)), float(np.max(model.b)), n)
    return max(float(np.max(np.abs(a.cdf(zs, i) - b.cdf(zs, i)))) for i in range(model.n_states))


def _atom_gap(a, b):
    keys = {(at.state, at.location) for at in a.atoms} | {(at.state, at.location) for at in b.atoms}
    return max((abs(a.atom_mass(*k) - b.atom_mass(*k)) for k in keys), default=0.0)


def mass_invariants(dist):
    """Worst violations of the boundary-mass and monotonicity checks."""
    model = dist.model
    pi = model.pi
    top = max(abs(float(dist.cdf(model.b[i], i)) - pi[i]) for i in range(model.n_states))
    # left limit at b(i) plus the atom there must restore pi_i
    left = max(abs(float(dist.cdf_left(model.b[i], i)) + dist.atom_mass(i, float(model.b[i])) - pi[i])
               for i in range(model.n_states) if model.a[i] < model.b[i])
    total = abs(sum(float(dist.cdf(model.b[i], i)) for i in range(model.n_states)) - 1.0)
    grid = dist.grid(1000)
    mono = min(float(np.min(np.diff(dist.cdf(grid, i)))) for i in range(model.n_states))
    atoms = min((at.mass for at in dist.atoms), default=0.0)
    return {"boundary": max(top, left), "total": total, "min_increment": mono, "min_atom": atoms}


_SOLVED = []


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# criteria


@_timed
def criterion_1(seed=101, draws=10, tol=1e-8, budget=1.0):
    """General solver vs the common-drift two-state closed form."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in [REFERENCE_COMMON] + [random_common_params(rng) for _ in range(draws)]:
        exact = cf.CommonTwoState(p)
        general = solve_stationary(exact.model)
        _SOLVED.append(general)
        worst = max(worst, _sup_cdf(general, exact, exact.model))
    run = time.perf_counter() - t0
    ok = worst <= tol and run < budget
    return CriterionResult(1, "closed form, common drift", ok, f"sup |dCDF| = {worst:.2e} (tol {tol:g}), "
                           f"runtime {run:.2f}s (< {budget:g}s)", details={"sup": worst, "runtime": run})


@_timed
def criterion_2(seed=202, draws=10, tol=1e-8, budget=1.0):
    """General solver vs both no-diffusion closed forms, CDFs and atoms."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_cdf, worst_atom = 0.0, 0.0
    cases = [(cf.NoDiffusionState1, REFERENCE_NODIFF1, 1), (cf.NoDiffusionState2, REFERENCE_NODIFF2, 2)]
    for cls, ref, case in cases:
        for p in [ref] + [random_nodiff_params(rng, case) for _ in range(draws)]:
            exact = cls(p)
            general = solve_stationary(exact.model)
            _SOLVED.append(general)
            worst_cdf = max(worst_cdf, _sup_cdf(general, exact, exact.model))
            worst_atom = max(worst_atom, _atom_gap(general, exact))
    run = time.perf_counter() - t0
    ok = worst_cdf <= tol and worst_atom <= tol and run < budget
    return CriterionResult(2, "closed forms, no-diffusion cases", ok,
                           f"sup |dCDF| = {worst_cdf:.2e}, |d atom| = {worst_atom:.2e} (tol {tol:g}), "
                           f"runtime {run:.2f}s (< {budget:g}s)",
                           details={"sup": worst_cdf, "atom": worst_atom, "runtime": run})


@_timed
def criterion_3(seed=303, n_models=20, rtol=1e-6, budget=10.0):
    """Balance-equation residual on random models with 1 to 4 states."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    sizes = []
    for m in range(n_models):
        n = 1 + m % 4
        model = random_model(rng, n)
        dist = solve_stationary(model)
        _SOLVED.append(dist)
        sizes.append(n)
        worst = max(worst, dist.balance_residual() / model.rate_scale)
    run = time.perf_counter() - t0
    ok = worst <= rtol and run < budget
    return CriterionResult(3, "balance residual, random models", ok,
                           f"max residual / max rate = {worst:.2e} (tol {rtol:g}), runtime {run:.2f}s (< {budget:g}s)",
                           details={"residual": worst, "sizes": sizes, "runtime": run})


@_timed
def criterion_4(tol=1e-9):
    """Boundary masses, total mass and monotonicity for every model solved in criteria 1 to 3."""
    if not _SOLVED:
        criterion_1()
        criterion_2()
        criterion_3()
    worst = {"boundary": 0.0, "total": 0.0, "min_increment": 0.0, "min_atom": 0.0}
    for dist in _SOLVED:
        inv = mass_invariants(dist)
        worst["boundary"] = max(worst["boundary"], inv["boundary"])
        worst["total"] = max(worst["total"], inv["total"])
        worst["min_increment"] = min(worst["min_increment"], inv["min_increment"])
        worst["min_atom"] = min(worst["min_atom"], inv["min_atom"])
    ok = (worst["boundary"] <= tol and worst["total"] <= tol and worst["min_increment"] >= -tol
          and worst["min_atom"] >= -tol)
    return CriterionResult(4, "mass and monotonicity invariants", ok,
                           f"{len(_SOLVED)} models: |Pi(b)-pi| = {worst['boundary']:.1e}, "
                           f"|sum-1| = {worst['total']:.1e}, min step = {worst['min_increment']:.1e}", details=worst)


@_timed
def criterion_5(seeds=(1, 2, 3), tol=0.02, dt=1e-3, horizon=2e4, burn_in=1e3):
    """Simulated stationary CDF vs the common-drift closed form."""
    exact = cf.CommonTwoState(REFERENCE_COMMON)
    dists = []
    for s in seeds:
        est = simulate_path(exact.model, SimConfig(dt=dt, horizon=horizon, burn_in=burn_in, seed=s))
        dists.append(ks_distance(est, exact))
    worst = float(np.max(dists))
    return CriterionResult(5, "simulation vs closed-form CDF", worst <= tol,
                           f"max per-state KS over seeds {list(seeds)} = {worst:.4f} (tol {tol:g})",
                           details={"ks": [d.tolist() for d in dists]})


@_timed
def criterion_6(seed=7, dt=1e-3, horizon=2.6e4, burn_in=1e3, replications=8, eta_rtol=0.05, h_tol=0.03,
                min_cycles=500):
    """Simulated regeneration rate and pre-jump law vs the closed form."""
    exact = cf.CommonTwoState(REFERENCE_COMMON)
    reg = exact.regeneration()
    est = simulate_path(exact.model, SimConfig(dt=dt, horizon=horizon, burn_in=burn_in,
                                               replications=replications, seed=seed))
    emp = empirical_regeneration(est, target=0, min_cycles=min_cycles)
    rel = abs(emp.eta - reg.eta) / reg.eta
    sup = emp.sup_distance(reg.H)
    ok = rel <= eta_rtol and sup <= h_tol and emp.n_cycles >= min_cycles
    return CriterionResult(6, "regeneration rate and overshoot law", ok,
                           f"|eta^-eta|/eta = {rel:.4f} (tol {eta_rtol:g}), sup|H^-H| = {sup:.4f} (tol {h_tol:g}), "
                           f"{emp.n_cycles} cycles", details={"eta_hat": emp.eta, "eta": reg.eta, "sup": sup})


@_timed
def criterion_7(tol=1e-8, v0_tol=1e-9, slope_tol=1e-6):
    """Single-state dividend value vs ``sinh(r z) / (r cosh(r b))``."""
    dm = make_dividend_model({"q": [[0.0]], "mu": [0.0], "sigma": [math.sqrt(2.0)], "a": [0.0], "b": [1.0]}, 0.5)
    vf = solve_value_function(dm)
    r = 1 / math.sqrt(2.0)
    zs = np.linspace(0.0, 1.0, 1001)
    sup = float(np.max(np.abs(vf.value(zs, 0) - np.sinh(r * zs) / (r * np.cosh(r)))))
    v0 = abs(vf.value(0.0, 0))
    slope = abs(vf.value(1.0, 0, 1) - 1.0)
    ok = sup <= tol and v0 <= v0_tol and slope <= slope_tol
    return CriterionResult(7, "dividend, single-state oracle", ok,
                           f"sup = {sup:.1e} (tol {tol:g}), V(0) = {v0:.1e}, |V'(b)-1| = {slope:.1e}",
                           details={"sup": sup, "v0": v0, "slope": slope})


@_timed
def criterion_8(tol=1e-6, gap_tol=1e-8):
    """General dividend solver vs the two-state closed form; gluing gaps at b1."""
    exact = cf.DividendTwoState(REFERENCE_DIVIDEND)
    vf = solve_value_function(make_dividend_model(exact.model, REFERENCE_DIVIDEND.delta))
    zs = np.linspace(0.0, REFERENCE_DIVIDEND.b2, 1001)
    sup = max(float(np.max(np.abs(vf.value(zs, j) - exact.value(zs, j)))) for j in range(2))
    report = vf.verify_boundary()
    gaps = [abs(c.value) for c in report.checks if c.state == 1 and c.name in ("continuity_gap", "smoothness_gap")]
    gaps += [abs(g) for g in exact.gluing_gaps()]
    worst_gap = max(gaps)
    ok = sup <= tol and worst_gap <= gap_tol
    return CriterionResult(8, "dividend, two-state closed form", ok,
                           f"sup = {sup:.1e} (tol {tol:g}), max gap at b1 = {worst_gap:.1e} (tol {gap_tol:g})",
                           details={"sup": sup, "gap": worst_gap})


@_timed
def criterion_9(seed=11, replications=10_000, dt=1e-3, n_sd=3.0, scheme="bridge"):
    """Analytic dividend value inside the Monte Carlo band at five points per state."""
    exact = cf.DividendTwoState(REFERENCE_DIVIDEND)
    vf = solve_value_function(make_dividend_model(exact.model, REFERENCE_DIVIDEND.delta))
    worst = 0.0
    rows = []
    for j in range(2):
        for z0 in np.linspace(0.0, float(exact.model.b[j]), 7)[1:-1]:
            est = empirical_dividend(exact.model, REFERENCE_DIVIDEND.delta, float(z0), j,
                                     SimConfig(dt=dt, replications=replications, seed=seed, scheme=scheme))
            score = abs(est.mean - vf.value(z0, j)) / est.stderr
            worst = max(worst, score)
            rows.append({"state": j + 1, "z0": float(z0), "analytic": vf.value(z0, j), "mc": est.mean,
                         "stderr": est.stderr, "score": score})
    return CriterionResult(9, "dividend vs Monte Carlo", worst <= n_sd,
                           f"max |V - mean| / se over 10 points = {worst:.2f} (tol {n_sd:g})", details={"points": rows})


@_timed
def criterion_10(seed=5, n_sd=3.0, rtol=0.10, replications=100_000):
    """Two-sided exit transform: driftless oracle and the small-h coefficient."""
    est = exit_lst_mc(1.0, 0.0, 1.0, 0.5, replications=replications, seed=seed)
    target = 1 / math.cosh(1.0)
    score = abs(est.mean - target) / est.stderr
    coef, _ = small_h_coefficient(0.0, 1.0, 0.5, replications=replications, seed=seed + 1)
    rel = abs(coef - 0.5) / 0.5
    ok = score <= n_sd and rel <= rtol
    return CriterionResult(10, "exit transform", ok,
                           f"|est - sech(1)| / se = {score:.2f} (tol {n_sd:g}), "
                           f"small-h coefficient {coef:.4f} vs 0.5 (rel {rel:.3f}, tol {rtol:g})",
                           details={"estimate": est.mean, "stderr": est.stderr, "coefficient": coef})


def _same_dirs(d1, d2, skip=("manifest.json",)):
    names = sorted(p.name for p in Path(d1).iterdir() if p.name not in skip)
    names2 = sorted(p.name for p in Path(d2).iterdir() if p.name not in skip)
    if names != names2:
        return False, names
    _, mismatch, errors = filecmp.cmpfiles(d1, d2, names, shallow=False)
    return not mismatch and not errors, names


@_timed
def criterion_11():
    """Byte-identical outputs for analytic runs and for seeded simulation across thread counts."""
    import json

    from .cli import cli_main

    checks = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        model = tmp / "model.json"
        model.write_text(json.dumps(cf.CommonTwoState(REFERENCE_COMMON).model.to_dict()))
        div = tmp / "div.json"
        div.write_text(json.dumps({**cf.DividendTwoState(REFERENCE_DIVIDEND).model.to_dict(), "delta": 0.5}))
        params = json.dumps({"mu": -0.5, "sigma": 1.0, "q12": 1.0, "q21": 1.0, "b1": 1.0, "b2": 2.0})
        jobs = {
            "stationary": lambda o: ["stationary", str(model), "--grid", "400", "--out", o],
            "dividend": lambda o: ["dividend", str(div), "--out", o],
            "regen": lambda o: ["regen", str(model), "--out", o],
            "oracle": lambda o: ["oracle", "common", "--params", params, "--out", o],
            "decompose": lambda o: ["decompose", str(model), "--out", o],
        }
        for name, argv in jobs.items():
            outs = [str(tmp / f"{name}{k}") for k in range(2)]
            codes = [cli_main(argv(o)) for o in outs]
            same, _ = _same_dirs(*outs)
            checks[name] = bool(same and codes == [0, 0])
        sim = lambda o, th: ["simulate", str(model), "--horizon", "300", "--burn-in", "10", "--reps", "4",
                             "--seed", "42", "--threads", str(th), "--out", o]
        outs = [str(tmp / f"sim{th}") for th in (1, 3)]
        codes = [cli_main(sim(o, th)) for o, th in zip(outs, (1, 3))]
        checks["simulate_threads"] = bool(_same_dirs(*outs)[0] and codes == [0, 0])
    ok = all(checks.values())
    bad = [k for k, v in checks.items() if not v]
    return CriterionResult(11, "determinism", ok, "all outputs byte-identical" if ok else f"differs: {bad}",
                           details=checks)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11]


def run_all(only=None, verbose=True):
    """Run the selected criteria (all by default) in order, printing one line each."""
    _SOLVED.clear()
    results = []
    for k, crit in enumerate(CRITERIA, start=1):
        if only and k not in only:
            continue
        res = crit()
        results.append(res)
        if verbose:
            print(res.line(), flush=True)
    return results
