"""Expected discounted dividends under state-dependent barriers.

Solves the value function of a two-state model, checks it against the
explicit two-state form and the boundary conditions, and compares a few
points with seeded Monte Carlo.

Run with ``python3 demos/dividend_walkthrough.py``.
"""
import numpy as np

from mmbm.closed_forms import DividendTwoState, DividendTwoStateParams
from mmbm.dividend import make_dividend_model, solve_value_function
from mmbm.simulator import SimConfig, empirical_dividend

raw = {"q": [[-1, 1], [1, -1]], "mu": [0.5, -0.5], "sigma": [1, 1], "a": [0, 0], "b": [1, 2]}
delta = 0.5

vf = solve_value_function(make_dividend_model(raw, delta))
exact = DividendTwoState(DividendTwoStateParams(lam=1.0, delta=delta, mu=(0.5, -0.5), sigma=(1.0, 1.0),
                                                b1=1.0, b2=2.0))

print("characteristic roots below b1:", np.round(exact.roots, 6))
print("boundary constants V(b(j), j):", vf.boundary_constants)
print()
print(f"{'z':>5} {'V(z,1)':>10} {'V(z,2)':>10} {'|diff|':>9}")
for z in np.linspace(0, 2, 9):
    v = [vf.value(z, j) for j in range(2)]
    diff = max(abs(v[j] - exact.value(z, j)) for j in range(2))
    print(f"{z:5.2f} {v[0]:10.6f} {v[1]:10.6f} {diff:9.1e}")

print()
report = vf.verify_boundary()
for check in report.checks:
    flag = "ok " if check.passed else ("-- " if not check.gating else "BAD")
    print(f"  {flag} {check.name:<24} state {check.state + 1}  {check.value: .2e}")
print("boundary checks passed:", report.passed)

print()
cfg = SimConfig(dt=1e-3, replications=4000, seed=3)
for j, z0 in ((0, 0.5), (1, 1.5)):
    est = empirical_dividend(raw, delta, z0, j, cfg)
    v = vf.value(z0, j)
    print(f"V({z0}, {j + 1}) = {v:.4f}; Monte Carlo {est.mean:.4f} +- {est.stderr:.4f} "
          f"({(est.mean - v) / est.stderr:+.2f} se), ruin fraction {est.ruin_fraction:.3f}")
