"""Stationary law of a two-state model with different buffer sizes.

Solves the model with the general solver, compares it with the explicit
two-state solution, and prints the rate and pre-jump law of the clamping
down-jumps that happen when the buffer shrinks.

Run with ``python3 demos/stationary_walkthrough.py``.
"""
import numpy as np

from mmbm.closed_forms import CommonTwoState, TwoStateCommonParams
from mmbm.model import validate_model
from mmbm.stationary import regeneration, solve_stationary

params = TwoStateCommonParams(mu=-0.5, sigma=1.0, q12=1.0, q21=1.0, b1=1.0, b2=2.0)
model = validate_model({"q": [[-1, 1], [1, -1]], "mu": [-0.5, -0.5], "sigma": [1, 1],
                        "a": [0, 0], "b": [1, 2]})

dist = solve_stationary(model)
exact = CommonTwoState(params)

print("partition breakpoints:", dist.partition.breakpoints)
print("active states per interval:", [[i + 1 for i in act] for act in dist.partition.active_sets])
print()
print(f"{'z':>5} {'Pi_1':>10} {'Pi_2':>10} {'|diff|':>9}")
for z in np.linspace(0, 2, 9):
    p = [dist.cdf(z, i) for i in range(2)]
    diff = max(abs(p[i] - exact.cdf(z, i)) for i in range(2))
    print(f"{z:5.2f} {p[0]:10.6f} {p[1]:10.6f} {diff:9.1e}")

diag = dist.diagnostics()
print()
print(f"balance residual {diag['balance_residual']:.1e}, total mass {diag['total_mass']:.15f}")
print("first moments E[Z; J=i]:", dist.moments(1))

reg = regeneration(dist, target=0)
print()
print(f"down-jumps into state 1: rate {reg.eta:.6f}, mean cycle {1 / reg.eta:.3f}")
for z in (1.25, 1.5, 1.75, 2.0):
    print(f"  P(pre-jump level <= {z:.2f}) = {float(reg.H(z)):.6f}")

# a model where state 1 has no diffusion keeps an atom at the empty level
nodiff = validate_model({"q": [[-1, 1], [1, -1]], "mu": [-1, 0.5], "sigma": [0, 1], "a": [0, 0], "b": [1, 2]})
print()
print("atoms with a pure-drift state:", [a.to_dict() for a in solve_stationary(nodiff).atoms])
