"""Forward curve along one simulated path, with bond prices and two yield formulas.

Run with ``python demos/forward_curve.py``.
"""

import numpy as np

from affine_hjm import AdmissibleParams, InitialCurve, MeasureChange, VolatilitySpec, simulate, uniform_grid
from affine_hjm.hjm import bond_price, evolve_forward, short_rate, yield_compact, yield_direct

params = AdmissibleParams.wishart(2, 3.0, M=-0.5 * np.eye(2))
vol = VolatilitySpec.exponential_decay(0.1 * np.eye(2), 1.0)
curve = InitialCurve(np.array([0.0, 2.0, 10.0]), np.array([0.01, 0.025, 0.03]))
mc = MeasureChange()

path = simulate(params, np.eye(2), uniform_grid(1.0, 2.0**-10), 1, seed=7, keep_paths=True).paths[0]
surface = evolve_forward(params, vol, mc, path, np.linspace(0.0, 10.0, 401), curve, t_eval=[0.0, 0.5, 1.0])

for t in (0.0, 0.5, 1.0):
    print(f"t={t:.1f}  r_t={short_rate(surface, t):+.5f}")
print()
print(f"{'T':>5} {'P(1,T)':>10} {'Y direct':>10} {'Y compact':>10}")
for T in (2.0, 5.0, 10.0):
    y = yield_compact(params, vol, mc, path, 1.0, T, curve)
    print(f"{T:5.1f} {bond_price(surface, 1.0, T):10.6f} {yield_direct(surface, 1.0, T):10.6f} {y.total:10.6f}")
