"""Long-term yield under two volatility shapes.

Exponentially decaying volatility keeps the long-term yield at its initial
level; inverse-square-root volatility makes it grow with the integrated state.

Run with ``python demos/long_term_yield.py``.
"""

import numpy as np

from affine_hjm import AdmissibleParams, InitialCurve, MeasureChange, VolatilitySpec, simulate, uniform_grid
from affine_hjm.longterm import classify_decay, ell_trajectory, extrapolate_long_yield, yield_ladder

params = AdmissibleParams.wishart(2, 2.0)
curve = InitialCurve.flat(0.02)
ladder = np.array([25.0, 50.0, 100.0, 200.0, 400.0]) + 1.0
path = simulate(params, np.eye(2), uniform_grid(1.0, 2.0**-10), 1, seed=3, keep_paths=True).paths[0]

for vol in (VolatilitySpec.exponential_decay(0.1 * np.eye(2), 1.0), VolatilitySpec.inverse_sqrt(0.1 * np.eye(2))):
    ell = ell_trajectory(params, vol, path, curve.ell0())
    ys = yield_ladder(params, vol, MeasureChange(), path, 1.0, curve, ladder)
    fit = extrapolate_long_yield(1.0, ladder, ys)
    print(f"{vol.kind}: class {classify_decay(vol).classification}")
    print(f"  ell_0={ell[0]:.5f}  ell_1={ell[-1]:.5f}  extrapolated Y(1, inf)={float(fit.limit):.5f}")
    print("  Y(1, T):", " ".join(f"{y:.5f}" for y in ys))
