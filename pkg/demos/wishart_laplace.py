"""Laplace transform of a Wishart process: Riccati solution against Monte Carlo.

Run with ``python demos/wishart_laplace.py``.
"""

import numpy as np

from affine_hjm import AdmissibleParams, laplace_transform, simulate, solve, uniform_grid
from affine_hjm.mc import estimate_laplace

params = AdmissibleParams.wishart(2, 2.0)
x0 = np.eye(2)
grid = uniform_grid(1.0, 2.0**-8)

exact = simulate(params, x0, grid, 20_000, seed=1, scheme="wishart_exact")
euler = simulate(params, x0, grid, 20_000, seed=2)

print(f"{'u':>6} {'riccati':>10} {'exact MC':>18} {'euler MC':>18}")
for c in (0.1, 0.5, 1.0):
    u = c * np.eye(2)
    ref = laplace_transform(solve(params, u, 1.0), x0, 1.0)
    a = estimate_laplace(exact, u, 1.0)
    b = estimate_laplace(euler, u, 1.0)
    print(f"{c:6.1f} {ref:10.6f} {a.value:10.6f} +- {a.std_error:.4f} {b.value:10.6f} +- {b.std_error:.4f}")
