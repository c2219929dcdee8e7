"""Term-structure models driven by affine processes on the cone of PSD matrices.

Modules
-------
symcone     linear algebra on symmetric and PSD matrices
params      admissible parameter sets and their validation
riccati     generalised Riccati ODEs and the Laplace transform
pathsim     Monte Carlo simulation of the state process
hjm         forward curves, bonds and yields under the drift condition
longterm    long-term yields and their asymptotics
mc          ensemble estimators
cli         command-line front end
"""

from .hjm import InitialCurve, VolatilitySpec
from .measure import MeasureChange
from .params import AdmissibleParams, make_ray, validate
from .pathsim import simulate, uniform_grid
from .riccati import laplace_transform, solve

__all__ = [
    "AdmissibleParams",
    "InitialCurve",
    "MeasureChange",
    "VolatilitySpec",
    "laplace_transform",
    "make_ray",
    "simulate",
    "solve",
    "uniform_grid",
    "validate",
]

__version__ = "0.1.0"
