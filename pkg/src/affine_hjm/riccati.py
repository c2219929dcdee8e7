"""Generalised Riccati system of a conservative affine process on the PSD cone.

For admissible parameters the Laplace transform of the process is

    E_x[exp(-Tr[u X_t])] = exp(-phi(t, u) - Tr[psi(t, u) x]),

where ``phi`` and ``psi`` solve

    d/dt phi = F(psi),   phi(0) = 0,
    d/dt psi = R(psi),   psi(0) = u,

with ``F(u) = Tr[b u] - int (exp(-Tr[u xi]) - 1) m(dxi)`` and
``R(u) = -2 u alpha u + B^T(u) - int (exp(-Tr[u xi]) - 1) mu(dxi)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import symcone
from .params import AdmissibleParams, eval_B_adjoint, jump_exp_integral

EPS_ESCAPE = 1e-6
MAX_STEPS = 100_000
DEFAULT_DT_FRACTION = 1e-3


class RiccatiEscapeError(ArithmeticError):
    """psi left the cone by more than ``EPS_ESCAPE`` during integration."""


def eval_F(params: AdmissibleParams, u, check: bool = True):
    """``Tr[b u]`` minus the constant-measure jump integral (batched over ``u``)."""
    u = np.asarray(u, dtype=float)
    if check:
        symcone.require_psd(u, "u")
    out = np.einsum("ij,...ij->...", params.b, u)
    if params.jumps:
        out = out - jump_exp_integral(params.jumps, u, "constant", check=False)
    return float(out) if np.ndim(out) == 0 else out


def eval_R(params: AdmissibleParams, u, check: bool = True) -> np.ndarray:
    """``-2 u alpha u + B^T(u)`` minus the linear jump integral (batched over ``u``)."""
    u = np.asarray(u, dtype=float)
    if check:
        symcone.require_psd(u, "u")
    out = -2.0 * (u @ params.alpha @ u) + eval_B_adjoint(params.drift, u)
    if params.jumps:
        out = out - jump_exp_integral(params.jumps, u, "linear", check=False)
    return symcone.symmetrize(out)


@dataclass(frozen=True)
class RiccatiSolution:
    """``phi`` and ``psi`` on a uniform grid.

    ``phi`` has shape ``(n+1, *batch)`` and ``psi`` has shape
    ``(n+1, *batch, d, d)``, where ``batch`` is the batch shape of ``u0``.
    ``min_eig_raw`` holds the smallest eigenvalue of each RK4 step before any
    projection, so cone invariance can be audited after the fact.
    """

    t_grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    u0: np.ndarray
    min_eig_raw: np.ndarray
    n_projected: int = 0

    @property
    def t_end(self) -> float:
        return float(self.t_grid[-1])

    def at(self, t: float):
        """Interpolated ``(phi(t), psi(t))``, linear between grid nodes."""
        if t < 0 or t > self.t_end * (1 + 1e-12):
            raise ValueError(f"t={t} outside the solved range [0, {self.t_end}]")
        n = len(self.t_grid) - 1
        if n == 0:
            return self.phi[0], self.psi[0]
        h = self.t_end / n
        k = min(int(t / h), n - 1)
        w = (t - self.t_grid[k]) / h
        phi = (1 - w) * self.phi[k] + w * self.phi[k + 1]
        psi = (1 - w) * self.psi[k] + w * self.psi[k + 1]
        return phi, psi


def _rhs(params, psi):
    return eval_F(params, psi, check=False), eval_R(params, psi, check=False)


def solve(params: AdmissibleParams, u, t_end: float, dt: float | None = None) -> RiccatiSolution:
    """Integrate the Riccati system with classical RK4 on a uniform grid.

    Parameters
    ----------
    params : AdmissibleParams
    u : array_like, shape (..., d, d)
        PSD initial condition; a batch of matrices is solved in one pass.
    t_end : float
        Final time, ``>= 0``.
    dt : float, optional
        Target step; defaults to ``1e-3 * t_end``.  The step actually used is
        ``t_end / n`` with ``n = ceil(t_end / dt)``, capped at ``MAX_STEPS``.

    Raises
    ------
    RiccatiEscapeError
        If the smallest eigenvalue of ``psi`` drops below ``-EPS_ESCAPE``.
        Smaller excursions are treated as roundoff and projected away.
    """
    u = symcone.require_psd(u, "u")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    batch = u.shape[:-2]
    if t_end == 0:
        return RiccatiSolution(np.zeros(1), np.zeros((1,) + batch), u[None].copy(), u, np.zeros(0))
    if dt is None:
        dt = DEFAULT_DT_FRACTION * t_end
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = max(1, math.ceil(t_end / dt - 1e-9))
    if n > MAX_STEPS:
        warnings.warn(f"step count {n} capped at {MAX_STEPS}", RuntimeWarning, stacklevel=2)
        n = MAX_STEPS
    h = t_end / n

    phi = np.zeros((n + 1,) + batch)
    psi = np.empty((n + 1,) + u.shape)
    psi[0] = u
    lows = np.empty(n)
    n_proj = 0
    p, y = np.zeros(batch), u.copy()
    for k in range(n):
        f1, r1 = _rhs(params, y)
        f2, r2 = _rhs(params, y + 0.5 * h * r1)
        f3, r3 = _rhs(params, y + 0.5 * h * r2)
        f4, r4 = _rhs(params, y + h * r3)
        p = p + h / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
        y = symcone.symmetrize(y + h / 6.0 * (r1 + 2 * r2 + 2 * r3 + r4))
        w, v = symcone.jacobi_eigh(y)
        lo = float(np.min(w[..., 0]))
        lows[k] = lo
        if lo < -EPS_ESCAPE:
            raise RiccatiEscapeError(
                f"psi left the cone at t={(k + 1) * h:.6g} (min eigenvalue {lo:.3e}); "
                "the parameters may be inadmissible or the step too coarse"
            )
        if lo < 0:
            y = symcone.reassemble(np.clip(w, 0.0, None), v)
            n_proj += 1
        phi[k + 1] = p
        psi[k + 1] = y
    t_grid = np.linspace(0.0, t_end, n + 1)
    return RiccatiSolution(t_grid, phi, psi, u, lows, n_proj)


def laplace_transform(sol: RiccatiSolution, x, t: float):
    """``exp(-phi(t, u) - Tr[psi(t, u) x])`` from a solved system."""
    x = np.asarray(x, dtype=float)
    phi, psi = sol.at(t)
    out = np.exp(-phi - np.einsum("...ij,...ij->...", psi, x))
    return float(out) if np.ndim(out) == 0 else out


def wishart_scalar_closed_form(c: float, delta: float, d: int, t):
    """Closed form for ``M = 0``, ``alpha = I``, ``b = delta I``, ``u = c I``.

    Returns ``(phi, psi_scalar)`` with ``psi = psi_scalar * I``.
    """
    t = np.asarray(t, dtype=float)
    return 0.5 * delta * d * np.log1p(2 * c * t), c / (1 + 2 * c * t)
