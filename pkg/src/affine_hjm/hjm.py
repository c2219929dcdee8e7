"""Arbitrage-free forward-curve dynamics driven by an affine process on the PSD cone.

Forward rates evolve as

    f(t, T) = f(0, T) + int_0^t alpha(s, T) ds + int_0^t Tr[sigma(s, T) dX_s],

and the bond volatility is ``Sigma(s, T) = -int_s^T sigma(s, u) du``.  Under a
pricing measure with Brownian drift ``gamma`` and jump multipliers ``K`` the
discounted bonds are local martingales exactly when

    alpha(t, T) = -Tr[sigma (b + B(X) + 2 sqrt(X) gamma Q)]
                  - 4 Tr[Q sigma X Sigma Q^T]
                  - sum_rays K * int Tr[sigma xi] exp(Tr[Sigma xi]) (m + Tr[X mu])(dxi).

Every volatility kind offered here is separable: ``sigma(t, T) = sigma0 g(T - t)``
and ``Sigma(t, T) = -sigma0 G(T - t)`` with ``G' = g``, ``G(0) = 0``.  One Euler
step of the forward curve then collapses to a handful of per-path scalars
(see :func:`step_scalars`), and integrals over maturity have closed forms
in ``g`` and ``G``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import symcone
from .measure import IDENTITY, MeasureChange
from .params import AdmissibleParams, eval_B
from .pathsim import SamplePath, grid_index

VolKind = Literal["exponential_decay", "inverse_sqrt", "tabulated"]


# ---------------------------------------------------------------------------
# Volatility


@dataclass(frozen=True)
class VolatilitySpec:
    """Deterministic separable volatility ``sigma(t, T) = sigma0 * g(T - t)``.

    Kinds
    -----
    exponential_decay
        ``g(tau) = exp(-beta tau)`` for ``tau >= 0``.
    inverse_sqrt
        ``g(tau) = 1 / sqrt(tau)`` for ``tau > 0``, zero at ``tau = 0``.
    tabulated
        ``g`` piecewise linear through ``(tau_nodes, g_nodes)`` with flat
        extrapolation beyond the last node; ``G`` by composite Simpson on
        each linear piece.

    ``g(tau) = 0`` for ``tau < 0`` in every kind.
    """

    kind: VolKind
    sigma0: np.ndarray
    beta: float | None = None
    tau_nodes: np.ndarray | None = None
    g_nodes: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "sigma0", symcone.require_psd(self.sigma0, "sigma0"))
        if self.kind == "exponential_decay":
            if self.beta is None or not self.beta > 0:
                raise ValueError("exponential_decay needs beta > 0")
        elif self.kind == "tabulated":
            tau = np.asarray(self.tau_nodes, dtype=float)
            g = np.asarray(self.g_nodes, dtype=float)
            if tau.ndim != 1 or tau.shape != g.shape or tau.size < 1:
                raise ValueError("tabulated volatility needs matching 1-d tau_nodes and g_nodes")
            if tau[0] != 0.0 or np.any(np.diff(tau) <= 0):
                raise ValueError("tau_nodes must start at 0 and increase strictly")
            if np.any(g < 0) or not np.all(np.isfinite(g)):
                raise ValueError("g_nodes must be finite and non-negative")
            object.__setattr__(self, "tau_nodes", tau)
            object.__setattr__(self, "g_nodes", g)
            seg = np.diff(tau) * (g[:-1] + 4 * 0.5 * (g[:-1] + g[1:]) + g[1:]) / 6.0
            object.__setattr__(self, "_G_nodes", np.concatenate([[0.0], np.cumsum(seg)]))
        elif self.kind != "inverse_sqrt":
            raise ValueError(f"unknown volatility kind {self.kind!r}")

    @classmethod
    def exponential_decay(cls, sigma0, beta: float) -> "VolatilitySpec":
        return cls("exponential_decay", np.asarray(sigma0, dtype=float), beta=float(beta))

    @classmethod
    def inverse_sqrt(cls, sigma0) -> "VolatilitySpec":
        return cls("inverse_sqrt", np.asarray(sigma0, dtype=float))

    @classmethod
    def tabulated(cls, sigma0, tau_nodes, g_nodes) -> "VolatilitySpec":
        return cls("tabulated", np.asarray(sigma0, dtype=float), tau_nodes=tau_nodes, g_nodes=g_nodes)

    @property
    def dim(self) -> int:
        return self.sigma0.shape[0]

    @property
    def closed_sigma_available(self) -> bool:
        return self.kind != "tabulated"

    @property
    def singular(self) -> bool:
        """``sigma(t, T)`` blows up as ``T`` decreases to ``t``."""
        return self.kind == "inverse_sqrt"

    def g(self, tau):
        """Scalar profile ``g`` (vectorised)."""
        tau = np.asarray(tau, dtype=float)
        pos = tau > 0
        if self.kind == "exponential_decay":
            return np.where(tau >= 0, np.exp(-self.beta * np.maximum(tau, 0.0)), 0.0)
        if self.kind == "inverse_sqrt":
            return np.where(pos, 1.0 / np.sqrt(np.where(pos, tau, 1.0)), 0.0)
        val = np.interp(tau, self.tau_nodes, self.g_nodes)
        return np.where(tau >= 0, val, 0.0)

    def G(self, tau):
        """``int_0^tau g``, zero for ``tau <= 0`` (vectorised)."""
        tau = np.maximum(np.asarray(tau, dtype=float), 0.0)
        if self.kind == "exponential_decay":
            return -np.expm1(-self.beta * tau) / self.beta
        if self.kind == "inverse_sqrt":
            return 2.0 * np.sqrt(tau)
        nodes, gn, Gn = self.tau_nodes, self.g_nodes, self._G_nodes
        i = np.clip(np.searchsorted(nodes, tau, side="right") - 1, 0, len(nodes) - 1)
        left = nodes[i]
        glo = gn[i]
        ghi = self.g(tau)
        mid = self.g(0.5 * (left + tau))
        return Gn[i] + (tau - left) * (glo + 4 * mid + ghi) / 6.0

    def sigma(self, t, T) -> np.ndarray:
        """``sigma(t, T)``; broadcasts over array ``t``, ``T``."""
        return np.asarray(self.g(np.asarray(T, dtype=float) - t))[..., None, None] * self.sigma0


def big_sigma(vol: VolatilitySpec, s, T) -> np.ndarray:
    """Bond volatility ``Sigma(s, T) = -int_s^T sigma(s, u) du`` (negative semidefinite)."""
    s = np.asarray(s, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(s > T + 1e-14):
        raise ValueError("big_sigma needs s <= T")
    return -np.asarray(vol.G(T - s))[..., None, None] * vol.sigma0


# ---------------------------------------------------------------------------
# Initial curve


@dataclass(frozen=True)
class InitialCurve:
    """Piecewise-linear initial forward curve ``T -> f(0, T)`` with flat extrapolation."""

    T_nodes: np.ndarray
    f_nodes: np.ndarray
    is_flat: bool = False

    def __post_init__(self):
        T = np.atleast_1d(np.asarray(self.T_nodes, dtype=float))
        f = np.atleast_1d(np.asarray(self.f_nodes, dtype=float))
        if T.shape != f.shape or T.ndim != 1 or T.size < 1:
            raise ValueError("T_nodes and f_nodes must be matching 1-d arrays")
        if np.any(np.diff(T) <= 0):
            raise ValueError("curve maturities must increase strictly")
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(f))):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "T_nodes", T)
        object.__setattr__(self, "f_nodes", f)

    @classmethod
    def flat(cls, r: float) -> "InitialCurve":
        return cls(np.array([0.0]), np.array([float(r)]), is_flat=True)

    @classmethod
    def from_csv(cls, path) -> "InitialCurve":
        """Two-column CSV ``T, rate``; a non-numeric first row is treated as a header."""
        rows = []
        with open(path, newline="") as fh:
            for line_no, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows or line_no > 1:
                        raise ValueError(f"{path}:{line_no}: expected two numeric columns, got {row!r}")
        if not rows:
            raise ValueError(f"{path}: no curve nodes")
        T, f = zip(*rows)
        return cls(np.array(T), np.array(f))

    def __call__(self, T):
        return np.interp(np.asarray(T, dtype=float), self.T_nodes, self.f_nodes)

    def _antiderivative(self, x):
        # int_{T_0}^{x} f(0, u) du for the interpolant, including flat extrapolation.
        x = np.asarray(x, dtype=float)
        T, f = self.T_nodes, self.f_nodes
        cum = np.concatenate([[0.0], np.cumsum(np.diff(T) * 0.5 * (f[:-1] + f[1:]))])
        i = np.clip(np.searchsorted(T, x, side="right") - 1, 0, len(T) - 1)
        fx = self(x)
        inside = cum[i] + 0.5 * (x - T[i]) * (f[i] + fx)
        below = (x - T[0]) * f[0]
        above = cum[-1] + (x - T[-1]) * f[-1]
        return np.where(x < T[0], below, np.where(x > T[-1], above, inside))

    def integral(self, a, b):
        """Exact ``int_a^b f(0, u) du``."""
        out = self._antiderivative(b) - self._antiderivative(a)
        return float(out) if np.ndim(out) == 0 else out

    def yield0(self, t: float, T: float) -> float:
        """Forward yield ``Y(0; t, T) = int_t^T f(0, u) du / (T - t)`` prevailing at 0."""
        if not T > t:
            raise ValueError("yield0 needs t < T")
        return self.integral(t, T) / (T - t)

    def ell0(self) -> float:
        """Long-term yield at time 0.

        Exact for a flat curve.  For a tabulated curve the limit is not
        determined by the table; the value implied by flat extrapolation,
        ``f(0, T_last)``, is returned with a warning.
        """
        if not self.is_flat and len(self.T_nodes) > 1:
            warnings.warn(
                "ell_0 of a tabulated curve is taken from flat extrapolation of the last node",
                RuntimeWarning,
                stacklevel=2,
            )
        return float(self.f_nodes[-1])


# ---------------------------------------------------------------------------
# Drift condition


def hjm_drift(params: AdmissibleParams, vol: VolatilitySpec, mc: MeasureChange, x, t: float, T: float) -> float:
    """Drift ``alpha(t, T)`` that makes discounted bonds local martingales under ``mc``.

    For a jump ray ``xi = gamma v v^T`` with ``gamma ~ Exp(theta)`` the jump
    integral is ``lambda_eff * a * theta / (theta - c)^2`` with
    ``a = v^T sigma v``, ``c = v^T Sigma v <= 0`` and
    ``lambda_eff = lambda_const + Tr[x L_state]``.
    """
    if t > T:
        raise ValueError("hjm_drift needs t <= T")
    x = symcone.require_psd(x, "x")
    d = params.dim
    if x.shape != (d, d) or vol.dim != d:
        raise symcone.DimensionError("dimension mismatch between params, vol and x")
    sig = vol.sigma(t, T)
    Sig = big_sigma(vol, t, T)
    gamma = mc.gamma_matrix(d)
    inner = params.b + eval_B(params.drift, x)
    if np.any(gamma):
        inner = inner + 2.0 * symcone.sqrt_psd(x) @ gamma @ params.Q
    out = -np.trace(sig @ inner)
    out -= 4.0 * np.trace(params.Q @ sig @ x @ Sig @ params.Q.T)
    k = mc.k_factors(len(params.jumps))
    for r, ray in enumerate(params.jumps):
        a = ray.v @ sig @ ray.v
        c = ray.v @ Sig @ ray.v
        lam = ray.lambda_const + np.sum(x * ray.L_state)
        out -= k[r] * lam * a * ray.theta / (ray.theta - c) ** 2
    return float(out)


# ---------------------------------------------------------------------------
# Per-step scalars


@dataclass(frozen=True)
class StepScalars:
    """Per-step drivers of the forward curve.

    For a step starting at ``s`` with length ``h`` and any maturity ``T``
    with ``tau = T - s``, the forward-rate increment is

        g(tau) * noise + g(tau) G(tau) * quad
        - sum_r comp[r] * g(tau) c_r theta_r / (theta_r + G(tau) c_r)^2,

    with ``c_r = v_r^T sigma0 v_r``.  Shapes: ``noise`` and ``quad`` are
    ``(..., )``, ``comp`` is ``(..., n_rays)``.
    """

    noise: np.ndarray
    quad: np.ndarray
    comp: np.ndarray


def step_scalars(
    params: AdmissibleParams,
    vol: VolatilitySpec,
    mc: MeasureChange,
    x,
    sq,
    D,
    J,
    h,
    sim_measure: MeasureChange = IDENTITY,
) -> StepScalars:
    """Reduce one step (batched over paths or steps) to :class:`StepScalars`.

    ``D`` is the diffusion increment driven by the Brownian motion of
    ``sim_measure``; it is converted to the pricing-measure increment
    ``D* = D + sqrt(x) (gamma_sim - gamma) Q h``.
    """
    d = params.dim
    s0 = vol.sigma0
    h = np.asarray(h, dtype=float)
    dgam = sim_measure.gamma_matrix(d) - mc.gamma_matrix(d)
    if np.any(dgam):
        if sq is None:
            sq = symcone.sqrt_psd(x)
        D = D + (sq @ dgam @ params.Q) * h[..., None, None]
    noise = 2.0 * np.einsum("ij,...ij->...", s0, D) + np.einsum("ij,...ij->...", s0, J)
    quad = 4.0 * h * np.einsum("...ij,ij->...", x, s0 @ params.alpha @ s0)
    k = mc.k_factors(len(params.jumps))
    comp = np.stack(
        [k[r] * ray.intensity(x) * h for r, ray in enumerate(params.jumps)], axis=-1
    ) if params.jumps else np.zeros(noise.shape + (0,))
    return StepScalars(noise, quad, comp)


def _ray_c(params: AdmissibleParams, vol: VolatilitySpec):
    return np.array([ray.v @ vol.sigma0 @ ray.v for ray in params.jumps]), np.array(
        [ray.theta for ray in params.jumps]
    )


def forward_increment(sc: StepScalars, vol: VolatilitySpec, c, theta, tau):
    """Forward-rate increment of each step at time-to-maturity ``tau`` (broadcast)."""
    g = vol.g(tau)
    G = vol.G(tau)
    out = g * sc.noise + g * G * sc.quad
    for r in range(len(c)):
        out = out - sc.comp[..., r] * g * c[r] * theta[r] / (theta[r] + G * c[r]) ** 2
    return out


def integrated_increment(sc: StepScalars, vol: VolatilitySpec, c, theta, tau_a, tau_b):
    """``int`` of :func:`forward_increment` over maturities with ``tau`` in ``[tau_a, tau_b]``."""
    Ga = vol.G(tau_a)
    Gb = vol.G(tau_b)
    out = (Gb - Ga) * sc.noise + 0.5 * (Gb * Gb - Ga * Ga) * sc.quad
    for r in range(len(c)):
        out = out - sc.comp[..., r] * theta[r] * (1.0 / (theta[r] + Ga * c[r]) - 1.0 / (theta[r] + Gb * c[r]))
    return out


def path_scalars(params, vol, mc, path: SamplePath) -> StepScalars:
    h = np.diff(path.t_grid)
    x = path.states[:-1]
    sq = None if path.sqrt_states is None else path.sqrt_states[:-1]
    return step_scalars(params, vol, mc, x, sq, path.D, path.J, h, path.measure)


# ---------------------------------------------------------------------------
# Forward surface


@dataclass
class ForwardSurface:
    """Forward rates ``f[i, j] = f(t_grid[i], T_grid[j])`` (NaN where ``T < t``).

    ``first_cell[i]`` is the exact integral of ``f(t_i, .)`` over the first
    maturity cell after ``t_i``; bond quadrature uses it for singular
    volatilities.
    """

    t_grid: np.ndarray
    T_grid: np.ndarray
    f: np.ndarray
    first_cell: np.ndarray
    singular: bool
    path: SamplePath | None = None
    meta: dict = field(default_factory=dict)

    def _ti(self, t):
        return grid_index(self.t_grid, t)

    def _Tj(self, T):
        return grid_index(self.T_grid, T)


def evolve_forward(
    params: AdmissibleParams,
    vol: VolatilitySpec,
    mc: MeasureChange,
    path: SamplePath,
    T_grid,
    curve: InitialCurve,
    t_eval=None,
) -> ForwardSurface:
    """Evolve the forward curve along ``path`` with left-point Euler steps.

    ``f(t_{k+1}, T) = f(t_k, T) + alpha(t_k, T) h + Tr[sigma(t_k, T) dX_k]``
    where ``dX_k = (b + B(X_k)) h + D_k + D_k^T + J_k`` uses the path's own
    Brownian and jump increments (the cone projection of the simulator is
    not part of the model increment).

    ``t_eval`` (default: every path node) must be path nodes; they are
    merged into ``T_grid`` so bonds can be priced from any evaluation time.
    """
    if vol.dim != params.dim:
        raise symcone.DimensionError("vol and params dimensions differ")
    tg = path.t_grid
    t_eval = tg if t_eval is None else np.atleast_1d(np.asarray(t_eval, dtype=float))
    k_eval = np.array([grid_index(tg, t) for t in t_eval])
    T_grid = np.unique(np.concatenate([np.asarray(T_grid, dtype=float), tg[k_eval]]))
    sc = path_scalars(params, vol, mc, path)
    c, theta = _ray_c(params, vol)
    s = tg[:-1]
    tau = T_grid[None, :] - s[:, None]
    scb = StepScalars(sc.noise[:, None], sc.quad[:, None], sc.comp[:, None, :])
    inc = forward_increment(scb, vol, c, theta, tau)
    cum = np.vstack([np.zeros((1, len(T_grid))), np.cumsum(inc, axis=0)])
    f = curve(T_grid)[None, :] + cum[k_eval]
    f = np.where(T_grid[None, :] >= tg[k_eval][:, None] - 1e-12, f, np.nan)

    first = np.full(len(k_eval), np.nan)
    for i, k in enumerate(k_eval):
        t = tg[k]
        j = np.searchsorted(T_grid, t + 1e-12 * max(1.0, t), side="right")
        if j >= len(T_grid):
            continue
        Tn = T_grid[j]
        scs = StepScalars(sc.noise[:k], sc.quad[:k], sc.comp[:k])
        first[i] = curve.integral(t, Tn) + float(
            np.sum(integrated_increment(scs, vol, c, theta, t - s[:k], Tn - s[:k]))
        )
    return ForwardSurface(tg[k_eval], T_grid, f, first, vol.singular, path)


def bond_price(surface: ForwardSurface, t: float, T: float) -> float:
    """``P(t, T) = exp(-int_t^T f(t, u) du)`` by the trapezoidal rule in ``T``.

    For singular volatilities the first maturity cell uses its exact integral.
    """
    if T < t:
        raise ValueError("bond_price needs t <= T")
    if T == t:
        return 1.0
    i = surface._ti(t)
    j0 = surface._Tj(t)
    j1 = surface._Tj(T)
    u = surface.T_grid[j0 : j1 + 1]
    fv = surface.f[i, j0 : j1 + 1]
    cells = 0.5 * np.diff(u) * (fv[:-1] + fv[1:])
    if surface.singular:
        cells[0] = surface.first_cell[i]
    return float(np.exp(-np.sum(cells)))


def short_rate(surface: ForwardSurface, t: float) -> float:
    """``r_t = f(t, t)``."""
    return float(surface.f[surface._ti(t), surface._Tj(t)])


def yield_direct(surface: ForwardSurface, t: float, T: float) -> float:
    """``Y(t, T) = -log P(t, T) / (T - t)``."""
    if not T > t:
        raise ValueError("the yield needs t < T; use short_rate for t == T")
    return -math.log(bond_price(surface, t, T)) / (T - t)


# ---------------------------------------------------------------------------
# Yield in compact form


@dataclass(frozen=True)
class YieldDecomposition:
    """Terms of the compact yield formula.

    Grouping with the jump measure and its compensator::

        total = y0 + gamma_term + jump_compensator_term + jump_measure_term + brownian_term

    Compensated grouping::

        total_compensated = y0 + gamma_term + m_term + compensated_jump_term + brownian_term

    ``M_values[k, r]`` holds ``E[M(s_k, t, T, xi)]`` for a jump on ray ``r``
    from step ``k``, which is what ``m_term`` integrates.
    """

    y0: float
    gamma_term: float
    jump_compensator_term: float
    jump_measure_term: float
    brownian_term: float
    m_term: float
    compensated_jump_term: float
    M_values: np.ndarray

    @property
    def total(self) -> float:
        return self.y0 + self.gamma_term + self.jump_compensator_term + self.jump_measure_term + self.brownian_term

    @property
    def total_compensated(self) -> float:
        return self.y0 + self.gamma_term + self.m_term + self.compensated_jump_term + self.brownian_term


def yield_compact(
    params: AdmissibleParams,
    vol: VolatilitySpec,
    mc: MeasureChange,
    path: SamplePath,
    t: float,
    T: float,
    curve: InitialCurve,
) -> YieldDecomposition:
    """Yield ``Y(t, T)`` assembled from ``Gamma = Sigma X Sigma`` and the jump and Brownian terms.

    Time integrals are left-point sums over the path steps before ``t``.
    """
    if not T > t:
        raise ValueError("yield_compact needs t < T")
    k_t = grid_index(path.t_grid, t)
    s = path.t_grid[:k_t]
    h = np.diff(path.t_grid)[:k_t]
    X = path.states[:k_t]
    d = params.dim
    Q = params.Q
    tau_len = T - t

    Sig_T = big_sigma(vol, s, T)
    Sig_t = big_sigma(vol, s, np.full_like(s, t))
    dSig = Sig_T - Sig_t
    Gam_T = Sig_T @ X @ Sig_T
    Gam_t = Sig_t @ X @ Sig_t
    gamma_term = 2.0 * np.sum(np.trace(Q @ (Gam_T - Gam_t) @ Q.T, axis1=-2, axis2=-1) * h) / tau_len

    dgam = path.measure.gamma_matrix(d) - mc.gamma_matrix(d)
    D = path.D[:k_t]
    if np.any(dgam):
        D = D + (path.sqrt_at()[:k_t] @ dgam @ Q) * h[:, None, None]
    brownian = -2.0 * np.sum(np.einsum("kij,kji->k", dSig, D)) / tau_len

    J = path.J[:k_t]
    jump_meas = -np.sum(np.einsum("kij,kji->k", dSig, J)) / tau_len

    kf = mc.k_factors(len(params.jumps))
    comp_term = 0.0
    m_term = 0.0
    expected_jump = 0.0
    M_values = np.zeros((k_t, len(params.jumps)))
    for r, ray in enumerate(params.jumps):
        cT = np.einsum("i,kij,j->k", ray.v, Sig_T, ray.v)
        ct = np.einsum("i,kij,j->k", ray.v, Sig_t, ray.v)
        rate = kf[r] * ray.intensity(X) * h
        e_diff = ray.theta / (ray.theta - cT) - ray.theta / (ray.theta - ct)
        lin = (cT - ct) / ray.theta
        M_values[:, r] = e_diff - lin
        comp_term += np.sum(rate * e_diff) / tau_len
        m_term += np.sum(rate * (e_diff - lin)) / tau_len
        expected_jump += np.sum(rate * lin) / tau_len
    compensated_jump = jump_meas + expected_jump

    return YieldDecomposition(
        y0=curve.yield0(t, T),
        gamma_term=float(gamma_term),
        jump_compensator_term=float(comp_term),
        jump_measure_term=float(jump_meas),
        brownian_term=float(brownian),
        m_term=float(m_term),
        compensated_jump_term=float(compensated_jump),
        M_values=M_values,
    )


# ---------------------------------------------------------------------------
# Closed forms for the Wishart-driven exponential-decay example


def _example_check(params: AdmissibleParams, vol: VolatilitySpec) -> float:
    d = params.dim
    if vol.kind != "exponential_decay":
        raise ValueError("the affine realisation needs exponential_decay volatility")
    a = params.b[0, 0]
    ok = (
        np.allclose(params.alpha, np.eye(d))
        and np.allclose(params.Q, np.eye(d))
        and np.allclose(params.b, a * np.eye(d))
        and not np.any(params.drift.M)
        and not params.drift.g_terms
        and not params.jumps
    )
    if not ok:
        raise ValueError("the affine realisation needs dX = a I dt + sqrt(X) dW + dW^T sqrt(X)")
    return float(a)


def _z_integrals(path: SamplePath, k_t: int, beta: float):
    s = path.t_grid[:k_t]
    h = np.diff(path.t_grid)[:k_t]
    X = path.states[:k_t]
    z1 = np.einsum("k,kij->ij", np.exp(2 * beta * s) * h, X)
    z2 = np.einsum("k,kij->ij", np.exp(beta * s) * h, X)
    return z1, z2


def affine_realization(
    params: AdmissibleParams, vol: VolatilitySpec, curve: InitialCurve, path: SamplePath, t: float, T: float
) -> float:
    """``f(t, T) = h0(t, T) + Tr[Z_t^T h(t, T)]`` with ``Z = (int e^{2 beta s} X, int e^{beta s} X, X_t)``.

    Valid for ``dX = a I dt + sqrt(X) dW + dW^T sqrt(X)`` with exponential
    decay volatility.  The time integrals in ``Z`` are left-point sums.
    """
    a = _example_check(params, vol)
    beta = vol.beta
    sig = vol.sigma0
    k_t = grid_index(path.t_grid, t)
    x0 = path.states[0]
    h0 = curve(T) - math.exp(-beta * T) * np.trace(sig @ x0) - (a / beta) * np.trace(sig) * (
        math.exp(-beta * (T - t)) - math.exp(-beta * T)
    )
    sig2 = sig @ sig
    h1 = -(4.0 / beta) * sig2 * math.exp(-2 * beta * T)
    h2 = -beta * sig * math.exp(-beta * T) + (4.0 / beta) * sig2 * math.exp(-beta * T)
    h3 = math.exp(-beta * (T - t)) * sig
    z1, z2 = _z_integrals(path, k_t, beta)
    return float(h0 + np.trace(h1 @ z1) + np.trace(h2 @ z2) + np.trace(h3 @ path.states[k_t]))


def short_rate_closed_form(
    params: AdmissibleParams, vol: VolatilitySpec, curve: InitialCurve, path: SamplePath, t: float
) -> float:
    """Short rate of the exponential-decay example as a functional of the path of ``X``.

    ``r_t = f(0,t) - e^{-beta t} Tr[sigma X_0] - (a/beta)(1 - e^{-beta t}) Tr[sigma] + Tr[sigma X_t]
    - beta int_0^t e^{-beta(t-s)} Tr[sigma X_s] ds
    - (4/beta) int_0^t (e^{-2 beta(t-s)} - e^{-beta(t-s)}) Tr[sigma^2 X_s] ds``.
    """
    a = _example_check(params, vol)
    beta = vol.beta
    sig = vol.sigma0
    k_t = grid_index(path.t_grid, t)
    s = path.t_grid[:k_t]
    h = np.diff(path.t_grid)[:k_t]
    X = path.states[:k_t]
    tr_s = np.einsum("ij,kji->k", sig, X)
    tr_s2 = np.einsum("ij,kji->k", sig @ sig, X)
    e1 = np.exp(-beta * (t - s))
    e2 = np.exp(-2 * beta * (t - s))
    return float(
        curve(t)
        - math.exp(-beta * t) * np.trace(sig @ path.states[0])
        - (a / beta) * (1 - math.exp(-beta * t)) * np.trace(sig)
        + np.trace(sig @ path.states[k_t])
        - beta * np.sum(e1 * tr_s * h)
        - (4.0 / beta) * np.sum((e2 - e1) * tr_s2 * h)
    )
