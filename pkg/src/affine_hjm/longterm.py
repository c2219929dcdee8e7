"""Long-maturity behaviour of yields: long-term volatility and drift, and the long-term yield.

For a separable volatility ``Sigma(t, T) = -sigma0 G(T - t)`` the limits

    sigma_inf(t) = lim Sigma(t, T) / (T - t),
    mu_inf(t)    = lim Sigma X_t Sigma / (T - t)  = kappa * sigma0 X_t sigma0,
    kappa        = lim G(tau)^2 / tau,

govern the long-term yield ``ell_t = ell_0 + 2 int_0^t Tr[Q mu_inf(s) Q^T] ds``,
which is non-decreasing in ``t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import symcone
from .hjm import InitialCurve, VolatilitySpec, big_sigma, yield_compact
from .measure import MeasureChange
from .params import AdmissibleParams
from .pathsim import SamplePath

DEFAULT_LADDER = (25.0, 50.0, 100.0, 200.0, 400.0)
CLASS_BOUNDS = (-0.75, -0.25)
CLASS_BAND = 0.1

Classification = Literal["infinite", "constant", "non_decreasing"]


class LongTermYieldError(ArithmeticError):
    """The long-term yield is infinite for this volatility."""


# ---------------------------------------------------------------------------
# Extrapolation


@dataclass(frozen=True)
class Extrapolation:
    """Fit of ``value(tau) ~ a + c / sqrt(tau)`` (optionally ``+ e / tau``); ``limit`` is ``a``."""

    limit: np.ndarray
    slope: np.ndarray
    residual: float
    taus: np.ndarray
    values: np.ndarray


def extrapolate_inverse_sqrt(taus, values, n_last: int = 3, with_linear: bool = False) -> Extrapolation:
    """Least-squares fit of ``a + c / sqrt(tau)`` to the last ``n_last`` points, entrywise.

    With ``with_linear`` the model gains a ``e / tau`` term, which removes
    the intercept bias when the correction is partly (or wholly) of order
    ``1 / tau``.  ``values`` has the ladder on its first axis.  ``residual``
    is the largest absolute misfit at the fitted points.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    n_par = 3 if with_linear else 2
    if taus.ndim != 1 or len(taus) < n_par:
        raise ValueError(f"need at least {n_par} ladder points")
    if np.any(np.diff(taus) <= 0) or taus[0] <= 0:
        raise ValueError("ladder must be positive and strictly increasing")
    if values.shape[0] != len(taus):
        raise ValueError("values must have the ladder on the first axis")
    n_last = max(n_last, n_par)
    tt = taus[-n_last:]
    vv = values[-n_last:].reshape(len(tt), -1)
    cols = [np.ones_like(tt), 1.0 / np.sqrt(tt)] + ([1.0 / tt] if with_linear else [])
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, vv, rcond=None)
    resid = float(np.max(np.abs(design @ coef - vv))) if vv.size else 0.0
    shape = values.shape[1:]
    return Extrapolation(coef[0].reshape(shape), coef[1].reshape(shape), resid, taus, values)


def _check_ladder(T_ladder, t: float) -> np.ndarray:
    T = np.asarray(T_ladder, dtype=float)
    if T.ndim != 1 or len(T) < 3:
        raise ValueError("maturity ladder needs at least three points")
    if np.any(np.diff(T) <= 0):
        raise ValueError("maturity ladder must be strictly increasing")
    if T[0] <= t:
        raise ValueError("ladder maturities must exceed t")
    if T[-1] < 100.0 * (1.0 + t):
        raise ValueError(f"longest maturity must be at least 100 (1 + t) = {100 * (1 + t)}")
    return T


# ---------------------------------------------------------------------------
# Long-term drift and volatility


def mu_inf_closed(vol: VolatilitySpec, x, t: float = 0.0) -> np.ndarray:
    """Closed-form ``mu_inf``: zero for exponential decay, ``4 sigma0 x sigma0`` for inverse square root."""
    x = symcone.require_psd(x, "x")
    if vol.kind == "exponential_decay":
        return np.zeros_like(x)
    if vol.kind == "inverse_sqrt":
        return 4.0 * vol.sigma0 @ x @ vol.sigma0
    raise NotImplementedError("no closed form for tabulated volatility; use mu_inf_numeric")


def mu_inf_numeric(vol: VolatilitySpec, x, t: float, T_ladder=DEFAULT_LADDER) -> Extrapolation:
    """Extrapolate ``Gamma(t, T) / (T - t)`` along the ladder, ``Gamma = Sigma x Sigma``."""
    x = symcone.require_psd(x, "x")
    T = _check_ladder(T_ladder, t)
    S = big_sigma(vol, np.full_like(T, t), T)
    vals = (S @ x @ S) / (T - t)[:, None, None]
    return extrapolate_inverse_sqrt(T - t, vals)


def sigma_inf_numeric(vol: VolatilitySpec, t: float, T_ladder=DEFAULT_LADDER) -> Extrapolation:
    """Extrapolate ``Sigma(t, T) / (T - t)`` along the ladder."""
    T = _check_ladder(T_ladder, t)
    vals = big_sigma(vol, np.full_like(T, t), T) / (T - t)[:, None, None]
    return extrapolate_inverse_sqrt(T - t, vals)


def kappa(vol: VolatilitySpec) -> float:
    """Scalar ``lim G(tau)^2 / tau`` with ``mu_inf = kappa sigma0 X sigma0``.

    Raises :class:`LongTermYieldError` when the volatility decays too slowly
    for a finite long-term yield.
    """
    if vol.kind == "exponential_decay":
        return 0.0
    if vol.kind == "inverse_sqrt":
        return 4.0
    cls = classify_decay(vol)
    if cls.classification == "infinite":
        raise LongTermYieldError("volatility does not decay: the long-term yield is infinite")
    if cls.classification == "constant":
        return 0.0
    taus = np.asarray(DEFAULT_LADDER)
    ex = extrapolate_inverse_sqrt(taus, vol.G(taus) ** 2 / taus)
    k = float(ex.limit)
    if not np.isfinite(k):
        raise LongTermYieldError("non-finite long-term drift")
    return max(k, 0.0)


# ---------------------------------------------------------------------------
# Long-term yield


def ell_trajectory(
    params: AdmissibleParams,
    vol: VolatilitySpec,
    path: SamplePath,
    ell0: float,
    measure: MeasureChange | None = None,
) -> np.ndarray:
    """``ell`` at every path node by left-point quadrature of ``2 Tr[Q mu_inf Q^T]``.

    The integrand is evaluated as ``kappa * ||sqrt(X) sigma0 Q^T||_F^2`` so
    each increment is a sum of squares and the output is non-decreasing.
    ``measure`` is accepted for symmetry with the pricing routines and has
    no effect: the long-term yield does not depend on the pricing measure.
    """
    del measure
    if vol.dim != params.dim:
        raise symcone.DimensionError("vol and params dimensions differ")
    k = kappa(vol)
    h = np.diff(path.t_grid)
    if k == 0.0:
        return np.full(len(path.t_grid), float(ell0))
    A = path.sqrt_at()[:-1] @ vol.sigma0 @ params.Q.T
    integrand = 2.0 * k * np.einsum("kij,kij->k", A, A)
    if not np.all(np.isfinite(integrand)):
        raise LongTermYieldError("non-finite long-term drift along the path")
    return float(ell0) + np.concatenate([[0.0], np.cumsum(integrand * h)])


@dataclass(frozen=True)
class AsymptoticProfile:
    t_grid: np.ndarray
    sigma_inf: np.ndarray
    mu_inf: np.ndarray
    ell: np.ndarray
    classification: str


def asymptotic_profile(params, vol, path: SamplePath, ell0: float) -> AsymptoticProfile:
    """``sigma_inf``, ``mu_inf`` and ``ell`` at every node of ``path``."""
    cls = classify_decay(vol).classification
    k = kappa(vol)
    d = params.dim
    n = len(path.t_grid)
    # Sigma grows at most like sqrt(tau) for every finite-yield kind.
    sigma_inf = np.zeros((n, d, d))
    mu_inf = k * np.einsum("ij,kjl,lm->kim", vol.sigma0, path.states, vol.sigma0)
    return AsymptoticProfile(path.t_grid, sigma_inf, mu_inf, ell_trajectory(params, vol, path, ell0), cls)


# ---------------------------------------------------------------------------
# Decay classification


@dataclass(frozen=True)
class DecayClassification:
    classification: Classification
    slope: float | None
    warning: str | None = None


def _class_of_slope(rho: float) -> Classification:
    if rho > CLASS_BOUNDS[1]:
        return "infinite"
    if rho > CLASS_BOUNDS[0]:
        return "non_decreasing"
    return "constant"


def classify_decay(vol: VolatilitySpec, probe_t: float = 0.0, T_ladder=None) -> DecayClassification:
    """Classify the long-term yield from the log-log decay slope of ``||sigma(probe_t, T)||``.

    Slope near 0 or above means an infinite long-term yield, near -1/2 a
    non-decreasing one and near -1 or below a constant one.  Boundaries sit
    at -0.75 and -0.25; slopes within 0.1 of a boundary carry a warning.
    Exponential decay and the inverse square root short-circuit to their
    known classes.  Zero volatility on the ladder counts as constant.
    """
    if T_ladder is None:
        T_ladder = probe_t + np.geomspace(1.0, 1000.0, 13)
    T = np.asarray(T_ladder, dtype=float)
    tau = T - probe_t
    if np.any(tau <= 0) or np.any(np.diff(T) <= 0):
        raise ValueError("ladder must be strictly increasing and beyond probe_t")
    if tau[-1] / tau[0] < 100.0 * (1 - 1e-12):
        raise ValueError("ladder must span at least two decades in T - probe_t")
    norms = np.linalg.norm(vol.sigma(probe_t, T), axis=(-2, -1))
    slope = None
    if np.all(norms > 0):
        slope = float(np.polyfit(np.log(tau), np.log(norms), 1)[0])
    if vol.kind == "exponential_decay":
        return DecayClassification("constant", slope)
    if vol.kind == "inverse_sqrt":
        return DecayClassification("non_decreasing", slope)
    if slope is None:
        return DecayClassification("constant", None)
    warn = None
    for b in CLASS_BOUNDS:
        if abs(slope - b) < CLASS_BAND:
            warn = f"decay slope {slope:.3f} lies within {CLASS_BAND} of the class boundary {b}"
            warnings.warn(warn, RuntimeWarning, stacklevel=2)
    return DecayClassification(_class_of_slope(slope), slope, warn)


# ---------------------------------------------------------------------------
# Growth bound on the bond volatility


@dataclass(frozen=True)
class VolBoundCheck:
    """Empirical ``sup_t |Sigma(s, t)_ij| / sqrt(t)`` per ``s`` and the closed-form bound ``w``."""

    s_grid: np.ndarray
    empirical: np.ndarray
    closed_w: np.ndarray | None
    dominated: bool | None


def closed_vol_bound(vol: VolatilitySpec) -> np.ndarray | None:
    if vol.kind == "exponential_decay":
        return (2.0 / vol.beta) * np.abs(vol.sigma0)
    if vol.kind == "inverse_sqrt":
        return 2.0 * np.abs(vol.sigma0)
    return None


def verify_vol_bound(vol: VolatilitySpec, s_grid, t_grid, rtol: float = 1e-12) -> VolBoundCheck:
    """Check ``|Sigma(s, t)_ij| / sqrt(t) <= w_ij`` over ``t`` in ``t_grid`` with ``t >= s``, ``t > 0``.

    The exponential-decay bound ``(2 / beta)|sigma_ij|`` holds for moderate
    ``beta``; it can fail at short horizons when ``beta`` is large, which
    this check reports rather than hides.
    """
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    d = vol.dim
    emp = np.zeros((len(s), d, d))
    for i, si in enumerate(s):
        tt = t[(t >= si) & (t > 0)]
        if tt.size:
            S = np.abs(big_sigma(vol, np.full_like(tt, si), tt)) / np.sqrt(tt)[:, None, None]
            emp[i] = S.max(axis=0)
    w = closed_vol_bound(vol)
    dominated = None if w is None else bool(np.all(emp <= w * (1 + rtol) + 1e-15))
    return VolBoundCheck(s, emp, w, dominated)


# ---------------------------------------------------------------------------
# Finite-maturity yields


def yield_ladder(
    params: AdmissibleParams,
    vol: VolatilitySpec,
    mc: MeasureChange,
    path: SamplePath,
    t: float,
    curve: InitialCurve,
    T_ladder=DEFAULT_LADDER,
) -> np.ndarray:
    """``Y(t, T)`` for each ladder maturity, from the compact yield formula."""
    return np.array([yield_compact(params, vol, mc, path, t, float(T), curve).total for T in T_ladder])


def extrapolate_long_yield(t: float, T_ladder, yields, with_linear: bool = True) -> Extrapolation:
    """Long-term yield estimate from ``Y(t, T) ~ a + c / sqrt(T - t) [+ e / (T - t)]``.

    The default includes the ``1 / (T - t)`` term and fits the last four
    ladder points: yield corrections contain an exact ``1 / (T - t)`` piece
    that the two-term model would fold into the intercept.
    """
    return extrapolate_inverse_sqrt(
        np.asarray(T_ladder, dtype=float) - t, np.asarray(yields, dtype=float), n_last=4 if with_linear else 3, with_linear=with_linear
    )
