"""Ensemble statistics and the Monte Carlo estimators built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hjm import InitialCurve, VolatilitySpec, _ray_c, step_scalars
from .measure import MeasureChange, same_measure
from .params import AdmissibleParams
from .pathsim import Observer, PathEnsemble, grid_index


@dataclass(frozen=True)
class EnsembleEstimate:
    """Sample mean with its plain standard error."""

    value: float
    std_error: float
    n: int

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.value - 1.96 * self.std_error, self.value + 1.96 * self.std_error)

    @classmethod
    def from_samples(cls, samples) -> "EnsembleEstimate":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("cannot estimate from an empty ensemble")
        if np.all(x == x[0]):
            return cls(float(x[0]), 0.0, int(x.size))
        # math.fsum keeps the reduction independent of chunk layout.
        mean = math.fsum(x) / x.size
        if x.size > 1:
            var = math.fsum((x - mean) ** 2) / (x.size - 1)
        else:
            var = 0.0
        return cls(mean, math.sqrt(var / x.size), int(x.size))

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {"value": self.value, "std_error": self.std_error, "n": self.n, "ci95": [lo, hi]}


def two_sample_compare(a: EnsembleEstimate, b: EnsembleEstimate) -> float:
    """z-statistic ``(a - b) / sqrt(se_a^2 + se_b^2)``.

    A zero combined standard error gives ``0`` for equal values and a signed
    infinity otherwise.
    """
    if a.n < 1 or b.n < 1:
        raise ValueError("both estimates need at least one sample")
    diff = a.value - b.value
    se = math.hypot(a.std_error, b.std_error)
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se


def estimate_laplace(ensemble: PathEnsemble, u, t: float) -> EnsembleEstimate:
    """Mean and SE of ``exp(-Tr[u X_t])`` across paths."""
    if ensemble.n_paths < 1:
        raise ValueError("empty ensemble")
    u = np.asarray(u, dtype=float)
    x = ensemble.state_at(t)
    return EnsembleEstimate.from_samples(np.exp(-np.einsum("ij,pji->p", u, x)))


# ---------------------------------------------------------------------------
# Discounted bonds


def bond_key(t: float, T: float) -> str:
    return f"discounted_bond({t!r},{T!r})"


class BondLoadings:
    """Deterministic weights turning per-step scalars into ``log(P(t,T) / beta_t)``.

    With the separable volatility every step ``k`` before ``t`` contributes

        -(A1[k] * noise_k + A2[k] * quad_k - sum_r A3[k, r] * comp_{k,r})

    where the weights collect the exact maturity integral over ``[t, T]``
    and the left-point short-rate quadrature on ``[0, t]``.  The constant
    part is ``-(int_t^T f(0,u) du + sum_j h_j f(0, s_j))``.
    """

    def __init__(self, params, vol: VolatilitySpec, curve: InitialCurve, t_grid, t: float, T: float):
        if T < t:
            raise ValueError("discounted bond needs t <= T")
        tg = np.asarray(t_grid, dtype=float)
        self.k_t = k_t = grid_index(tg, t)
        s = tg[:k_t]
        h = np.diff(tg)[:k_t]
        c, theta = _ray_c(params, vol)
        self.const = -(curve.integral(t, T) + float(np.sum(h * curve(s))))

        Ga = vol.G(t - s)
        Gb = vol.G(T - s)
        A1 = Gb - Ga
        A2 = 0.5 * (Gb * Gb - Ga * Ga)
        A3 = np.zeros((k_t, len(c)))
        for r in range(len(c)):
            A3[:, r] = theta[r] * (1.0 / (theta[r] + Ga * c[r]) - 1.0 / (theta[r] + Gb * c[r]))
        # Short rate at node j collects steps k < j with tau = s_j - s_k.
        if k_t > 1:
            lag = s[None, :] - s[:, None]  # [k, j]
            mask = lag > 0
            g = np.where(mask, vol.g(np.where(mask, lag, 1.0)), 0.0) * h[None, :]
            G = vol.G(np.where(mask, lag, 0.0))
            A1 = A1 + g.sum(axis=1)
            A2 = A2 + (g * G).sum(axis=1)
            for r in range(len(c)):
                A3[:, r] += (g * c[r] * theta[r] / (theta[r] + G * c[r]) ** 2).sum(axis=1)
        self.A1, self.A2, self.A3 = A1, A2, A3


class DiscountedBondObserver(Observer):
    """Streams ``P(t, T) / beta_t`` for a set of ``(t, T)`` pairs.

    Bond prices use exact maturity integration of the Euler forward curve;
    the bank account uses the left-point short-rate quadrature on the
    simulation grid.  ``sim_measure`` is the measure the ensemble is
    simulated under.
    """

    def __init__(self, params, vol, mc: MeasureChange, curve, t_grid, pairs, sim_measure: MeasureChange | None = None):
        self.params, self.vol, self.mc = params, vol, mc
        self.sim_measure = mc if sim_measure is None else sim_measure
        self.pairs = [(float(t), float(T)) for t, T in pairs]
        self.loadings = [BondLoadings(params, vol, curve, t_grid, t, T) for t, T in self.pairs]

    def begin(self, m, x0):
        return np.zeros((len(self.pairs), m))

    def step(self, state, k, t, h, x, sq, D, J, lam):
        if not any(k < ld.k_t for ld in self.loadings):
            return
        sc = step_scalars(self.params, self.vol, self.mc, x, sq, D, J, np.full(len(x), h), self.sim_measure)
        for i, ld in enumerate(self.loadings):
            if k < ld.k_t:
                acc = ld.A1[k] * sc.noise + ld.A2[k] * sc.quad
                if sc.comp.shape[-1]:
                    acc = acc - sc.comp @ ld.A3[k]
                state[i] -= acc

    def end(self, state, x_final):
        return {bond_key(t, T): np.exp(ld.const + state[i]) for i, ((t, T), ld) in enumerate(zip(self.pairs, self.loadings))}


def discounted_bond_samples(params, vol, mc, curve, path, t: float, T: float) -> float:
    """``P(t, T) / beta_t`` along one stored path (same quadrature as the observer)."""
    ld = BondLoadings(params, vol, curve, path.t_grid, t, T)
    k = ld.k_t
    h = np.diff(path.t_grid)[:k]
    sq = None if path.sqrt_states is None else path.sqrt_states[:k]
    sc = step_scalars(params, vol, mc, path.states[:k], sq, path.D[:k], path.J[:k], h, path.measure)
    acc = np.sum(ld.A1 * sc.noise + ld.A2 * sc.quad)
    if sc.comp.shape[-1]:
        acc -= np.sum(sc.comp * ld.A3)
    return float(np.exp(ld.const - acc))


def estimate_discounted_bond(
    params: AdmissibleParams,
    vol: VolatilitySpec,
    mc: MeasureChange,
    ensemble: PathEnsemble,
    t: float,
    T: float,
    curve: InitialCurve,
) -> EnsembleEstimate:
    """Mean of ``P(t, T) / beta_t`` across the ensemble.

    The ensemble must be simulated under ``mc`` and either carry a
    :class:`DiscountedBondObserver` output for ``(t, T)`` or stored paths.
    At ``t = 0`` the value is ``P(0, T)`` with zero standard error.
    """
    if ensemble.n_paths < 1:
        raise ValueError("empty ensemble")
    if not same_measure(ensemble.measure, mc, params.dim, len(params.jumps)):
        raise ValueError("the ensemble was simulated under a different measure than `mc`")
    key = bond_key(float(t), float(T))
    if key in ensemble.observed:
        return EnsembleEstimate.from_samples(ensemble.observed[key])
    if ensemble.paths is not None:
        return EnsembleEstimate.from_samples(
            [discounted_bond_samples(params, vol, mc, curve, p, t, T) for p in ensemble.paths]
        )
    if grid_index(ensemble.t_grid, t) == 0:
        ld = BondLoadings(params, vol, curve, ensemble.t_grid, t, T)
        return EnsembleEstimate.from_samples(np.full(ensemble.n_paths, math.exp(ld.const)))
    raise ValueError(f"no discounted-bond output for (t, T) = ({t}, {T}); attach a DiscountedBondObserver")
