"""Monte Carlo simulation of conservative affine processes on the PSD cone.

The process solves

    dX = (b + B(X)) dt + sqrt(X) dW Q + Q^T dW^T sqrt(X) + dJ,

where ``J`` is a compound Poisson process along rank-one rays whose intensity
on ray ``r`` is ``lambda_const + Tr[X L_state]``.

Two schemes are available:

``euler_project``
    Full-truncation Euler.  The square root is taken of the (projected)
    state, and every step ends with a projection onto the cone.  One
    eigen-decomposition per step yields both the projection and the square
    root used in the next step.  Jump intensities are frozen at the left
    endpoint of each step.
``wishart_exact``
    For jump-free Wishart parameters ``b = delta * alpha`` with integer
    ``delta >= d`` and ``G = 0``: ``X = Y^T Y`` where the rows of the
    ``delta x d`` matrix ``Y`` are independent Ornstein-Uhlenbeck processes
    ``dy = y M^T dt + dw Q``, sampled from their exact Gaussian transitions.

Paths are processed in chunks, and each path draws from its own
counter-based streams (see :mod:`affine_hjm.rng`).  Output therefore does not
depend on the chunk size or the number of threads.

Large ensembles are never stored in full.  Only the states at the
``record`` nodes are kept, plus jump statistics.  Per-path functionals of the
whole trajectory are computed on the fly by :class:`Observer` objects.
Full :class:`SamplePath` records are available for small runs through
``keep_paths=True``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import expm

from . import rng as streams
from . import symcone
from .measure import IDENTITY, MeasureChange
from .params import AdmissibleParams, eval_B, require_valid

Scheme = Literal["euler_project", "wishart_exact"]
SCHEMES = ("euler_project", "wishart_exact")

DEFAULT_CHUNK = 4096
KEEP_PATHS_LIMIT = 5_000_000  # path-steps
_BLOCK_FLOATS = 2**22
_POISSON_MEAN_LIMIT = 500.0


class UnsupportedSpecError(ValueError):
    """The requested scheme cannot simulate the given parameters."""


def uniform_grid(t_end: float, dt: float) -> np.ndarray:
    """Uniform grid ``0, dt, ..., t_end``; ``t_end / dt`` must be an integer."""
    n = round(t_end / dt)
    if n < 0 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    return np.linspace(0.0, t_end, n + 1)


def grid_index(t_grid: np.ndarray, t: float) -> int:
    """Index of the grid node equal to ``t`` (to relative precision 1e-9)."""
    k = int(np.argmin(np.abs(t_grid - t)))
    if abs(t_grid[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not a grid node")
    return k


# ---------------------------------------------------------------------------
# Records


@dataclass
class SamplePath:
    """One fully stored trajectory.

    ``states[k]`` is ``X`` at ``t_grid[k]``.  Step ``k`` (from ``t_grid[k]``
    to ``t_grid[k+1]``) has Brownian increment ``dW[k]``, diffusion
    increment ``D[k]`` (so the martingale part of the step is
    ``D[k] + D[k]^T``) and jump increment ``J[k]``.  ``jump_log`` lists
    ``(time, ray, xi)`` with the time stamped at the end of the step in
    which the jump occurred.  ``D`` is driven by the Brownian motion of
    ``measure``, the measure the path was simulated under.
    """

    t_grid: np.ndarray
    states: np.ndarray
    dW: np.ndarray
    D: np.ndarray
    J: np.ndarray
    jump_log: list = field(default_factory=list)
    seed: int = 0
    path_index: int = 0
    scheme: str = "euler_project"
    measure: MeasureChange = IDENTITY
    sqrt_states: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.t_grid) - 1

    def sqrt_at(self) -> np.ndarray:
        """Square roots of all states (computed on demand for exact paths)."""
        if self.sqrt_states is None:
            self.sqrt_states = symcone.sqrt_psd(self.states)
        return self.sqrt_states


@dataclass
class PathEnsemble:
    """Reproducible Monte Carlo ensemble.

    ``states`` has shape ``(n_paths, len(record_idx), d, d)`` and holds the
    states at grid nodes ``record_idx``.  ``observed`` maps observer output
    names to per-path arrays.
    """

    params: AdmissibleParams
    x0: np.ndarray
    t_grid: np.ndarray
    n_paths: int
    seed: int
    scheme: str
    measure: MeasureChange
    record_idx: np.ndarray
    states: np.ndarray
    jump_counts: np.ndarray
    jump_size_sum: np.ndarray
    paths: list[SamplePath] | None = None
    observed: dict = field(default_factory=dict)

    def index_of(self, t: float) -> int:
        return grid_index(self.t_grid, t)

    def state_at(self, t: float) -> np.ndarray:
        """States of all paths at a recorded grid time."""
        k = self.index_of(t)
        pos = np.searchsorted(self.record_idx, k)
        if pos >= len(self.record_idx) or self.record_idx[pos] != k:
            raise ValueError(f"t={t} was not recorded; pass it in `record`")
        return self.states[:, pos]


class Observer:
    """Per-path functional accumulated during simulation.

    Subclasses keep all mutable data in the object returned by
    :meth:`begin`, so one observer can serve concurrent chunks.

    ``step`` receives the state ``x`` at ``t`` (start of the step), its
    square root ``sq`` (``None`` for the exact scheme), the diffusion
    increment ``D`` and the jump increment ``J``, all shaped ``(m, d, d)``,
    plus the left-endpoint jump intensities ``lam`` shaped ``(m, n_rays)``
    (already scaled by the measure's ``K``).  ``end`` returns a dict of
    arrays whose first axis is the path axis.
    """

    def begin(self, m: int, x0: np.ndarray):
        raise NotImplementedError

    def step(self, state, k: int, t: float, h: float, x, sq, D, J, lam) -> None:
        raise NotImplementedError

    def end(self, state, x_final) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Single Euler step (public, for direct use and tests)


def step_euler(
    params: AdmissibleParams,
    x,
    dW,
    dt: float,
    rng: np.random.Generator | None = None,
    measure: MeasureChange = IDENTITY,
) -> np.ndarray:
    """One projected Euler step from ``x`` (batched over leading axes).

    ``dW`` holds the ``d x d`` Brownian increments (variance ``dt`` each).
    Jumps are drawn from ``rng`` with intensity frozen at ``x``; ``rng`` is
    required only when the parameters have jump rays.
    """
    x = symcone.project_psd(np.asarray(x, dtype=float))
    sq = symcone.sqrt_psd(x)
    dW = np.asarray(dW, dtype=float)
    D = sq @ dW @ params.Q
    drift = params.b + eval_B(params.drift, x)
    gamma = measure.gamma_matrix(params.dim)
    if np.any(gamma):
        g = sq @ gamma @ params.Q
        drift = drift + g + np.swapaxes(g, -1, -2)
    xn = x + drift * dt + D + np.swapaxes(D, -1, -2)
    if params.jumps:
        if rng is None:
            raise ValueError("an rng is required to sample jumps")
        k = measure.k_factors(len(params.jumps))
        for r, ray in enumerate(params.jumps):
            lam = k[r] * ray.intensity(x)
            n = rng.poisson(lam * dt)
            total = rng.gamma(np.maximum(n, 0), 1.0 / ray.theta) * (n > 0)
            xn = xn + np.asarray(total)[..., None, None] * np.outer(ray.v, ray.v)
    return symcone.project_psd(xn)


# ---------------------------------------------------------------------------
# Chunk machinery


def _poisson_inverse(u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Poisson quantiles by sequential search of the CDF."""
    if np.any(mu > _POISSON_MEAN_LIMIT):
        raise ArithmeticError(
            f"jump mean per step {mu.max():.3g} too large for the frozen-intensity scheme; refine the grid"
        )
    n = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-mu)
    cdf = p.copy()
    active = u > cdf
    k = 0
    kmax = int(mu.max() + 40.0 * math.sqrt(mu.max() + 1.0) + 100) if mu.size else 0
    while active.any() and k < kmax:
        k += 1
        n += active
        p = p * mu / k
        cdf = cdf + p
        active &= u > cdf
    return n


class _SizeStream:
    """Per-path exponential jump sizes for one ray, consumed strictly in order."""

    def __init__(self, gens, theta: float, cap: int = 16):
        self.gens = gens
        self.scale = 1.0 / theta
        self.buf = np.empty((len(gens), 0))
        self.ptr = np.zeros(len(gens), dtype=np.int64)
        self._grow(cap)

    def _grow(self, new_cap: int):
        old = self.buf.shape[1]
        extra = np.empty((len(self.gens), new_cap - old))
        for i, g in enumerate(self.gens):
            extra[i] = g.standard_exponential(new_cap - old)
        self.buf = np.concatenate([self.buf, extra * self.scale], axis=1)

    def take(self, counts: np.ndarray, keep: bool = False):
        end = self.ptr + counts
        need = int(end.max()) if counts.size else 0
        if need > self.buf.shape[1]:
            self._grow(max(need, 2 * self.buf.shape[1]))
        rows = np.arange(len(counts))
        total = np.zeros(len(counts))
        for j in range(int(counts.max()) if counts.size else 0):
            has = counts > j
            total[has] += self.buf[rows[has], self.ptr[has] + j]
        sizes = None
        if keep:
            sizes = [self.buf[i, self.ptr[i] : end[i]].copy() for i in np.nonzero(counts)[0]]
        self.ptr = end
        return total, sizes


def _wishart_transition(M: np.ndarray, alpha: np.ndarray, h: float):
    """``exp(M^T h)`` and a factor ``L`` with ``L L^T = int_0^h e^{Ms} alpha e^{M^T s} ds``."""
    d = M.shape[0]
    # Van Loan: the top-right block of expm([[-M, alpha], [0, M^T]] h) is e^{-Mh} C(h).
    big = np.zeros((2 * d, 2 * d))
    big[:d, :d] = -M
    big[:d, d:] = alpha
    big[d:, d:] = M.T
    e = expm(big * h)
    emh = expm(M * h)
    cov = symcone.symmetrize(emh @ e[:d, d:])
    return expm(M.T * h), symcone.sqrt_psd(symcone.project_psd(cov)), cov


def _wishart_delta(params: AdmissibleParams) -> int:
    if params.jumps or params.drift.g_terms:
        raise UnsupportedSpecError("wishart_exact needs G = 0 and no jumps")
    a = params.alpha
    if not np.any(a):
        if np.any(params.b):
            raise UnsupportedSpecError("wishart_exact needs b = delta * alpha")
        return params.dim
    i = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    delta = params.b[i] / a[i]
    if not np.allclose(params.b, delta * a, atol=1e-12, rtol=1e-12):
        raise UnsupportedSpecError("wishart_exact needs b = delta * alpha")
    k = round(delta)
    if abs(delta - k) > 1e-9 or k < params.dim:
        raise UnsupportedSpecError(f"wishart_exact needs integer delta >= d, got delta={delta}")
    return int(k)


def _draw_block(gens, shape_tail, blk, kind="normal"):
    out = np.empty((len(gens), blk) + shape_tail)
    for i, g in enumerate(gens):
        if kind == "normal":
            out[i] = g.standard_normal((blk,) + shape_tail)
        else:
            out[i] = g.random((blk,) + shape_tail)
    return out


def _run_chunk(cfg: dict, paths: np.ndarray) -> dict:
    params: AdmissibleParams = cfg["params"]
    measure: MeasureChange = cfg["measure"]
    t_grid = cfg["t_grid"]
    seed = cfg["seed"]
    scheme = cfg["scheme"]
    keep = cfg["keep_paths"]
    observers: Sequence[Observer] = cfg["observers"]
    record_idx = cfg["record_idx"]
    d = params.dim
    m = len(paths)
    n = len(t_grid) - 1
    rays = params.jumps
    n_rays = len(rays)
    kfac = measure.k_factors(n_rays)
    gamma = measure.gamma_matrix(d)
    use_gamma = bool(np.any(gamma))
    Q = params.Q

    x = np.broadcast_to(cfg["x0"], (m, d, d)).copy()
    exact = scheme == "wishart_exact"
    if exact:
        delta = cfg["delta"]
        y = np.zeros((m, delta, d))
        y[:, :d, :] = cfg["sqrt_x0"]
        noise_tail = (delta, d)
        sq = None
    else:
        sq = np.broadcast_to(cfg["sqrt_x0"], (m, d, d)).copy()
        noise_tail = (d, d)

    normal_gens = streams.generators(seed, paths, streams.BROWNIAN)
    unif_gens = [streams.generators(seed, paths, streams.jump_count_stream(r)) for r in range(n_rays)]
    sizes = [
        _SizeStream(streams.generators(seed, paths, streams.jump_size_stream(r)), ray.theta)
        for r, ray in enumerate(rays)
    ]
    vv = [np.outer(ray.v, ray.v) for ray in rays]

    rec = np.empty((m, len(record_idx), d, d))
    rec_pos = {int(k): i for i, k in enumerate(record_idx)}
    if 0 in rec_pos:
        rec[:, rec_pos[0]] = x
    counts_total = np.zeros((m, n_rays), dtype=np.int64)
    size_total = np.zeros((m, n_rays))
    obs_states = [o.begin(m, x) for o in observers]

    if keep:
        k_states = np.empty((m, n + 1, d, d))
        k_states[:, 0] = x
        k_sqrt = None if exact else np.empty((m, n + 1, d, d))
        if not exact:
            k_sqrt[:, 0] = sq
        k_dw = np.empty((m, n) + noise_tail)
        k_D = np.empty((m, n, d, d))
        k_J = np.zeros((m, n, d, d))
        logs = [[] for _ in range(m)]

    blk = max(1, min(n, _BLOCK_FLOATS // max(1, m * int(np.prod(noise_tail)))))
    trans_cache = {}
    Z = U = None
    for k in range(n):
        j = k % blk
        if j == 0:
            nb = min(blk, n - k)
            Z = _draw_block(normal_gens, noise_tail, nb)
            U = [_draw_block(g, (), nb, "uniform") for g in unif_gens]
        t = t_grid[k]
        h = t_grid[k + 1] - t
        dw = Z[:, j] * math.sqrt(h)

        lam = np.zeros((m, n_rays))
        J = np.zeros((m, d, d))
        for r, ray in enumerate(rays):
            lam[:, r] = kfac[r] * ray.intensity(x)
            cnt = _poisson_inverse(U[r][:, j], lam[:, r] * h)
            tot, indiv = sizes[r].take(cnt, keep)
            counts_total[:, r] += cnt
            size_total[:, r] += tot
            J += tot[:, None, None] * vv[r]
            if keep and indiv is not None:
                for i, s in zip(np.nonzero(cnt)[0], indiv):
                    logs[i].extend((float(t_grid[k + 1]), r, g * vv[r]) for g in s)

        if exact:
            key = round(h, 15)
            if key not in trans_cache:
                trans_cache[key] = _wishart_transition(params.drift.M, params.alpha, h)
            E, L, cov = trans_cache[key]
            innov = dw / math.sqrt(h) @ L.T
            ye = y @ E
            D = np.swapaxes(ye, -1, -2) @ innov
            D += 0.5 * (np.swapaxes(innov, -1, -2) @ innov - delta * cov)
            y = ye + innov
            x_next = np.swapaxes(y, -1, -2) @ y
            sq_next = None
        else:
            D = sq @ dw @ Q
            drift = params.b + eval_B(params.drift, x)
            if use_gamma:
                g = sq @ gamma @ Q
                drift = drift + g + np.swapaxes(g, -1, -2)
            raw = x + drift * h + D + np.swapaxes(D, -1, -2) + J
            w, v = symcone.jacobi_eigh(raw)
            w = np.clip(w, 0.0, None)
            x_next = symcone.reassemble(w, v)
            sq_next = symcone.reassemble(np.sqrt(w), v)

        for o, st in zip(observers, obs_states):
            o.step(st, k, t, h, x, sq, D, J, lam)
        if keep:
            k_dw[:, k] = dw
            k_D[:, k] = D
            k_J[:, k] = J
            k_states[:, k + 1] = x_next
            if not exact:
                k_sqrt[:, k + 1] = sq_next
        x, sq = x_next, sq_next
        if k + 1 in rec_pos:
            rec[:, rec_pos[k + 1]] = x

    out = {
        "states": rec,
        "jump_counts": counts_total,
        "jump_size_sum": size_total,
        "observed": [o.end(st, x) for o, st in zip(observers, obs_states)],
    }
    if keep:
        out["paths"] = [
            SamplePath(
                t_grid=t_grid,
                states=k_states[i],
                dW=k_dw[i],
                D=k_D[i],
                J=k_J[i],
                jump_log=logs[i],
                seed=seed,
                path_index=int(p),
                scheme=scheme,
                measure=measure,
                sqrt_states=None if exact else k_sqrt[i],
            )
            for i, p in enumerate(paths)
        ]
    return out


def _check_grid(t_grid) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    return t_grid


def simulate(
    params: AdmissibleParams,
    x0,
    t_grid,
    n_paths: int,
    seed: int,
    scheme: Scheme = "euler_project",
    *,
    measure: MeasureChange = IDENTITY,
    record=None,
    keep_paths: bool = False,
    observers: Sequence[Observer] = (),
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> PathEnsemble:
    """Simulate ``n_paths`` independent paths on ``t_grid``.

    Parameters
    ----------
    params : AdmissibleParams
        Validated before any work; an inadmissible set raises
        :class:`~affine_hjm.params.InvalidParamsError`.
    x0 : array_like
        PSD initial state.
    t_grid : array_like
        Strictly increasing times; ``x0`` sits at ``t_grid[0]``.
    seed : int
        Root of all random streams.
    scheme : {"euler_project", "wishart_exact"}
    measure : MeasureChange
        Simulate under the measure with Brownian drift ``gamma`` and jump
        multipliers ``K``.  The default is the physical measure.
    record : sequence of float, optional
        Grid times whose states are stored.  Default: all nodes when
        ``keep_paths`` is set, otherwise the first and last node.
    keep_paths : bool
        Store complete :class:`SamplePath` records.
    observers : sequence of Observer
        Streaming per-path functionals; outputs land in ``observed``.
    chunk_size, threads : int
        Execution layout only; results are identical for every choice.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    require_valid(params)
    x0 = symcone.require_psd(x0, "x0")
    d = params.dim
    if x0.shape != (d, d):
        raise symcone.DimensionError(f"x0 must be {d} x {d}")
    t_grid = _check_grid(t_grid)
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    measure.k_factors(len(params.jumps))
    measure.gamma_matrix(d)
    n = len(t_grid) - 1
    if keep_paths and n_paths * max(n, 1) > KEEP_PATHS_LIMIT:
        raise ValueError(
            f"keep_paths would store {n_paths * n} path-steps (limit {KEEP_PATHS_LIMIT}); "
            "use `record` or observers instead"
        )

    cfg = dict(
        params=params,
        measure=measure,
        t_grid=t_grid,
        seed=int(seed),
        scheme=scheme,
        keep_paths=keep_paths,
        observers=tuple(observers),
        x0=x0,
        sqrt_x0=symcone.sqrt_psd(x0),
    )
    if scheme == "wishart_exact":
        if not measure.is_identity:
            raise UnsupportedSpecError("wishart_exact simulates under the physical measure only")
        cfg["delta"] = _wishart_delta(params)

    if record is None:
        record_idx = np.arange(n + 1) if keep_paths else np.unique([0, n])
    else:
        record_idx = np.unique([grid_index(t_grid, t) for t in np.atleast_1d(record)])
    cfg["record_idx"] = record_idx

    bounds = list(range(0, n_paths, max(1, int(chunk_size)))) + [n_paths]
    chunks = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(lambda c: _run_chunk(cfg, c), chunks))
    else:
        results = [_run_chunk(cfg, c) for c in chunks]

    observed = {}
    for i in range(len(observers)):
        keys = results[0]["observed"][i].keys()
        for key in keys:
            observed[key] = np.concatenate([r["observed"][i][key] for r in results])
    paths = None
    if keep_paths:
        paths = [p for r in results for p in r["paths"]]
    return PathEnsemble(
        params=params,
        x0=x0,
        t_grid=t_grid,
        n_paths=n_paths,
        seed=int(seed),
        scheme=scheme,
        measure=measure,
        record_idx=record_idx,
        states=np.concatenate([r["states"] for r in results]),
        jump_counts=np.concatenate([r["jump_counts"] for r in results]),
        jump_size_sum=np.concatenate([r["jump_size_sum"] for r in results]),
        paths=paths,
        observed=observed,
    )


def simulate_wishart_exact(
    delta: int,
    M,
    Q,
    x0,
    t_grid,
    n_paths: int,
    seed: int,
    **kwargs,
) -> PathEnsemble:
    """Exact Wishart simulation with ``b = delta * Q^T Q`` and ``B(z) = M z + z M^T``."""
    if int(delta) != delta:
        raise UnsupportedSpecError(f"delta must be an integer, got {delta}")
    Q = np.asarray(Q, dtype=float)
    d = Q.shape[0]
    params = AdmissibleParams.wishart(d, float(delta), M=M, Q=Q)
    return simulate(params, x0, t_grid, n_paths, seed, "wishart_exact", **kwargs)
