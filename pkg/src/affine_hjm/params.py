"""Admissible parameter sets for conservative affine processes on the PSD cone.

A parameter set bundles

* ``alpha``: diffusion coefficient, with a factor ``Q`` such that ``Q^T Q = alpha``;
* ``b``: constant drift;
* the linear drift ``B(z) = M z + z M^T + G(z)``, where
  ``G(z) = sum_k Tr[L_k z] P_k`` with PSD ``P_k, L_k``;
* finite-activity jumps along rank-one rays ``xi = gamma v v^T`` with
  ``gamma ~ Exp(theta)``.  Each ray has a constant intensity (the constant
  jump measure) and a state weight ``L_state`` (the linear jump coefficient),
  so the jump intensity at state ``x`` is ``lambda_const + Tr[x L_state]``.

The exponential jump-size law makes every jump integral that appears in the
Riccati system and the HJM drift available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import symcone
from .symcone import DimensionError, EPS_PSD

N_PAIRS_DEFAULT = 2000
VALIDATION_SEED = 20240229
Q_TOL = 1e-10


class InvalidParamsError(ValueError):
    """Raised when a computation is handed a parameter set that fails validation."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        super().__init__(f"inadmissible parameter set (failed: {failed})")


@dataclass(frozen=True)
class GTerm:
    """One term ``Tr[L z] P`` of the cone-preserving linear map ``G``."""

    P: np.ndarray
    L: np.ndarray


@dataclass(frozen=True)
class LinearDriftMap:
    """``B(z) = M z + z M^T + sum_k Tr[L_k z] P_k``."""

    M: np.ndarray
    g_terms: tuple[GTerm, ...] = ()

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def __call__(self, z):
        return eval_B(self, z)


@dataclass(frozen=True)
class JumpRay:
    """Jumps ``gamma v v^T`` with ``gamma ~ Exp(theta)`` (mean ``1/theta``)."""

    v: np.ndarray
    theta: float
    lambda_const: float
    L_state: np.ndarray

    def intensity(self, x):
        """Jump intensity ``lambda_const + Tr[x L_state]`` at state(s) ``x``."""
        return self.lambda_const + np.einsum("...ij,ij->...", x, self.L_state)


@dataclass(frozen=True)
class AdmissibleParams:
    alpha: np.ndarray
    b: np.ndarray
    drift: LinearDriftMap
    jumps: tuple[JumpRay, ...] = ()
    Q: np.ndarray | None = None

    def __post_init__(self):
        if self.Q is None:
            object.__setattr__(self, "Q", symcone.sqrt_psd(self.alpha))

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def build(cls, alpha, b, M=None, g_terms=(), jumps=(), Q=None) -> "AdmissibleParams":
        """Convenience constructor from array-likes.

        Symmetric inputs are rebuilt from their upper triangle; ``M`` and ``Q``
        are taken as given.
        """
        alpha = symcone.sym(alpha)
        d = alpha.shape[0]
        b = symcone.sym(b)
        M = np.zeros((d, d)) if M is None else np.asarray(M, dtype=float)
        terms = tuple(
            t if isinstance(t, GTerm) else GTerm(symcone.sym(t[0]), symcone.sym(t[1]))
            for t in g_terms
        )
        rays = tuple(
            r if isinstance(r, JumpRay) else make_ray(**r) for r in jumps
        )
        Q = None if Q is None else np.asarray(Q, dtype=float)
        return cls(alpha, b, LinearDriftMap(M, terms), rays, Q)

    @classmethod
    def wishart(cls, d: int, delta: float, M=None, Q=None) -> "AdmissibleParams":
        """Wishart parameters: ``b = delta * Q^T Q``, ``B(z) = M z + z M^T``, no jumps."""
        Q = np.eye(d) if Q is None else np.asarray(Q, dtype=float)
        alpha = symcone.symmetrize(Q.T @ Q)
        return cls.build(alpha, delta * alpha, M=M, Q=Q)


def make_ray(v, theta: float, lambda_const: float = 0.0, L_state=None) -> JumpRay:
    v = np.asarray(v, dtype=float)
    d = v.shape[0]
    L = np.zeros((d, d)) if L_state is None else symcone.sym(L_state)
    return JumpRay(v, float(theta), float(lambda_const), L)


# ---------------------------------------------------------------------------
# Linear drift and its adjoint


def _check_dim(drift: LinearDriftMap, z: np.ndarray) -> None:
    if z.ndim < 2 or z.shape[-2:] != drift.M.shape:
        raise DimensionError(f"expected (..., {drift.dim}, {drift.dim}) input, got {z.shape}")


def eval_B(drift: LinearDriftMap, z) -> np.ndarray:
    """Evaluate ``B(z) = M z + z M^T + G(z)`` (batched over leading axes)."""
    z = np.asarray(z, dtype=float)
    _check_dim(drift, z)
    mz = drift.M @ z
    out = mz + np.swapaxes(mz, -1, -2)
    for term in drift.g_terms:
        out = out + np.einsum("...ij,ij->...", z, term.L)[..., None, None] * term.P
    return out


def eval_B_adjoint(drift: LinearDriftMap, u) -> np.ndarray:
    """Adjoint ``B^T(u) = M^T u + u M + sum_k Tr[P_k u] L_k``.

    Characterised by ``Tr[B^T(u) y] = Tr[B(y) u]`` for all symmetric ``y``.
    """
    u = np.asarray(u, dtype=float)
    _check_dim(drift, u)
    um = u @ drift.M
    out = um + np.swapaxes(um, -1, -2)
    for term in drift.g_terms:
        out = out + np.einsum("...ij,ij->...", u, term.P)[..., None, None] * term.L
    return out


# ---------------------------------------------------------------------------
# Jump integrals


def jump_exp_integral(
    jumps: Sequence[JumpRay],
    u,
    which: Literal["constant", "linear"],
    check: bool = True,
):
    """Closed-form ``int (exp(-Tr[u xi]) - 1)`` against the jump measures.

    ``which="constant"`` integrates against the constant measure and returns
    a scalar per ``u``:  ``sum_rays -lambda_const * q / (theta + q)`` with
    ``q = v^T u v``.  ``which="linear"`` integrates against the linear jump
    coefficient and returns the matrix ``sum_rays -(q / (theta + q)) L_state``,
    whose trace pairing with a state ``x`` is the state-dependent integral.

    ``u`` must be PSD; otherwise ``q`` can fall below ``-theta`` and the
    integral diverges.
    """
    u = np.asarray(u, dtype=float)
    if check:
        symcone.require_psd(u, "u")
    batch = u.shape[:-2]
    d = u.shape[-1]
    if which == "constant":
        out = np.zeros(batch)
    elif which == "linear":
        out = np.zeros(batch + (d, d))
    else:
        raise ValueError(f"which must be 'constant' or 'linear', got {which!r}")
    for ray in jumps:
        q = np.einsum("i,...ij,j->...", ray.v, u, ray.v)
        frac = q / (ray.theta + q)
        if which == "constant":
            out = out - ray.lambda_const * frac
        else:
            out = out - frac[..., None, None] * ray.L_state
    if which == "constant" and out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Validation


@dataclass
class Check:
    name: str
    passed: bool
    witness: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "witness": c.witness, "detail": c.detail}
                for c in self.checks
            ],
        }


def _min_eig_check(name: str, a: np.ndarray, detail: str) -> Check:
    lo = float(symcone.min_eig(a))
    return Check(name, lo >= -EPS_PSD, lo, detail)


def _sample_orthogonal_pairs(rng: np.random.Generator, d: int, n: int):
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    w = rng.standard_normal((n, d))
    w -= np.einsum("ni,ni->n", w, v)[:, None] * v
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return v, w


def validate(params: AdmissibleParams, n_pairs: int = N_PAIRS_DEFAULT, seed: int = VALIDATION_SEED) -> ValidationReport:
    """Check every admissibility condition and report witnesses.

    Never raises on inadmissible input.  The drift cone condition
    ``Tr[B(x) u] >= 0`` whenever ``Tr[x u] = 0`` is probed on ``n_pairs``
    rank-one pairs ``x = v v^T``, ``u = w w^T`` with ``v`` orthogonal to
    ``w``; this is a sampling check, not a proof.
    """
    report = ValidationReport()
    add = report.checks.append
    d = params.dim

    add(Check("dimension", d >= 2, float(d), "d >= 2"))
    shapes_ok = (
        params.alpha.shape == (d, d)
        and params.b.shape == (d, d)
        and params.drift.M.shape == (d, d)
        and params.Q.shape == (d, d)
    )
    add(Check("shapes", shapes_ok, float(d), "alpha, b, M, Q are d x d"))
    if not shapes_ok:
        return report

    asym = max(
        float(np.max(np.abs(params.alpha - params.alpha.T))),
        float(np.max(np.abs(params.b - params.b.T))),
    )
    add(Check("symmetry", asym <= symcone.SYMMETRY_ATOL, asym, "alpha and b symmetric"))
    add(_min_eig_check("alpha_psd", params.alpha, "min eigenvalue of alpha"))
    add(_min_eig_check("b_psd", params.b, "min eigenvalue of b"))
    add(_min_eig_check("drift_bound", params.b - (d - 1) * params.alpha, "min eigenvalue of b - (d-1) alpha"))
    q_err = float(np.linalg.norm(params.Q.T @ params.Q - params.alpha))
    add(Check("Q_factor", q_err <= Q_TOL, q_err, "||Q^T Q - alpha||_F"))

    g_lo = min((float(min(symcone.min_eig(t.P), symcone.min_eig(t.L))) for t in params.drift.g_terms), default=0.0)
    add(Check("G_terms_psd", g_lo >= -EPS_PSD, g_lo, "min eigenvalue over all P_k, L_k"))

    ray_ok = True
    worst = 0.0
    notes = []
    for i, ray in enumerate(params.jumps):
        norm_err = abs(float(np.linalg.norm(ray.v)) - 1.0)
        worst = max(worst, norm_err)
        lo = float(symcone.min_eig(ray.L_state)) if ray.L_state.shape == (d, d) else -np.inf
        ok = (
            ray.v.shape == (d,)
            and norm_err <= 1e-12
            and ray.theta > 0
            and ray.lambda_const >= 0
            and lo >= -EPS_PSD
        )
        if not ok:
            notes.append(f"ray {i}")
        ray_ok &= ok
    add(Check("jump_rays", ray_ok, worst, "unit v, theta > 0, lambda >= 0, L_state PSD" + (f"; bad: {notes}" if notes else "")))

    rng = np.random.default_rng(seed)
    v, w = _sample_orthogonal_pairs(rng, d, n_pairs)
    x = np.einsum("ni,nj->nij", v, v)
    bx = eval_B(params.drift, x)
    vals = np.einsum("ni,nij,nj->n", w, bx, w)
    lo = float(vals.min())
    add(Check("drift_cone", lo >= -EPS_PSD, lo, f"min Tr[B(vv^T) ww^T] over {n_pairs} orthogonal pairs"))
    return report


def require_valid(params: AdmissibleParams) -> ValidationReport:
    report = validate(params)
    if not report.passed:
        raise InvalidParamsError(report)
    return report
