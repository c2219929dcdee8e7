"""Linear algebra on symmetric matrices and the positive semidefinite cone.

Matrices are plain ``numpy`` arrays of shape ``(..., d, d)``.  Every routine
here broadcasts over leading batch axes, which is how the path simulator
pushes ``10^5`` states through a single call.

The eigen-decomposition is a cyclic Jacobi iteration.  For the small
dimensions used here (``d`` between 2 and 10) it is unconditionally stable on
symmetric input and vectorises cleanly across a batch.
"""

from __future__ import annotations

import numpy as np

EPS_PSD = 1e-10
EPS_SQRT = 1e-10
SYMMETRY_ATOL = 1e-12

_JACOBI_RTOL = 1e-12
_JACOBI_MAX_SWEEPS = 60


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class ConeError(ValueError):
    """A matrix that must be positive semidefinite is not."""


class ConvergenceError(ArithmeticError):
    """The Jacobi iteration did not reach its stopping tolerance."""


def _check_square(a: np.ndarray) -> None:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected (..., d, d) array, got shape {a.shape}")


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    _check_square(a)
    _check_square(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def sym(a) -> np.ndarray:
    """Build a symmetric matrix from the upper triangle of ``a``.

    The lower triangle of the input is ignored, so the result is exactly
    symmetric regardless of roundoff in the caller.
    """
    a = np.asarray(a, dtype=float)
    _check_square(a)
    upper = np.triu(a)
    return upper + np.swapaxes(np.triu(a, 1), -1, -2)


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average ``a`` with its transpose."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def matrix_from_literal(rows, name: str = "matrix", symmetric: bool = True) -> np.ndarray:
    """Parse a row-major nested list into an array.

    With ``symmetric=True`` the literal must be symmetric to within
    ``SYMMETRY_ATOL``; the returned array is rebuilt from the upper triangle.
    """
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name}: expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite entries")
    if symmetric:
        asym = np.max(np.abs(a - a.T)) if a.size else 0.0
        if asym > SYMMETRY_ATOL:
            raise ValueError(f"{name}: not symmetric (max |a_ij - a_ji| = {asym:.3e})")
        a = sym(a)
    return a


def trace_inner(a, b) -> np.ndarray | float:
    """Trace inner product ``Tr[a b]`` of symmetric matrices (batched)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_dim(a, b)
    # Tr[a^T b] = sum_ij a_ij b_ij; a symmetric makes the transpose moot.
    out = np.einsum("...ij,...ij->...", a, b)
    return float(out) if np.ndim(out) == 0 else out


def jacobi_eigh(a, rtol: float = _JACOBI_RTOL, max_sweeps: int = _JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (..., d, d)
        Symmetric input.  Only symmetric inputs are supported.
    rtol : float
        Sweeps stop once the off-diagonal Frobenius norm of every matrix in
        the batch is below ``rtol * ||a||_F``.
    max_sweeps : int
        Upper bound on full sweeps before :class:`ConvergenceError`.

    Returns
    -------
    w : ndarray, shape (..., d)
        Eigenvalues in ascending order.
    v : ndarray, shape (..., d, d)
        Orthonormal eigenvectors in the columns, ``a = v diag(w) v^T``.
    """
    a = np.array(a, dtype=float, copy=True)
    _check_square(a)
    d = a.shape[-1]
    batch = a.shape[:-2]
    a = a.reshape((-1, d, d))
    a = symmetrize(a)
    if d == 2:
        w, v = _jacobi_2x2(a)
        return w.reshape(batch + (2,)), v.reshape(batch + (2, 2))
    v = np.broadcast_to(np.eye(d), a.shape).copy()
    scale = np.sqrt(np.einsum("bij,bij->b", a, a))
    tol = rtol * scale
    offmask = 1.0 - np.eye(d)

    for _ in range(max_sweeps + 1):
        off = np.sqrt(np.einsum("bij,bij,ij->b", a, a, offmask))
        active = off > tol
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        sub = a[idx]
        vsub = v[idx]
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = sub[:, p, q]
                app = sub[:, p, p]
                aqq = sub[:, q, q]
                nz = apq != 0.0
                with np.errstate(over="ignore", divide="ignore"):
                    theta = np.where(nz, (aqq - app) / (2.0 * np.where(nz, apq, 1.0)), 0.0)
                    # hypot avoids overflow of theta**2; an infinite theta gives t = 0
                    t = np.where(nz, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
                t = np.where(nz & (theta == 0.0), 1.0, t)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # Columns p, q of A and V.
                colp = sub[:, :, p].copy()
                colq = sub[:, :, q].copy()
                sub[:, :, p] = c[:, None] * colp - s[:, None] * colq
                sub[:, :, q] = s[:, None] * colp + c[:, None] * colq
                rowp = sub[:, p, :].copy()
                rowq = sub[:, q, :].copy()
                sub[:, p, :] = c[:, None] * rowp - s[:, None] * rowq
                sub[:, q, :] = s[:, None] * rowp + c[:, None] * rowq
                sub[:, p, q] = 0.0
                sub[:, q, p] = 0.0
                vp = vsub[:, :, p].copy()
                vq = vsub[:, :, q].copy()
                vsub[:, :, p] = c[:, None] * vp - s[:, None] * vq
                vsub[:, :, q] = s[:, None] * vp + c[:, None] * vq
        a[idx] = sub
        v[idx] = vsub
    else:
        raise ConvergenceError(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps "
            f"(worst off-diagonal norm {off.max():.3e}, tolerance {tol.max():.3e})"
        )

    w = np.einsum("bii->bi", a)
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return w.reshape(batch + (d,)), v.reshape(batch + (d, d))


def _jacobi_2x2(a: np.ndarray):
    # One rotation annihilates the single off-diagonal pair exactly.
    app, apq, aqq = a[:, 0, 0], a[:, 0, 1], a[:, 1, 1]
    nz = apq != 0.0
    safe = np.where(nz, apq, 1.0)
    theta = (aqq - app) / (2.0 * safe)
    t = np.where(theta == 0.0, 1.0, np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)))
    t = np.where(nz, t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    lo = app - t * apq
    hi = aqq + t * apq
    swap = lo > hi
    w = np.stack([np.where(swap, hi, lo), np.where(swap, lo, hi)], axis=-1)
    # Rotated columns: (c, -s) for the first entry, (s, c) for the second.
    c0 = np.stack([c, -s], axis=-1)
    c1 = np.stack([s, c], axis=-1)
    first = np.where(swap[:, None], c1, c0)
    second = np.where(swap[:, None], c0, c1)
    return w, np.stack([first, second], axis=-1)


def reassemble(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``v diag(w) v^T`` for batched eigenpairs."""
    return np.einsum("...ik,...k,...jk->...ij", v, w, v)


def min_eig(a) -> np.ndarray | float:
    """Smallest eigenvalue of each symmetric matrix in the batch."""
    w, _ = jacobi_eigh(a)
    out = w[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def is_psd(a, eps: float = EPS_PSD) -> bool | np.ndarray:
    """Cone membership within the absolute eigenvalue tolerance ``eps``."""
    out = np.asarray(min_eig(a)) >= -eps
    return bool(out) if out.ndim == 0 else out


def require_psd(a, name: str = "matrix", eps: float = EPS_PSD) -> np.ndarray:
    """Return ``a`` as a symmetric array or raise :class:`ConeError`."""
    a = symmetrize(np.asarray(a, dtype=float))
    lo = np.min(min_eig(a))
    if lo < -eps:
        raise ConeError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")
    return a


def project_psd(x) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clip negative eigenvalues at zero."""
    w, v = jacobi_eigh(x)
    return reassemble(np.clip(w, 0.0, None), v)


def sqrt_psd(x, eps: float = EPS_PSD) -> np.ndarray:
    """Principal square root of a PSD matrix.

    Eigenvalues in ``[-eps, 0)`` are treated as roundoff and set to zero;
    anything more negative raises :class:`ConeError`.
    """
    w, v = jacobi_eigh(x)
    lo = np.min(w[..., 0]) if w.size else 0.0
    if lo < -eps:
        raise ConeError(f"sqrt_psd: input outside the cone (min eigenvalue {lo:.3e})")
    return reassemble(np.sqrt(np.clip(w, 0.0, None)), v)


def project_and_sqrt(x) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the cone and return ``(projection, sqrt(projection))``.

    One decomposition serves both results; the simulator relies on this to
    spend a single Jacobi pass per time step.
    """
    w, v = jacobi_eigh(x)
    w = np.clip(w, 0.0, None)
    return reassemble(w, v), reassemble(np.sqrt(w), v)


def psd_order_leq(x, y, eps: float = EPS_PSD) -> bool:
    """Loewner order test ``x <= y``, i.e. ``y - x`` is PSD within ``eps``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_same_dim(x, y)
    return bool(np.all(np.asarray(min_eig(y - x)) >= -eps))


def random_psd(rng: np.random.Generator, d: int, size=None, rank: int | None = None, scale: float = 1.0):
    """Draw random PSD matrices ``G G^T / k`` with Gaussian ``G`` of width ``rank``."""
    k = d if rank is None else rank
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (d, k)
    g = rng.standard_normal(shape)
    return scale * np.einsum("...ik,...jk->...ij", g, g) / k
