"""Equivalent change of measure with constant market prices of risk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MeasureChange:
    """Girsanov data for a move from the physical measure to a pricing measure.

    Under the new measure ``W* = W - int gamma ds`` is a matrix Brownian
    motion and jumps along ray ``r`` arrive with intensity multiplied by
    ``K[r]``.  ``gamma = None`` means zero and ``K = None`` means one on
    every ray.
    """

    gamma: np.ndarray | None = None
    K: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.gamma is not None:
            object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        if self.K is not None:
            K = tuple(float(k) for k in self.K)
            if any(k < 0 for k in K):
                raise ValueError("jump multipliers K must be non-negative")
            object.__setattr__(self, "K", K)

    def gamma_matrix(self, d: int) -> np.ndarray:
        if self.gamma is None:
            return np.zeros((d, d))
        if self.gamma.shape != (d, d):
            raise ValueError(f"gamma must be {d} x {d}, got {self.gamma.shape}")
        return self.gamma

    def k_factors(self, n_rays: int) -> np.ndarray:
        if self.K is None:
            return np.ones(n_rays)
        if len(self.K) != n_rays:
            raise ValueError(f"expected {n_rays} jump multipliers, got {len(self.K)}")
        return np.asarray(self.K)

    @property
    def is_identity(self) -> bool:
        no_gamma = self.gamma is None or not np.any(self.gamma)
        no_k = self.K is None or all(k == 1.0 for k in self.K)
        return no_gamma and no_k


IDENTITY = MeasureChange()


def same_measure(a: MeasureChange, b: MeasureChange, d: int, n_rays: int) -> bool:
    """Whether two measure changes describe the same measure."""
    return bool(
        np.array_equal(a.gamma_matrix(d), b.gamma_matrix(d))
        and np.array_equal(a.k_factors(n_rays), b.k_factors(n_rays))
    )
