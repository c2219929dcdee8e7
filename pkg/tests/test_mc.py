import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affine_hjm.hjm import InitialCurve, VolatilitySpec
from affine_hjm.mc import (
    DiscountedBondObserver,
    EnsembleEstimate,
    bond_key,
    discounted_bond_samples,
    estimate_discounted_bond,
    estimate_laplace,
    two_sample_compare,
)
from affine_hjm.measure import IDENTITY, MeasureChange
from affine_hjm.params import AdmissibleParams, make_ray
from affine_hjm.pathsim import simulate, uniform_grid
from affine_hjm.riccati import laplace_transform, solve

I2 = np.eye(2)
Z2 = np.zeros((2, 2))
CURVE = InitialCurve.flat(0.02)
EXP = VolatilitySpec.exponential_decay(0.1 * I2, 1.0)


def test_estimate_basics():
    est = EnsembleEstimate.from_samples([1.0, 2.0, 3.0])
    assert est.value == 2.0
    assert est.std_error == pytest.approx(1.0 / math.sqrt(3))
    lo, hi = est.ci95
    assert lo < 2.0 < hi
    assert est.to_dict()["n"] == 3
    with pytest.raises(ValueError):
        EnsembleEstimate.from_samples([])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200), st.integers(1, 50))
def test_estimate_independent_of_order(xs, shift):
    a = EnsembleEstimate.from_samples(xs)
    b = EnsembleEstimate.from_samples(xs[shift % len(xs):] + xs[: shift % len(xs)])
    assert a.value == b.value
    assert a.std_error == pytest.approx(b.std_error, rel=1e-12, abs=1e-300)


def test_two_sample_examples():
    a = EnsembleEstimate(1.0, 0.1, 100)
    assert two_sample_compare(a, a) == 0.0
    assert two_sample_compare(a, EnsembleEstimate(1.2, 0.1, 100)) == pytest.approx(-2 / math.sqrt(2), rel=1e-12)
    assert two_sample_compare(EnsembleEstimate(1.0, 0.0, 5), EnsembleEstimate(2.0, 0.0, 5)) == -math.inf


def test_laplace_trivial_cases():
    p = AdmissibleParams.build(Z2, Z2, Q=Z2)
    x0 = np.array([[1.0, 0.2], [0.2, 0.5]])
    ens = simulate(p, x0, uniform_grid(1.0, 0.25), 50, 1)
    est = estimate_laplace(ens, Z2, 1.0)
    assert (est.value, est.std_error) == (1.0, 0.0)
    est = estimate_laplace(ens, I2, 1.0)
    assert est.value == pytest.approx(math.exp(-np.trace(x0)), rel=1e-14)
    assert est.std_error == 0.0


def test_laplace_matches_riccati():
    p = AdmissibleParams.wishart(2, 2.0)
    ens = simulate(p, I2, np.array([0.0, 1.0]), 100_000, 77, "wishart_exact")
    est = estimate_laplace(ens, I2, 1.0)
    ref = laplace_transform(solve(p, I2, 1.0), I2, 1.0)
    assert abs(est.value - ref) <= 3 * est.std_error


def test_bond_at_time_zero():
    p = AdmissibleParams.wishart(2, 2.0)
    ens = simulate(p, I2, uniform_grid(1.0, 0.25), 10, 0)
    est = estimate_discounted_bond(p, EXP, IDENTITY, ens, 0.0, 3.0, CURVE)
    assert est.value == pytest.approx(math.exp(-0.06), rel=1e-15)
    assert est.std_error == 0.0


def test_bond_without_volatility():
    p = AdmissibleParams.wishart(2, 2.0)
    zero = VolatilitySpec.exponential_decay(Z2, 1.0)
    grid = uniform_grid(1.0, 2.0**-6)
    obs = DiscountedBondObserver(p, zero, IDENTITY, CURVE, grid, [(0.5, 2.0)])
    ens = simulate(p, I2, grid, 200, 4, observers=[obs])
    est = estimate_discounted_bond(p, zero, IDENTITY, ens, 0.5, 2.0, CURVE)
    assert est.value == pytest.approx(math.exp(-0.04), rel=1e-13)
    assert est.std_error < 1e-15


def test_observer_matches_stored_paths():
    ray = make_ray([0.6, 0.8], 2.0, 1.0, 0.5 * I2)
    p = AdmissibleParams.build(I2, 3 * I2, jumps=[ray])
    mc = MeasureChange(0.2 * I2, (0.8,))
    grid = uniform_grid(1.0, 2.0**-6)
    obs = DiscountedBondObserver(p, EXP, mc, CURVE, grid, [(0.5, 2.0), (1.0, 4.0)])
    ens = simulate(p, I2, grid, 20, 6, measure=mc, observers=[obs], keep_paths=True)
    for t, T in [(0.5, 2.0), (1.0, 4.0)]:
        direct = [discounted_bond_samples(p, EXP, mc, CURVE, path, t, T) for path in ens.paths]
        np.testing.assert_allclose(ens.observed[bond_key(t, T)], direct, rtol=1e-12)


def test_measure_mismatch_rejected():
    p = AdmissibleParams.wishart(2, 2.0)
    grid = uniform_grid(1.0, 0.25)
    ens = simulate(p, I2, grid, 5, 0, keep_paths=True)
    with pytest.raises(ValueError, match="measure"):
        estimate_discounted_bond(p, EXP, MeasureChange(I2), ens, 0.5, 1.0, CURVE)


def test_missing_bond_output():
    p = AdmissibleParams.wishart(2, 2.0)
    ens = simulate(p, I2, uniform_grid(1.0, 0.25), 5, 0)
    with pytest.raises(ValueError, match="DiscountedBondObserver"):
        estimate_discounted_bond(p, EXP, IDENTITY, ens, 0.5, 1.0, CURVE)


@pytest.mark.parametrize(
    "params, mc",
    [
        (AdmissibleParams.wishart(2, 2.0), IDENTITY),
        (
            AdmissibleParams.build(I2, 3 * I2, M=-0.5 * I2, jumps=[make_ray([0.6, 0.8], 2.0, 1.0, 0.5 * I2)]),
            MeasureChange(0.3 * I2, (1.5,)),
        ),
    ],
    ids=["wishart", "jumps-girsanov"],
)
def test_discounted_bond_martingale(params, mc):
    grid = uniform_grid(1.0, 2.0**-8)
    obs = DiscountedBondObserver(params, EXP, mc, CURVE, grid, [(0.5, 1.0)])
    ens = simulate(params, I2, grid, 20_000, 31, measure=mc, observers=[obs])
    est = estimate_discounted_bond(params, EXP, mc, ens, 0.5, 1.0, CURVE)
    assert abs(est.value - math.exp(-0.02)) <= 3 * est.std_error
