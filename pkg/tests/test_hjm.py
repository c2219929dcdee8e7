import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from affine_hjm import symcone
from affine_hjm.hjm import (
    InitialCurve,
    VolatilitySpec,
    affine_realization,
    big_sigma,
    bond_price,
    evolve_forward,
    hjm_drift,
    short_rate,
    short_rate_closed_form,
    yield_compact,
    yield_direct,
)
from affine_hjm.measure import IDENTITY, MeasureChange
from affine_hjm.params import AdmissibleParams, eval_B, make_ray
from affine_hjm.pathsim import SamplePath, simulate, step_euler, uniform_grid

I2 = np.eye(2)
EXP = VolatilitySpec.exponential_decay(0.1 * I2, 1.0)
ISQ = VolatilitySpec.inverse_sqrt(0.05 * I2)
CURVE = InitialCurve.flat(0.02)


# -- volatility and curves ----------------------------------------------------


def test_big_sigma_examples():
    np.testing.assert_allclose(big_sigma(EXP, 0.7, 0.7), np.zeros((2, 2)))
    vol = VolatilitySpec.exponential_decay(I2, 1.0)
    np.testing.assert_allclose(big_sigma(vol, 0.0, 1.0), -(1 - math.exp(-1)) * I2, rtol=1e-15)
    np.testing.assert_allclose(big_sigma(VolatilitySpec.inverse_sqrt(I2), 0.0, 4.0), -4 * I2, rtol=1e-15)


@pytest.mark.parametrize(
    "vol",
    [
        VolatilitySpec.exponential_decay(I2, 0.7),
        VolatilitySpec.inverse_sqrt(I2),
        VolatilitySpec.tabulated(I2, [0.0, 1.0, 3.0, 10.0], [1.0, 0.6, 0.5, 0.1]),
    ],
    ids=["exp", "isqrt", "tab"],
)
def test_big_sigma_matches_quadrature(vol):
    for s, T in [(0.0, 0.5), (0.3, 2.0), (1.0, 14.0)]:
        val, _ = quad(lambda u: vol.g(u - s), s, T, limit=200, points=[s + 1.0, s + 3.0])
        assert big_sigma(vol, s, T)[0, 0] == pytest.approx(-val, rel=1e-8)


def test_tabulated_validation():
    with pytest.raises(ValueError):
        VolatilitySpec.tabulated(I2, [0.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        VolatilitySpec.exponential_decay(I2, 0.0)


def test_curve_integrals(tmp_path):
    csv = tmp_path / "curve.csv"
    csv.write_text("T,rate\n0.5,0.01\n2,0.03\n5,0.025\n")
    curve = InitialCurve.from_csv(csv)
    for a, b in [(0.0, 0.5), (0.2, 3.0), (1.0, 9.0)]:
        val, _ = quad(curve, a, b, points=[0.5, 2.0, 5.0])
        assert curve.integral(a, b) == pytest.approx(val, rel=1e-12)
    assert curve.yield0(1.0, 3.0) == pytest.approx(quad(curve, 1.0, 3.0, points=[2.0])[0] / 2.0, rel=1e-12)
    with pytest.warns(RuntimeWarning):
        assert curve.ell0() == 0.025
    assert CURVE.ell0() == 0.02


def test_curve_rejects_bad_rows(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("0.5,0.01\n2,abc\n")
    with pytest.raises(ValueError, match=":2:"):
        InitialCurve.from_csv(csv)


# -- drift condition ------------------------------------------------------------


def test_drift_zero_vol():
    p = AdmissibleParams.wishart(2, 2.0)
    zero = VolatilitySpec.exponential_decay(np.zeros((2, 2)), 1.0)
    assert hjm_drift(p, zero, IDENTITY, I2, 0.2, 1.0) == 0.0


def test_drift_on_the_diagonal():
    a = 3.0
    p = AdmissibleParams.wishart(2, a)
    x = np.array([[1.0, 0.3], [0.3, 2.0]])
    assert hjm_drift(p, EXP, IDENTITY, x, 0.4, 0.4) == pytest.approx(-a * np.trace(EXP.sigma(0.4, 0.4)))


def _laplace_exponent(p, mc, x, S):
    # F(-S) + Tr[R(-S) x] with the pricing-measure drift
    d = p.dim
    inner = p.b + eval_B(p.drift, x)
    gam = mc.gamma_matrix(d)
    if np.any(gam):
        inner = inner + 2.0 * symcone.sqrt_psd(x) @ gam @ p.Q
    out = np.trace(S @ inner) + 2.0 * np.trace(p.Q @ S @ x @ S @ p.Q.T)
    k = mc.k_factors(len(p.jumps))
    for r, ray in enumerate(p.jumps):
        c = ray.v @ S @ ray.v
        out += k[r] * ray.intensity(x) * c / (ray.theta - c)
    return out


@given(st.integers(0, 2**32 - 1))
def test_drift_is_maturity_derivative_of_laplace_exponent(seed):
    r = np.random.default_rng(seed)
    M = -0.4 * I2 + 0.2 * r.standard_normal((2, 2))
    v = r.standard_normal(2)
    ray = make_ray(v / np.linalg.norm(v), 1.5 + r.random(), r.random(), 0.4 * symcone.random_psd(r, 2))
    p = AdmissibleParams.build(I2, 3 * I2, M=M, jumps=[ray])
    vol = VolatilitySpec.exponential_decay(0.2 * symcone.random_psd(r, 2), 0.5 + r.random())
    mc = MeasureChange(0.3 * r.standard_normal((2, 2)), (0.5 + r.random(),))
    x = symcone.random_psd(r, 2)
    t, T = 0.3, 0.3 + 2 * r.random() + 0.1
    eps = 1e-5
    fd = (
        _laplace_exponent(p, mc, x, big_sigma(vol, t, T + eps))
        - _laplace_exponent(p, mc, x, big_sigma(vol, t, T - eps))
    ) / (2 * eps)
    assert hjm_drift(p, vol, mc, x, t, T) == pytest.approx(fd, rel=1e-6, abs=1e-9)


# -- forward surface ------------------------------------------------------------


def _one_path(delta, dt, seed=3, t_end=1.0, params=None):
    p = params or AdmissibleParams.wishart(2, delta)
    ens = simulate(p, I2, uniform_grid(t_end, dt), 1, seed, keep_paths=True)
    return p, ens.paths[0]


def test_zero_vol_keeps_initial_curve():
    p, path = _one_path(3.0, 2.0**-6)
    zero = VolatilitySpec.exponential_decay(np.zeros((2, 2)), 1.0)
    curve = InitialCurve(np.array([0.0, 1.0, 5.0]), np.array([0.01, 0.02, 0.04]))
    T_grid = np.linspace(1.0, 5.0, 9)
    surf = evolve_forward(p, zero, IDENTITY, path, T_grid, curve, t_eval=[0.0, 0.5, 1.0])
    np.testing.assert_allclose(surf.f[-1, surf._Tj(1.0):], curve(surf.T_grid[surf._Tj(1.0):]), atol=1e-15)
    assert short_rate(surf, 0.5) == pytest.approx(curve(0.5))


def test_flat_bond_and_yield():
    p, path = _one_path(3.0, 2.0**-6)
    zero = VolatilitySpec.exponential_decay(np.zeros((2, 2)), 1.0)
    surf = evolve_forward(p, zero, IDENTITY, path, np.linspace(0.0, 4.0, 41), CURVE, t_eval=[0.0, 1.0])
    assert bond_price(surf, 1.0, 1.0) == 1.0
    assert bond_price(surf, 1.0, 4.0) == pytest.approx(math.exp(-0.02 * 3.0), rel=1e-13)
    assert yield_direct(surf, 1.0, 4.0) == pytest.approx(0.02, rel=1e-12)
    assert short_rate(surf, 0.0) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        yield_direct(surf, 1.0, 1.0)


def _coarsen(params, fine: SamplePath, factor: int) -> SamplePath:
    """Independent Euler re-integration on a coarser grid with aggregated Brownian increments."""
    n = fine.n_steps // factor
    dW = fine.dW.reshape(n, factor, 2, 2).sum(axis=1)
    tg = fine.t_grid[::factor]
    h = tg[1] - tg[0]
    states = [fine.states[0]]
    D = []
    for k in range(n):
        x = states[-1]
        D.append(symcone.sqrt_psd(x) @ dW[k] @ params.Q)
        states.append(step_euler(params, x, dW[k], h))
    zeros = np.zeros((n, 2, 2))
    return SamplePath(tg, np.array(states), dW, np.array(D), zeros)


def test_grid_refinement():
    p, fine = _one_path(3.0, 2.0**-12, seed=8)
    coarse = _coarsen(p, fine, 4)
    T_grid = np.linspace(1.0, 6.0, 21)
    errs = []
    for vol in (EXP, ISQ):
        a = evolve_forward(p, vol, IDENTITY, fine, T_grid, CURVE, t_eval=[0.5, 1.0])
        b = evolve_forward(p, vol, IDENTITY, coarse, T_grid, CURVE, t_eval=[0.5, 1.0])
        # f(t, t) depends on the grid when g is singular at 0, so start past the diagonal
        j = a._Tj(1.0) + 1
        errs.append(np.max(np.abs(a.f[-1, j:] - b.f[-1, j:])))
    assert max(errs) <= 10 * 2.0**-10


def _exact_path(seed, dt=2.0**-10, delta=5.0):
    p = AdmissibleParams.wishart(2, delta)
    ens = simulate(p, I2, uniform_grid(1.0, dt), 3, seed, "wishart_exact", keep_paths=True)
    return p, ens.paths


def test_affine_realization_matches_surface():
    p, paths = _exact_path(41)
    T_grid = np.linspace(0.0, 5.0, 41)
    worst = 0.0
    for path in paths:
        surf = evolve_forward(p, EXP, IDENTITY, path, T_grid, CURVE, t_eval=[0.5, 1.0])
        for t in (0.5, 1.0):
            i = surf._ti(t)
            for j in range(surf._Tj(t), len(surf.T_grid)):
                T = surf.T_grid[j]
                worst = max(worst, abs(surf.f[i, j] - affine_realization(p, EXP, CURVE, path, t, T)))
    assert worst <= 5e-3


def test_short_rate_closed_form():
    p, paths = _exact_path(42)
    tt = np.linspace(0.0, 1.0, 17)
    for path in paths:
        surf = evolve_forward(p, EXP, IDENTITY, path, [0.0], CURVE, t_eval=tt)
        grid = np.array([short_rate(surf, t) for t in tt])
        closed = np.array([short_rate_closed_form(p, EXP, CURVE, path, t) for t in tt])
        assert np.max(np.abs(grid - closed)) <= 1e-2 * np.max(np.abs(closed))


def test_realization_rejects_other_models():
    p = AdmissibleParams.wishart(2, 3.0, M=-I2)
    _, path = _one_path(3.0, 2.0**-4)
    with pytest.raises(ValueError):
        affine_realization(p, EXP, CURVE, path, 0.5, 1.0)
    with pytest.raises(ValueError):
        short_rate_closed_form(AdmissibleParams.wishart(2, 3.0), ISQ, CURVE, path, 0.5)


# -- compact yield ------------------------------------------------------------


def test_compact_yield_zero_vol():
    p, path = _one_path(3.0, 2.0**-6)
    zero = VolatilitySpec.inverse_sqrt(np.zeros((2, 2)))
    dec = yield_compact(p, zero, IDENTITY, path, 0.5, 2.0, CURVE)
    assert dec.total == pytest.approx(CURVE.yield0(0.5, 2.0), abs=0)


def test_compact_yield_without_jumps_has_three_terms():
    p, path = _one_path(3.0, 2.0**-6)
    dec = yield_compact(p, EXP, IDENTITY, path, 0.5, 2.0, CURVE)
    assert dec.jump_compensator_term == 0.0
    assert dec.jump_measure_term == 0.0
    assert dec.gamma_term != 0.0 and dec.brownian_term != 0.0


@pytest.mark.parametrize("vol", [EXP, ISQ], ids=["exp", "isqrt"])
def test_compact_matches_direct(vol):
    p, paths = _exact_path(43)
    T_grid = np.linspace(0.0, 10.0, 401)
    for path in paths:
        surf = evolve_forward(p, vol, IDENTITY, path, T_grid, CURVE, t_eval=[0.5, 1.0])
        for t in (0.5, 1.0):
            for T in (2.0, 5.0, 10.0):
                comp = yield_compact(p, vol, IDENTITY, path, t, T, CURVE).total
                assert abs(comp - yield_direct(surf, t, T)) <= 2e-2


def test_jump_groupings_agree():
    ray = make_ray([0.6, 0.8], 2.0, 1.5, 0.5 * I2)
    p = AdmissibleParams.build(I2, 4 * I2, jumps=[ray])
    mc = MeasureChange(None, (0.7,))
    ens = simulate(p, I2, uniform_grid(1.0, 2.0**-8), 4, 17, measure=mc, keep_paths=True)
    T_grid = np.linspace(0.0, 6.0, 601)
    for path in ens.paths:
        dec = yield_compact(p, EXP, mc, path, 1.0, 6.0, CURVE)
        assert dec.total == pytest.approx(dec.total_compensated, abs=1e-14)
        surf = evolve_forward(p, EXP, mc, path, T_grid, CURVE, t_eval=[1.0])
        assert abs(dec.total - yield_direct(surf, 1.0, 6.0)) <= 2e-2
