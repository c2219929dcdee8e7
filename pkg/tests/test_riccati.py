import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affine_hjm import symcone
from affine_hjm.params import AdmissibleParams, make_ray
from affine_hjm.riccati import (
    RiccatiEscapeError,
    eval_F,
    eval_R,
    laplace_transform,
    solve,
    wishart_scalar_closed_form,
)

I2 = np.eye(2)
WISHART = AdmissibleParams.wishart(2, 2.0)


def test_eval_F_examples():
    p = AdmissibleParams.build(I2, I2)
    assert eval_F(p, I2) == pytest.approx(2.0)
    assert eval_F(p, np.zeros((2, 2))) == 0.0
    pj = AdmissibleParams.build(I2, I2, jumps=[make_ray([1.0, 0.0], 1.0, 1.0)])
    assert eval_F(pj, I2) == pytest.approx(2.5)


def test_eval_R_examples():
    np.testing.assert_allclose(eval_R(AdmissibleParams.build(I2, 2 * I2), I2), -2 * I2)
    p = AdmissibleParams.build(I2, 2 * I2, M=np.array([[0.3, -1.0], [2.0, 0.1]]))
    np.testing.assert_array_equal(eval_R(p, np.zeros((2, 2))), np.zeros((2, 2)))
    np.testing.assert_allclose(eval_R(AdmissibleParams.build(I2, 2 * I2, M=I2), I2), np.zeros((2, 2)), atol=1e-15)


def test_eval_rejects_non_psd():
    with pytest.raises(symcone.ConeError):
        eval_F(WISHART, np.diag([1.0, -1.0]))
    with pytest.raises(symcone.ConeError):
        eval_R(WISHART, np.diag([1.0, -1.0]))


def test_wishart_solve_example():
    sol = solve(WISHART, I2, 0.5)
    phi, psi = sol.at(0.5)
    np.testing.assert_allclose(psi, 0.5 * I2, atol=1e-12)
    assert phi == pytest.approx(2 * math.log(2), abs=1e-12)
    assert laplace_transform(sol, I2, 0.5) == pytest.approx(math.exp(-1) / 4, rel=1e-12)
    assert laplace_transform(sol, np.zeros((2, 2)), 0.5) == pytest.approx(math.exp(-phi), rel=1e-15)


def test_initial_condition_is_u():
    u = np.array([[1.0, 0.2], [0.2, 0.5]])
    sol = solve(WISHART, u, 1.0)
    np.testing.assert_array_equal(sol.psi[0], u)
    assert sol.phi[0] == 0.0


def test_zero_horizon():
    sol = solve(WISHART, I2, 0.0)
    assert len(sol.t_grid) == 1
    assert sol.phi[0] == 0.0
    np.testing.assert_array_equal(sol.psi[0], I2)


def test_zero_u_is_stationary():
    sol = solve(AdmissibleParams.build(I2, 2 * I2, M=-I2), np.zeros((2, 2)), 2.0)
    assert np.all(sol.phi == 0.0)
    assert np.all(sol.psi == 0.0)
    assert laplace_transform(sol, 5 * I2, 1.3) == 1.0


def test_range_error():
    sol = solve(WISHART, I2, 1.0)
    with pytest.raises(ValueError):
        sol.at(1.5)


def test_escape_detected():
    # b = 0 with a drift that pushes psi out of the cone
    p = AdmissibleParams(WISHART.alpha, WISHART.b, WISHART.drift)
    object.__setattr__(p.drift, "M", np.array([[0.0, 50.0], [-50.0, 0.0]]))
    with pytest.raises(RiccatiEscapeError):
        solve(p, np.diag([1.0, 0.0]), 1.0, dt=0.1)


def test_fourth_order_convergence():
    c, t = 1.0, 1.0
    phi_ex, psi_ex = wishart_scalar_closed_form(c, 2.0, 2, t)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        phi, psi = solve(WISHART, c * I2, t, dt).at(t)
        errs.append(abs(psi[0, 0] - psi_ex) + abs(phi - phi_ex))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(12 < r < 20 for r in ratios)


def test_batched_u_matches_loop():
    us = np.stack([0.1 * I2, 0.5 * I2, np.array([[1.0, 0.3], [0.3, 0.4]])])
    p = AdmissibleParams.build(I2, 3 * I2, M=np.array([[-0.5, 0.1], [0.0, -0.3]]), jumps=[make_ray([0.6, 0.8], 2.0, 1.0, 0.5 * I2)])
    sol = solve(p, us, 1.0, 0.01)
    for i, u in enumerate(us):
        one = solve(p, u, 1.0, 0.01)
        np.testing.assert_allclose(sol.psi[:, i], one.psi, atol=1e-14)
        np.testing.assert_allclose(sol.phi[:, i], one.phi, atol=1e-14)


def _random_params(r, d=2):
    M = -0.5 * np.eye(d) + 0.3 * r.standard_normal((d, d))
    Q = np.eye(d) + 0.2 * r.standard_normal((d, d))
    base = AdmissibleParams.wishart(d, d + 1.0, M=M, Q=Q)
    v = r.standard_normal(d)
    ray = make_ray(v / np.linalg.norm(v), 1.0 + r.random(), r.random(), symcone.random_psd(r, d) * 0.3)
    return AdmissibleParams.build(base.alpha, base.b, M=M, jumps=[ray], Q=Q)


@given(st.integers(0, 2**32 - 1))
def test_flow_property(seed):
    r = np.random.default_rng(seed)
    p = _random_params(r)
    u = symcone.random_psd(r, 2)
    dt = 0.01
    s, t = 0.3, 0.5
    full = solve(p, u, s + t, dt)
    first = solve(p, u, s, dt)
    second = solve(p, first.psi[-1], t, dt)
    tol = 10 * dt**4
    np.testing.assert_allclose(full.psi[-1], second.psi[-1], atol=tol)
    assert full.phi[-1] == pytest.approx(first.phi[-1] + second.phi[-1], abs=tol)


@given(st.integers(0, 2**32 - 1))
def test_cone_invariance_and_laplace_range(seed):
    r = np.random.default_rng(seed)
    p = _random_params(r)
    u = symcone.random_psd(r, 2)
    x = symcone.random_psd(r, 2)
    sol = solve(p, u, 2.0, 0.02)
    assert np.all(sol.min_eig_raw >= -1e-6)
    assert np.all(np.linalg.eigvalsh(sol.psi) >= -1e-12)
    vals = np.array([laplace_transform(sol, x, t) for t in sol.t_grid[::10]])
    assert np.all((vals > 0) & (vals <= 1.0))
    # monotone in t only for x = 0: mean reversion can raise the transform
    at_zero = np.exp(-sol.phi)
    assert np.all(np.diff(at_zero) <= 1e-15)
    assert np.all(np.diff(sol.phi) >= -1e-14)
