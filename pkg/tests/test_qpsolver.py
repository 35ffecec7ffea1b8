"""Interior-point QP solver checks against closed forms and scipy oracles."""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import nnls

from tepshare.errors import NonConvergenceError
from tepshare.qpsolver import solve_qp


def kkt_residuals(P, c, A, b, G, h, res):
    """Recompute KKT residuals of a QpResult with plain dense arithmetic."""
    n = len(c)
    P = np.zeros((n, n)) if P is None else np.asarray(sp.csc_matrix(P).todense())
    rd = P @ res.x + c
    if A is not None:
        rd = rd + np.asarray(sp.csc_matrix(A).todense()).T @ res.y
    if G is not None:
        Gd = np.asarray(sp.csc_matrix(G).todense())
        rd = rd + Gd.T @ res.z
        slack = h - Gd @ res.x
        comp = np.max(np.abs(res.z * slack), initial=0.0)
        pineq = np.max(-slack, initial=0.0)
        dual_sign = np.min(res.z, initial=0.0)
    else:
        comp, pineq, dual_sign = 0.0, 0.0, 0.0
    peq = np.max(np.abs(np.asarray(sp.csc_matrix(A).todense()) @ res.x - b), initial=0.0) if A is not None else 0.0
    return {
        "stationarity": float(np.max(np.abs(rd))),
        "primal_eq": float(peq),
        "primal_ineq": float(pineq),
        "complementarity": float(comp),
        "dual_sign": float(-dual_sign),
    }


def test_unconstrained_quadratic():
    # min 0.5 x'Px + c'x with P = diag(2, 4), c = (-2, -8): x* = (1, 2)
    P = sp.diags([2.0, 4.0])
    c = np.array([-2.0, -8.0])
    res = solve_qp(P, c)
    np.testing.assert_allclose(res.x, [1.0, 2.0], atol=1e-9)
    assert res.objective == pytest.approx(-9.0, abs=1e-9)


def test_single_bound_active():
    # min 0.5 (x-2)^2 s.t. x <= 1: x* = 1, multiplier z* = 1
    P = sp.eye(1)
    c = np.array([-2.0])
    G = sp.csc_matrix(np.array([[1.0]]))
    h = np.array([1.0])
    res = solve_qp(P, c, G=G, h=h)
    assert res.x[0] == pytest.approx(1.0, abs=1e-8)
    assert res.z[0] == pytest.approx(1.0, abs=1e-7)


def test_equality_lp_duals():
    # min c'x s.t. sum(x) = 1, x >= 0: optimum puts mass on argmin c,
    # equality dual equals -min(c) under our sign convention
    # (Px + c + A'y + G'z = 0 with z the multiplier of -x <= 0).
    c = np.array([3.0, 1.0, 2.0])
    A = sp.csc_matrix(np.ones((1, 3)))
    b = np.array([1.0])
    G = sp.csc_matrix(-np.eye(3))
    h = np.zeros(3)
    res = solve_qp(None, c, A, b, G, h)
    np.testing.assert_allclose(res.x, [0.0, 1.0, 0.0], atol=1e-8)
    assert res.y[0] == pytest.approx(-1.0, abs=1e-8)
    assert res.objective == pytest.approx(1.0, abs=1e-8)


def test_nnls_agreement():
    rng = np.random.default_rng(7)
    M = rng.normal(size=(12, 6))
    v = rng.normal(size=12)
    x_ref, _ = nnls(M, v)
    res = solve_qp(sp.csc_matrix(M.T @ M), -M.T @ v,
                   G=sp.csc_matrix(-np.eye(6)), h=np.zeros(6))
    np.testing.assert_allclose(res.x, x_ref, atol=1e-7)


@pytest.mark.parametrize("seed", range(8))
def test_random_qp_kkt(seed):
    rng = np.random.default_rng(seed)
    n, me, mi = 8, 3, 10
    M = rng.normal(size=(n, n))
    P = sp.csc_matrix(M.T @ M + 0.1 * np.eye(n))
    c = rng.normal(size=n)
    A = sp.csc_matrix(rng.normal(size=(me, n)))
    x_feas = rng.normal(size=n)
    b = A @ x_feas
    G = sp.csc_matrix(rng.normal(size=(mi, n)))
    h = G @ x_feas + rng.uniform(0.1, 2.0, size=mi)
    res = solve_qp(P, c, A, b, G, h, tol=1e-10)
    resid = kkt_residuals(P, c, A, b, G, h, res)
    scale = 1.0 + max(np.max(np.abs(c)), np.max(np.abs(b)), np.max(np.abs(h)))
    for name, val in resid.items():
        assert val <= 1e-7 * scale, f"{name}={val:.2e}"


def test_degenerate_face_converges():
    # min 0 s.t. 0 <= x <= 1: every point optimal; solver must still converge
    c = np.zeros(2)
    G = sp.csc_matrix(np.vstack([np.eye(2), -np.eye(2)]))
    h = np.r_[np.ones(2), np.zeros(2)]
    res = solve_qp(None, c, G=G, h=h)
    assert np.all(res.x > -1e-9) and np.all(res.x < 1 + 1e-9)


def test_init_shift_is_deterministic_knob():
    c = np.zeros(2)
    G = sp.csc_matrix(np.vstack([np.eye(2), -np.eye(2)]))
    h = np.r_[np.ones(2), np.zeros(2)]
    a = solve_qp(None, c, G=G, h=h, init_shift=0.0)
    b_ = solve_qp(None, c, G=G, h=h, init_shift=0.0)
    np.testing.assert_array_equal(a.x, b_.x)


def test_nonconvergence_carries_residuals():
    P = sp.eye(3)
    c = -np.ones(3)
    G = sp.csc_matrix(-np.eye(3))
    h = np.zeros(3)
    with pytest.raises(NonConvergenceError) as err:
        solve_qp(P, c, G=G, h=h, max_iter=1, tol=1e-16)
    assert "dual" in err.value.residuals
