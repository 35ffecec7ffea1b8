"""Sparse primal-dual interior-point solver for convex quadratic programs.

Solves problems in the standard form

    minimize    0.5 x'Px + c'x
    subject to  A x  = b
                G x <= h

with P symmetric positive semidefinite, using a Mehrotra
predictor-corrector method on the reduced Newton (KKT) system.  The
factorized system is the quasidefinite matrix

    [ P   A'   G'      ]
    [ A  -dI    0      ]
    [ G   0   -S/Z -dI ]

with a tiny static regularization d, recovered by iterative refinement
against the unregularized matrix.  Duals are first-class outputs: the
result carries equality multipliers y and inequality multipliers z >= 0
satisfying Px + c + A'y + G'z = 0 at the requested tolerance.

Constraint rows and the objective are equilibrated to unit magnitude
before solving; multipliers are rescaled on the way out, so callers see
duals in the original units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NonConvergenceError

__all__ = ["QpResult", "solve_qp"]

# Static regularization added to the quasidefinite KKT matrix before
# factorization; iterative refinement removes its effect.
_REG = 1e-11
_REFINE_ROUNDS = 2


@dataclass
class QpResult:
    """Primal-dual solution of a convex QP."""

    x: np.ndarray
    y: np.ndarray  # equality multipliers
    z: np.ndarray  # inequality multipliers, >= 0
    s: np.ndarray  # inequality slacks h - Gx, >= 0
    objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)
    status: str = "optimal"


def _as_csc(M, shape):
    if M is None:
        return sp.csc_matrix(shape)
    return sp.csc_matrix(M)


def _row_scales(M):
    """Per-row inf-norm scale factors; rejects empty rows."""
    absM = abs(M)
    norms = np.asarray(absM.max(axis=1).todense()).ravel() if M.shape[0] else np.zeros(0)
    if M.shape[0] and np.any(norms <= 0.0):
        bad = int(np.argmin(norms))
        raise ValueError(f"constraint row {bad} has no nonzero coefficients")
    return 1.0 / norms


def _solve_refined(lu, K, rhs):
    """LU solve with monotone iterative refinement against the true K.

    A correction is kept only if it reduces the residual: on severely
    ill-conditioned systems a refinement step computed from a smeared
    residual can make things worse, and accepting it would inject noise
    into the Newton direction.
    """
    sol = lu.solve(rhs)
    scale = 1.0 + np.max(np.abs(rhs))
    err = np.max(np.abs(K @ sol - rhs))
    for _ in range(_REFINE_ROUNDS):
        if err < 1e-14 * scale:
            break
        cand = sol - lu.solve(K @ sol - rhs)
        cand_err = np.max(np.abs(K @ cand - rhs))
        if cand_err >= err:
            break
        sol, err = cand, cand_err
    return sol


def solve_qp(P, c, A=None, b=None, G=None, h=None, *, tol=1e-9,
             max_iter=100, init_shift=0.0, accept_factor=1.0,
             on_iteration=None):
    """Solve a convex QP and return a primal-dual :class:`QpResult`.

    Parameters
    ----------
    P : sparse matrix or None
        PSD Hessian (n x n); None means a pure LP.
    c : array (n,)
    A, b : equality constraints (may be None / empty).
    G, h : inequality constraints G x <= h (may be None / empty).
    tol : float
        Target for the scaled primal, dual and complementarity residuals.
    max_iter : int
    init_shift : float
        Deterministic perturbation of the interior starting point; used to
        probe dual degeneracy (different shifts may land on different
        points of a degenerate optimal face).
    accept_factor : float
        If progress stalls or the iteration limit is hit, the best iterate
        is still returned (polished) when its residual is within
        ``accept_factor * tol``; 1.0 means strict.

    Raises
    ------
    NonConvergenceError
        If the residual target (including the accept band) is out of reach
        within ``max_iter`` iterations.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    P = _as_csc(P, (n, n))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    A = _as_csc(A, (b.size, n))
    G = _as_csc(G, (h.size, n))
    me, mi = A.shape[0], G.shape[0]

    # --- equilibrate: objective to unit magnitude, constraint rows to unit inf-norm
    obj_scale = max(1.0, np.max(np.abs(c)) if n else 1.0,
                    np.max(np.abs(P.data)) if P.nnz else 0.0)
    Ps = P / obj_scale
    cs = c / obj_scale
    ra = _row_scales(A) if me else np.zeros(0)
    rg = _row_scales(G) if mi else np.zeros(0)
    As = (sp.diags(ra) @ A).tocsr() if me else A.tocsr()
    bs = ra * b
    Gs = (sp.diags(rg) @ G).tocsr() if mi else G.tocsr()
    hs = rg * h

    def unscale(x, y, z, s):
        return x, obj_scale * ra * y, obj_scale * rg * z, s / rg if mi else s

    def scaled_objective(x):
        return 0.5 * float(x @ (Ps @ x)) + float(cs @ x)

    if mi == 0:
        # Equality-constrained QP: one factorization of the KKT system.
        K = sp.bmat([[Ps, As.T], [As, None]], format="csc") if me else Ps.tocsc()
        Kr = K + _REG * sp.diags(np.r_[np.ones(n), -np.ones(me)])
        lu = splu(Kr)
        sol = _solve_refined(lu, K, np.r_[-cs, bs])
        x, y = sol[:n], sol[n:]
        x, y, z, s = unscale(x, y, np.zeros(0), np.zeros(0))
        rd = Ps @ sol[:n] + cs + (As.T @ sol[n:] if me else 0.0)
        res = {
            "dual": float(np.max(np.abs(rd), initial=0.0)),
            "primal_eq": float(np.max(np.abs(As @ sol[:n] - bs), initial=0.0)),
            "primal_ineq": 0.0,
            "complementarity": 0.0,
        }
        return QpResult(x=x, y=y, z=z, s=s,
                        objective=obj_scale * scaled_objective(sol[:n]),
                        iterations=1, residuals=res)

    ones = np.ones(mi)

    def kkt(d):
        """Unregularized Newton matrix with inequality block -diag(d)."""
        blocks = [[Ps, As.T if me else None, Gs.T],
                  [As if me else None, None, None],
                  [Gs, None, -sp.diags(d)]]
        if not me:
            blocks = [[Ps, Gs.T], [Gs, -sp.diags(d)]]
        return sp.bmat(blocks, format="csc")

    reg = _REG * sp.diags(np.r_[np.ones(n), -np.ones(me + mi)])

    # --- starting point (Mehrotra's heuristic)
    K0 = kkt(ones)
    lu0 = splu((K0 + reg).tocsc())
    sol0 = _solve_refined(lu0, K0, np.r_[-cs, bs, hs])
    x = sol0[:n]
    y = sol0[n:n + me]
    z_hat = sol0[n + me:]
    s_hat = hs - Gs @ x
    s = s_hat + max(0.0, -1.5 * float(np.min(s_hat, initial=0.0)))
    z = -z_hat + max(0.0, -1.5 * float(np.min(-z_hat, initial=0.0)))
    gap0 = float(s @ z)
    if gap0 <= 0.0 or np.sum(s) <= 0.0 or np.sum(z) <= 0.0:
        s = np.maximum(s, 1.0)
        z = np.maximum(z, 1.0)
        gap0 = float(s @ z)
    s = s + 0.5 * gap0 / np.sum(z)
    z = z + 0.5 * gap0 / np.sum(s)
    if init_shift:
        s = s + abs(init_shift) * (1.0 + np.abs(s))
        z = z + abs(init_shift) * (1.0 + np.abs(z))

    best = None
    norm_c = 1.0 + np.max(np.abs(cs), initial=0.0)
    norm_b = 1.0 + np.max(np.abs(bs), initial=0.0)
    norm_h = 1.0 + np.max(np.abs(hs), initial=0.0)

    def pairing(z_, s_):
        """Strict complementarity measure: worst pair that is significant
        on BOTH sides, each side normalized to its own magnitude scale.
        Objective-relative products can hide primal dust on instances with
        huge objectives; this measure cannot."""
        if not mi:
            return 0.0
        sn = np.abs(s_) / (1.0 + np.max(np.abs(s_), initial=0.0))
        zn = np.abs(z_) / (1.0 + np.max(np.abs(z_), initial=0.0))
        return float(np.max(np.minimum(sn, zn), initial=0.0))

    def residual_set(x_, y_, z_, s_):
        rd_ = Ps @ x_ + cs + (As.T @ y_ if me else 0.0) + Gs.T @ z_
        rp_ = As @ x_ - bs if me else np.zeros(0)
        rg_ = Gs @ x_ + s_ - hs
        obj_ = scaled_objective(x_)
        return {
            "dual": float(np.max(np.abs(rd_), initial=0.0)) / norm_c,
            "primal_eq": float(np.max(np.abs(rp_), initial=0.0)) / norm_b,
            "primal_ineq": float(np.max(np.abs(rg_), initial=0.0)) / norm_h,
            "complementarity": float(np.max(np.abs(s_ * z_), initial=0.0))
                               / (1.0 + abs(obj_)),
            "sign": max(0.0, float(np.max(-z_, initial=0.0)),
                        float(np.max(-s_, initial=0.0))),
        }

    def polish(x_, z_, s_):
        """Re-solve on the inferred active set for exact complementarity.

        The initial guess (z > s) is refined for a few passes: rows whose
        polished slack goes negative are activated, rows whose polished
        multiplier goes negative are released.  Returns the best candidate
        seen (by worst residual), not necessarily the last.
        """
        active = z_ > s_
        candidate = None
        for _ in range(6):
            na = int(active.sum())
            Ga = Gs[active]
            blocks = [[Ps, As.T if me else None, Ga.T],
                      [As if me else None, None, None],
                      [Ga, None, None]]
            if not me:
                blocks = [[Ps, Ga.T], [Ga, None]]
            K = sp.bmat(blocks, format="csc")
            regp = _REG * sp.diags(np.r_[np.ones(n), -np.ones(me + na)])
            try:
                lup = splu((K + regp).tocsc())
            except RuntimeError:
                break
            sol_ = _solve_refined(lup, K, np.r_[-cs, bs, hs[active]])
            xp = sol_[:n]
            yp = sol_[n:n + me]
            zp = np.zeros(mi)
            zp[active] = sol_[n + me:]
            sp_ = hs - Gs @ xp
            sp_[active] = 0.0
            quality = max(residual_set(xp, yp, zp, sp_).values())
            if candidate is None or quality < candidate[0]:
                candidate = (quality, (xp, yp, zp, sp_))
            release = active & (zp < -1e-12)
            activate = ~active & (sp_ < -1e-12)
            if not (release.any() or activate.any()):
                break
            active = (active & ~release) | activate
        return None if candidate is None else candidate[1]

    def finish(x_, y_, z_, s_, it):
        # Prefer the polished point whenever it is (also) converged: exact
        # complementarity and a crisp active set are worth more than the
        # last sliver of interior-point progress.
        rp_ = residual_set(x_, y_, z_, s_)
        status = "optimal"
        pol = polish(x_, z_, s_)
        if pol is not None:
            rpol = residual_set(*pol)
            if max(rpol.values()) <= max(100.0 * tol, max(rp_.values())):
                x_, y_, z_, s_ = pol
                rp_ = rpol
                status = "polished"
        z_ = np.maximum(z_, 0.0)
        s_ = np.maximum(s_, 0.0)
        x_o, y_o, z_o, s_o = unscale(x_, y_, z_, s_)
        return QpResult(x=x_o, y=y_o, z=z_o, s=s_o,
                        objective=obj_scale * scaled_objective(x_),
                        iterations=it, residuals=rp_, status=status)

    stalled_since = 0
    snapshot = None          # best converged iterate (by pairing)
    bonus = 0                # extra iterations spent resolving pairing
    pair_best = np.inf
    pair_tol = 1e-7
    for it in range(1, max_iter + 1):
        rd = Ps @ x + cs + (As.T @ y if me else 0.0) + Gs.T @ z
        rp = As @ x - bs if me else np.zeros(0)
        rg_res = Gs @ x + s - hs
        mu = float(s @ z) / mi
        obj = scaled_objective(x)
        res = {
            "dual": float(np.max(np.abs(rd), initial=0.0)) / norm_c,
            "primal_eq": float(np.max(np.abs(rp), initial=0.0)) / norm_b,
            "primal_ineq": float(np.max(np.abs(rg_res), initial=0.0)) / norm_h,
            "complementarity": float(np.max(s * z, initial=0.0)) / (1.0 + abs(obj)),
        }
        total = max(res.values())
        if on_iteration is not None:
            on_iteration(it, dict(res))
        if best is None or total < 0.9 * best[0]:
            best = (total, x.copy(), y.copy(), z.copy(), s.copy(), it, dict(res))
            stalled_since = it
        if total <= tol:
            # Classic residuals are in; keep iterating a little while
            # strict complementarity (the pairing measure) still improves,
            # so nearly-degenerate activity patterns get resolved too.
            pair = pairing(z, s)
            if pair <= 0.5 * pair_best:
                pair_best = pair
                stalled_since = it
            if snapshot is None or pair <= pair_best:
                snapshot = (x.copy(), y.copy(), z.copy(), s.copy(), it)
            if pair <= pair_tol or bonus >= 20:
                return finish(x, y, z, s, it)
            bonus += 1
        if it - stalled_since >= 12:
            break   # no meaningful progress for a dozen iterations

        d = np.clip(s / z, 1e-13, 1e13)   # safeguard the barrier matrix
        K = kkt(d)
        lu = splu((K + reg).tocsc())

        # predictor (affine scaling) step
        rhs = np.r_[-rd, -rp, -rg_res + s]
        sol = _solve_refined(lu, K, rhs)
        dx_a, dy_a, dz_a = sol[:n], sol[n:n + me], sol[n + me:]
        ds_a = -rg_res - Gs @ dx_a
        alpha_p = _max_step(s, ds_a)
        alpha_d = _max_step(z, dz_a)
        alpha_aff = min(1.0, alpha_p, alpha_d)
        mu_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a)) / mi
        sigma = min(0.999, max((mu_aff / mu) ** 3, 1e-10))

        # corrector step (same factorization, updated centering rhs)
        rsz = s * z + ds_a * dz_a - sigma * mu * ones
        rhs = np.r_[-rd, -rp, -rg_res + rsz / z]
        sol = _solve_refined(lu, K, rhs)
        dx, dy, dz = sol[:n], sol[n:n + me], sol[n + me:]
        ds = -rg_res - Gs @ dx

        eta = 0.99 if mu > 1e-8 else 0.999
        alpha_p = min(1.0, eta * _max_step(s, ds))
        alpha_d = min(1.0, eta * _max_step(z, dz))
        x = x + alpha_p * dx
        s = s + alpha_p * ds
        y = y + alpha_d * dy
        z = z + alpha_d * dz

    if snapshot is not None:
        return finish(*snapshot)
    if best[0] <= accept_factor * tol:
        return finish(best[1], best[2], best[3], best[4], best[5])
    raise NonConvergenceError(
        f"interior point did not reach tol={tol:g} in {max_iter} iterations "
        f"(best residual {best[0]:.3e})",
        residuals=best[6],
    )


def _max_step(v, dv):
    """Largest step a in [0, inf) with v + a*dv >= 0 (v > 0 assumed)."""
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))
