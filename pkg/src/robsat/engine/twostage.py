"""Two-stage LP recourse with a 1-norm penalty: primal and dual adaptations.

Both paths need ``K`` to be the nonnegative orthant, so that
``g(x, z) = min { d @ y : B y >= f(x) + F(x) z }``.

* Primal: the recourse decision follows ``y(z) = q + Q z + qd ||z||_1``.
* Dual: the support multiplier follows ``beta(rho) = pi + Pi rho`` over
  ``P = {rho >= 0 : B' rho = d}``.

The dual adaptation is never more conservative than the primal one.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..conic import Affine, ProgramBuilder
from .. import conic
from ..errors import ContractError, SolverError
from ..penalty import budgeted_norm
from .model import SatisficingModel
from .satisficing import add_decision_set, ft_affine, rhs_affine, robust_counterpart, run_program, resolve_target


def _check(model: SatisficingModel) -> None:
    if not model.eval.all_nonneg:
        raise ContractError("two-stage paths need a nonnegative-orthant cone")
    l1 = budgeted_norm(model.eval.n_z, model.eval.n_z)
    p = model.penalty
    same = (
        p.M.shape == l1.M.shape
        and p.N.shape == l1.N.shape
        and np.allclose(p.M, l1.M)
        and np.allclose(p.N, l1.N)
        and np.allclose(p.s, l1.s)
        and np.allclose(p.t, l1.t)
    )
    if not same:
        raise ContractError("two-stage paths need the 1-norm penalty (budgeted with gamma = n_z)")


def _abs_le(builder: ProgramBuilder, expr: Affine, bound: Affine) -> None:
    """``|expr_i| <= bound`` for every entry, ``bound`` a scalar expression."""
    ones = np.ones((expr.rows, 1))
    b = bound.lmul(ones)
    builder.nonneg(b - expr)
    builder.nonneg(b + expr)


def _finish(prog, res, stats, what):
    if res.status != "optimal":
        raise SolverError(f"{what} ended with status {res.status}", res.status)
    return float(res.block(prog, "k")[0]), res.block(prog, "x"), stats


def _setup(model):
    b = ProgramBuilder()
    ev = model.eval
    x = b.var(ev.n_x, "x")
    k = b.var(1, "k")
    ups = b.var(model.omega, "upsilon")
    add_decision_set(b, x, model.decision_set)
    b.nonneg(k)
    return b, x, k, ups


def solve_twostage_primal(model: SatisficingModel, tau=None, options=None):
    """Minimize ``k`` over the non-affine primal rule.  Returns ``(k, x, stats)``."""
    _check(model)
    tau, _ = resolve_target(model, tau, options)
    ev, Zs = model.eval, model.support
    H, h = Zs.H, Zs.h
    n_f, n_y, n_z, n_h = ev.n_f, ev.n_y, ev.n_z, Zs.n_h
    b, x, k, ups = _setup(model)
    b.nonneg(tau - ups.sum() * (1.0 / model.omega))
    Ht = sp.csr_matrix(H.T)
    for w, zhat in enumerate(model.samples):
        hw = h - H @ zhat
        q = b.var(n_y)
        Q = b.var(n_y * n_z)  # row-major n_y x n_z
        qd = b.var(n_y)
        w0 = b.var(n_h)
        W = b.var(n_f * n_h)  # row i is w^i
        b.nonneg(w0)
        b.nonneg(W)
        # Q' v as a function of vec(Q): kron(v', I_nz)
        Qt_d = Q.lmul(sp.kron(ev.d.reshape(1, -1), sp.eye(n_z)))
        b.nonneg(ups[w] - q.lmul(ev.d.reshape(1, -1)) - w0.lmul(hw.reshape(1, -1)))
        _abs_le(b, Qt_d - w0.lmul(Ht), k - qd.lmul(ev.d.reshape(1, -1)))
        f = rhs_affine(ev, x, zhat)
        Ft = ft_affine(ev, x, np.eye(n_z))  # vec(F(x)') row-major, n_z x n_f
        Bq = q.lmul(ev.B)
        Bqd = qd.lmul(ev.B)
        for i in range(n_f):
            wi = W[i * n_h : (i + 1) * n_h]
            b.nonneg(Bq[i] - f[i] - wi.lmul(hw.reshape(1, -1)))
            Fi = Ft[np.arange(n_z) * n_f + i]
            QtBi = Q.lmul(sp.kron(ev.B[i].reshape(1, -1), sp.eye(n_z)))
            _abs_le(b, Fi - QtBi - wi.lmul(Ht), Bqd[i])
    prog, res, stats = run_program(b, k, options)
    return _finish(prog, res, stats, "two-stage primal")


def solve_twostage_dual(model: SatisficingModel, tau=None, options=None):
    """Minimize ``k`` over the affine dual rule.  Returns ``(k, x, stats)``."""
    _check(model)
    tau, _ = resolve_target(model, tau, options)
    ev, Zs = model.eval, model.support
    H, h = Zs.H, Zs.h
    n_f, n_z, n_h = ev.n_f, ev.n_z, Zs.n_h
    b, x, k, ups = _setup(model)
    b.nonneg(tau - ups.sum() * (1.0 / model.omega))
    I_f = sp.eye(n_f)
    Ft = ft_affine(ev, x, np.eye(n_z))
    Ht = H.T
    for w, zhat in enumerate(model.samples):
        hw = h - H @ zhat
        pi = b.var(n_h)
        Pi = b.var(n_h * n_f)
        kk = k.lmul(np.ones((n_z, 1)))
        Htpi = pi.lmul(Ht)
        HtPi = Pi.lmul(sp.kron(Ht, I_f))
        gamma = Affine.vstack([pi.lmul(hw.reshape(1, -1)) - ups[w], Htpi - kk, -Htpi - kk, -pi])
        Gamma = Affine.vstack(
            [
                rhs_affine(ev, x, zhat) + Pi.lmul(sp.kron(hw.reshape(1, -1), I_f)),
                HtPi - Ft,
                Ft - HtPi,
                -Pi,
            ]
        )
        robust_counterpart(b, gamma, Gamma, ev.B, ev.d, ev.cone)
    prog, res, stats = run_program(b, k, options)
    return _finish(prog, res, stats, "two-stage dual")
