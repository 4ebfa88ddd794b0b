"""Exact SDP for a quadratic evaluation function over a ball with squared-norm penalty.

The constraint ``g(x, z) <= tau + k ||z||^2`` for all ``||z|| <= r`` holds iff
some ``lam >= 0`` makes

    [ I       a(x)                 A(x)        ]
    [ a(x)'   tau - c(x) - lam r^2  -b(x)'/2    ]  >= 0
    [ A(x)'   -b(x)/2              (k + lam) I ]
"""

from __future__ import annotations

import cvxpy as cp
import numpy as np

from .. import conic
from ..conic import ProgramBuilder
from ..errors import SolverError, TargetTooLowError
from .model import DecisionSet, QuadraticModel
from .satisficing import add_decision_set, run_program


def _lmi_pieces(q: QuadraticModel, tau: float):
    n_a, n_z, n_x = q.n_a, q.n_z, q.n_x
    m = n_a + 1 + n_z
    c = n_a  # index of the scalar row
    zs = slice(n_a + 1, m)

    def sym(top_a, top_A, cc, half_b, zz):
        X = np.zeros((m, m))
        X[:n_a, c] = X[c, :n_a] = top_a
        X[:n_a, zs] = top_A
        X[zs, :n_a] = np.asarray(top_A).T
        X[c, c] = cc
        X[c, zs] = X[zs, c] = -0.5 * np.asarray(half_b)
        X[zs, zs] = zz
        return X

    C0 = sym(q.a0, q.A0, tau - q.c0, q.b0, 0.0)
    C0[:n_a, :n_a] = np.eye(n_a)
    cols = [conic.svec(sym(q.aX[:, j], q.AX[j], -q.cX[j], q.bX[:, j], 0.0)) for j in range(n_x)]
    Ck = sym(np.zeros(n_a), np.zeros((n_a, n_z)), 0.0, np.zeros(n_z), np.eye(n_z))
    Cl = sym(np.zeros(n_a), np.zeros((n_a, n_z)), -q.r**2, np.zeros(n_z), np.eye(n_z))
    return m, conic.svec(C0), cols, conic.svec(Ck), conic.svec(Cl)


def nominal_minimum(q: QuadraticModel, X: DecisionSet) -> float:
    """``min_{x in X} g(x, 0) = ||a(x)||^2 + c(x)``."""
    x = cp.Variable(q.n_x)
    cons = []
    if X.A.shape[0]:
        cons.append(X.A @ x <= X.b)
    if X.E is not None and X.E.shape[0]:
        cons.append(X.E @ x == X.e)
    obj = cp.sum_squares(q.a0 + q.aX @ x) + q.c0 + q.cX @ x
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL")
    return float(prob.value)


def quadratic_satisficing(q: QuadraticModel, X: DecisionSet, tau: float, options: dict | None = None):
    """Return ``(k, x, lam)`` minimizing ``k`` subject to the LMI."""
    m, c0, cols, ck, cl = _lmi_pieces(q, tau)
    b = ProgramBuilder()
    x = b.var(q.n_x, "x")
    k = b.var(1, "k")
    lam = b.var(1, "lam")
    add_decision_set(b, x, X)
    b.nonneg(k)
    b.nonneg(lam)
    lmi = k.lmul(ck.reshape(-1, 1)) + lam.lmul(cl.reshape(-1, 1)) + c0
    if q.n_x:
        lmi = lmi + x.lmul(np.stack(cols, axis=1))
    b.add(lmi, conic.psd(m))
    prog, res, _ = run_program(b, k, options)
    if res.status == "infeasible":
        raise TargetTooLowError(
            f"target {tau} too low; the nominal minimum is {nominal_minimum(q, X):.6g}", nominal_minimum(q, X)
        )
    if res.status != "optimal":
        raise SolverError(f"quadratic SDP ended with status {res.status}", res.status)
    return float(res.block(prog, "k")[0]), res.block(prog, "x"), float(res.block(prog, "lam")[0])
