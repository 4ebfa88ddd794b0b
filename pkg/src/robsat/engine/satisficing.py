"""Empirical optimum and the data-driven satisficing problem with affine dual adaptation.

For each sample the constraint ``sup_z g(x, zhat + z) - k p(z) <= upsilon`` is
dualized twice (recourse problem, then the inner max over the support) and the
dual multipliers ``beta, mu, eta`` are restricted to affine functions of the
recourse dual ``rho``.  What remains is a family of constraints

    gamma + Gamma rho <= 0   for all rho in {rho in K* : B' rho = d}

each discharged by :func:`robust_counterpart`, which never forms ``K*``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .. import conic
from ..casting import expand_program
from ..conic import Affine, ProgramBuilder
from ..errors import InvariantViolation, SolverError, TargetTooLowError
from .model import DecisionSet, EvaluationFunction, SatisficingModel

TARGET_MARGIN = 1e-9


def add_decision_set(builder: ProgramBuilder, x: Affine, X: DecisionSet) -> None:
    if X.A.shape[0]:
        builder.nonneg(x.lmul(-X.A) + X.b)
    if X.E is not None and X.E.shape[0]:
        builder.equal(x.lmul(X.E) - X.e)


def rhs_affine(ev: EvaluationFunction, x: Affine, zhat) -> Affine:
    """``f(x) + F(x) zhat`` as an affine expression in ``x``."""
    zhat = np.asarray(zhat, dtype=float)
    const = ev.f0 + ev.F0 @ zhat
    if ev.n_x == 0:
        return Affine.constant(const)
    lin = ev.Fx + np.einsum("jfz,z->fj", ev.FX, zhat)
    return x.lmul(lin) + const


def ft_affine(ev: EvaluationFunction, x: Affine, L: np.ndarray) -> Affine:
    """Row-major ``vec(L F(x)')`` as an affine expression in ``x``."""
    const = (L @ ev.F0.T).ravel()
    if ev.n_x == 0:
        return Affine.constant(const)
    cols = np.stack([(L @ ev.FX[j].T).ravel() for j in range(ev.n_x)], axis=1)
    return x.lmul(cols) + const


def robust_counterpart(builder: ProgramBuilder, gamma: Affine, Gamma: Affine, B, d, K: conic.ConeDescriptor) -> Affine:
    """Impose ``gamma + Gamma rho <= 0`` for every ``rho in K*`` with ``B' rho = d``.

    ``Gamma`` is the row-major vectorization of an ``n_gamma x n_f`` matrix.
    Row ``i`` holds iff some ``v`` has ``gamma_i + d @ v <= 0`` and
    ``B v - Gamma_i' in K``.  Returns the fresh ``V`` (row-major).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    n_g = gamma.rows
    n_f, n_y = B.shape
    if Gamma.rows != n_g * n_f:
        raise InvariantViolation("Gamma does not match gamma and B")
    V = builder.var(n_g * n_y)
    I = sp.eye(n_g)
    builder.nonneg(-(gamma + V.lmul(sp.kron(I, d.reshape(1, -1)))))
    builder.add(V.lmul(sp.kron(I, B)) - Gamma, K.repeat(n_g))
    return V


@dataclass
class SatisficingResult:
    k: float
    x: np.ndarray
    upsilon: np.ndarray
    tau: float
    coeffs: list
    status: str
    stats: dict = field(default_factory=dict)
    Z0: float | None = None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "x": np.asarray(self.x).tolist(),
            "upsilon": np.asarray(self.upsilon).tolist(),
            "tau": self.tau,
            "Z0": self.Z0,
            "stats": self.stats,
        }


def run_program(builder: ProgramBuilder, objective: Affine, options: dict | None = None):
    t0 = time.perf_counter()
    prog = expand_program(builder.build(objective))
    build = time.perf_counter() - t0
    res = conic.solve(prog, options)
    stats = {
        "vars": prog.num_vars,
        "rows": prog.num_rows,
        "build_ms": 1e3 * build,
        "solve_ms": 1e3 * res.solver_info.get("solve_s", float("nan")),
    }
    return prog, res, stats


def empirical_optimum(model: SatisficingModel, options: dict | None = None):
    """``min_{x in X} (1/Omega) sum_w g(x, zhat_w)`` as one conic program."""
    ev = model.eval
    b = ProgramBuilder()
    x = b.var(ev.n_x, "x")
    add_decision_set(b, x, model.decision_set)
    Y = b.var(model.omega * ev.n_y, "y")
    for w, zhat in enumerate(model.samples):
        y = Y[w * ev.n_y : (w + 1) * ev.n_y]
        b.add(y.lmul(ev.B) - rhs_affine(ev, x, zhat), ev.cone)
    obj = Y.lmul(np.tile(ev.d, model.omega).reshape(1, -1) / model.omega)
    prog, res, _ = run_program(b, obj, options)
    if res.status == "unbounded":
        raise InvariantViolation("empirical problem is unbounded")
    if res.status != "optimal":
        raise SolverError(f"empirical optimum: status {res.status}", res.status)
    return res.objective_value, res.block(prog, "x")


def resolve_target(model: SatisficingModel, tau=None, options=None):
    """Return ``(tau, Z0)``; ``Z0`` is computed when the target is an offset."""
    target = dict(model.target)
    if tau is not None:
        target = {"tau": tau}
    if "lambda" in target:
        Z0, _ = empirical_optimum(model, options)
        return Z0 + float(target["lambda"]), Z0
    if "tau" in target:
        return float(target["tau"]), None
    raise ValueError("no target given")


def solve_satisficing(model: SatisficingModel, tau=None, options: dict | None = None, Z0=None) -> SatisficingResult:
    """Minimize ``k`` over the affine dual adaptation of the data-driven model."""
    ev, Zs, pen = model.eval, model.support, model.penalty
    tau, Z0_t = resolve_target(model, tau, options)
    Z0 = Z0 if Z0 is not None else Z0_t

    H, h = Zs.H, Zs.h
    M, N, s, t = pen.M, pen.N, pen.s, pen.t
    n_f, n_y, n_h, n_mu, n_m = ev.n_f, ev.n_y, Zs.n_h, pen.n_mu, pen.n_m
    I_f = sp.eye(n_f)
    MHt = M @ H.T

    b = ProgramBuilder()
    x = b.var(ev.n_x, "x")
    k = b.var(1, "k")
    ups = b.var(model.omega, "upsilon")
    add_decision_set(b, x, model.decision_set)
    b.nonneg(k)
    b.nonneg(tau - ups.sum() * (1.0 / model.omega))

    MFt = ft_affine(ev, x, M)
    # with s = 0 the multiplier eta only adds cost, so it is fixed at zero
    use_eta = bool(np.any(s != 0))
    blocks = []
    for w, zhat in enumerate(model.samples):
        hw = h - H @ zhat
        pb = b.var(n_h, f"pi_beta_{w}")
        Pb = b.var(n_h * n_f, f"Pi_beta_{w}")
        pm = b.var(n_mu, f"pi_mu_{w}")
        Pm = b.var(n_mu * n_f, f"Pi_mu_{w}")
        pe = b.var(1 if use_eta else 0, f"pi_eta_{w}")
        Pe = b.var(n_f if use_eta else 0, f"Pi_eta_{w}")
        blocks.append(w)

        g0 = pb.lmul(hw.reshape(1, -1)) - ups[w]
        g1 = pb.lmul(-MHt) + pm.lmul(N) - k.lmul(t.reshape(-1, 1))
        G0 = rhs_affine(ev, x, zhat) + Pb.lmul(sp.kron(hw.reshape(1, -1), I_f))
        G1 = MFt + Pb.lmul(sp.kron(-MHt, I_f)) + Pm.lmul(sp.kron(N, I_f))
        if use_eta:
            gamma = Affine.vstack([g0 + pe, g1 + pe.lmul(s.reshape(-1, 1)), -pb, -pe])
            Gamma = Affine.vstack([G0 + Pe, G1 + Pe.lmul(sp.kron(s.reshape(-1, 1), I_f)), -Pb, -Pe])
        else:
            gamma = Affine.vstack([g0, g1, -pb])
            Gamma = Affine.vstack([G0, G1, -Pb])
        robust_counterpart(b, gamma, Gamma, ev.B, ev.d, ev.cone)

    prog, res, stats = run_program(b, k, options)
    if res.status != "optimal":
        if Z0 is None:
            try:
                Z0, _ = empirical_optimum(model, options)
            except SolverError:
                Z0 = None
        if Z0 is not None and tau <= Z0 - TARGET_MARGIN:
            raise TargetTooLowError(f"target {tau} is not above the empirical optimum {Z0}", Z0)
        if Z0 is not None and tau > Z0 + 1e-6 and res.status == "infeasible":
            raise InvariantViolation(f"satisficing problem infeasible although tau - Z0 = {tau - Z0:.3g} > 0")
        raise SolverError(f"satisficing solve ended with status {res.status}", res.status)

    coeffs = []
    for w in blocks:
        coeffs.append(
            {
                name: res.block(prog, f"{name}_{w}")
                for name in ("pi_beta", "Pi_beta", "pi_mu", "Pi_mu", "pi_eta", "Pi_eta")
            }
        )
        c = coeffs[-1]
        c["Pi_beta"] = c["Pi_beta"].reshape(n_h, n_f)
        c["Pi_mu"] = c["Pi_mu"].reshape(n_mu, n_f)
        c["Pi_eta"] = c["Pi_eta"].reshape(-1, n_f)
    return SatisficingResult(
        k=float(res.block(prog, "k")[0]),
        x=res.block(prog, "x"),
        upsilon=res.block(prog, "upsilon"),
        tau=tau,
        coeffs=coeffs,
        status=res.status,
        stats=stats,
        Z0=Z0,
    )
