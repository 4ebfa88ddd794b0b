"""Two-stage lot-sizing with transshipment.

Each node ``i`` orders ``x_i`` at unit cost ``c_i`` before the demand ``z`` is
seen.  Afterwards it may ship ``Y_ij`` to node ``j`` at unit cost ``T_ij`` and
buy ``w_i`` on the spot at unit cost ``l_i``.  The recourse cost is

    min { <T, Y> + l @ w : x + Y'1 - Y1 + w >= z, Y, w >= 0 }
      = max { rho @ (z - x) : rho in P },
    P = { 0 <= rho <= l, rho_i - rho_j <= T_ij }.

Both the robust and the satisficing variants are solved with an affine rule,
either on the primal recourse ``(Y(z), w(z))`` or on the dual multipliers
``beta(rho)``.  All four programs are LPs solved with HiGHS.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ContractError, SolverError
from .rng import stream

DEMAND_MAX = 20.0
ORDER_MAX = 20.0
TIME_GUARD = 300.0


@dataclass
class LotSizingInstance:
    c: np.ndarray
    l: np.ndarray
    T: np.ndarray
    locations: np.ndarray
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def zbar(self) -> np.ndarray:
        return np.full(self.n, DEMAND_MAX)

    def to_dict(self) -> dict:
        return {"n": self.n, "seed": self.seed, "c": self.c.tolist(), "l": self.l.tolist(), "T": self.T.tolist()}


@dataclass
class LotSizingResult:
    objective: float
    x: np.ndarray
    status: str
    timings: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "x": None if self.x is None else np.asarray(self.x).tolist(),
            "status": self.status,
            "sizes": self.sizes,
            "timings": self.timings,
        }


def gen_instance(n: int, seed: int) -> LotSizingInstance:
    """Costs uniform on [8, 10] and [18, 20]; nodes uniform on [0, 10]^2."""
    if n < 1:
        raise ContractError("n must be positive")
    rng = stream(seed, "instances")
    c = rng.uniform(8.0, 10.0, n)
    l = rng.uniform(18.0, 20.0, n)
    loc = rng.uniform(0.0, 10.0, (n, 2))
    return LotSizingInstance(c, l, cdist(loc, loc), loc, seed)


def _flow_maps(n: int) -> np.ndarray:
    """``A`` with ``A vec(Y) = Y'1 - Y1`` for row-major ``vec``."""
    one = np.ones((1, n))
    I = np.eye(n)
    return np.kron(one, I) - np.kron(I, one)


def _pair_rows(T: np.ndarray):
    """``D rho <= t`` encoding ``rho_i - rho_j <= T_ij`` for ``i != j``."""
    n = T.shape[0]
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    D = np.zeros((i.size, n))
    D[np.arange(i.size), i] = 1.0
    D[np.arange(i.size), j] = -1.0
    return D, T[i, j]


def _primal_rules(inst: LotSizingInstance, x):
    """Affine ``Y(z), w(z)``; returns the balance and sign rows as ``(alpha, B)``."""
    n = inst.n
    Y0, Ys = cp.Variable(n * n), cp.Variable((n * n, n))
    w0, Ws = cp.Variable(n), cp.Variable((n, n))
    A = _flow_maps(n)
    rows = [
        (x + A @ Y0 + w0, A @ Ys + Ws - np.eye(n)),
        (Y0, Ys),
        (w0, Ws),
    ]
    cost = (inst.T.ravel() @ Y0 + inst.l @ w0, inst.T.ravel() @ Ys + inst.l @ Ws)
    return rows, cost


def _stack(rows):
    alpha = cp.hstack([r[0] if r[0].ndim == 1 else cp.reshape(r[0], (1,), order="C") for r in rows])
    B = cp.vstack([r[1] if r[1].ndim == 2 else cp.reshape(r[1], (1, -1), order="C") for r in rows])
    return alpha, B


def _over_budget_box(alpha, B, zbar, r):
    """``alpha + B z >= 0`` for all ``0 <= z <= zbar``, ``1 @ z <= r``."""
    m, n = B.shape
    U = cp.Variable((m, n), nonneg=True)
    s = cp.Variable(m, nonneg=True)
    return [U + cp.reshape(s, (m, 1), order="C") @ np.ones((1, n)) + B >= 0, alpha - U @ zbar - r * s >= 0]


def _over_box(alpha, B, zbar):
    """``alpha + B z >= 0`` for all ``0 <= z <= zbar``."""
    U = cp.Variable(B.shape, nonneg=True)
    return [U + B >= 0, alpha - U @ zbar >= 0]


def _over_dual_set(alpha, G, inst: LotSizingInstance):
    """``alpha + G rho >= 0`` for all ``rho in P``."""
    D, t = _pair_rows(inst.T)
    m, n = G.shape
    U = cp.Variable((m, n), nonneg=True)
    V = cp.Variable((m, D.shape[0]), nonneg=True)
    return [U + V @ D + G >= 0, alpha - U @ inst.l - V @ t >= 0]


def build_lotsizing(inst: LotSizingInstance, mode: str, method: str, r: float | None = None, tau: float | None = None):
    """Return ``(problem, x)`` for one of the four affine formulations."""
    n = inst.n
    zbar = inst.zbar
    x = cp.Variable(n)
    cons = [x >= 0, x <= ORDER_MAX]
    if mode == "robust":
        if r is None or r < 0:
            raise ContractError("robust mode needs r >= 0")
        x0 = cp.Variable()
        obj = inst.c @ x + x0
        if method == "primal":
            rows, (ca, cB) = _primal_rules(inst, x)
            alpha, B = _stack(rows + [(x0 - ca, -cB)])
            cons += _over_budget_box(alpha, B, zbar, r)
        elif method == "dual":
            bi, Bs = cp.Variable(n), cp.Variable((n, n))
            hi, hs = cp.Variable(), cp.Variable(n)
            alpha, G = _stack(
                [
                    (x0 - zbar @ bi - r * hi, x - zbar @ Bs - r * hs),
                    (bi + hi, Bs + np.ones((n, 1)) @ cp.reshape(hs, (1, n), order="C") - np.eye(n)),
                    (bi, Bs),
                    (hi, hs),
                ]
            )
            cons += _over_dual_set(alpha, G, inst)
        else:
            raise ContractError(f"unknown method {method!r}")
    elif mode == "satisficing":
        if tau is None:
            raise ContractError("satisficing mode needs tau")
        k = cp.Variable(nonneg=True)
        obj = k
        if method == "primal":
            rows, (ca, cB) = _primal_rules(inst, x)
            alpha, B = _stack(rows + [(tau - inst.c @ x - ca, k * np.ones(n) - cB)])
            cons += _over_box(alpha, B, zbar)
        elif method == "dual":
            bi, Bs = cp.Variable(n), cp.Variable((n, n))
            alpha, G = _stack(
                [
                    (tau - inst.c @ x - zbar @ bi, x - zbar @ Bs),
                    (bi + k, Bs - np.eye(n)),
                    (bi, Bs),
                ]
            )
            cons += _over_dual_set(alpha, G, inst)
        else:
            raise ContractError(f"unknown method {method!r}")
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return cp.Problem(cp.Minimize(obj), cons), x


def size_counts(problem: cp.Problem) -> dict:
    m = problem.size_metrics
    out = {
        "vars": int(m.num_scalar_variables),
        "rows": int(m.num_scalar_eq_constr + m.num_scalar_leq_constr),
    }
    out["total"] = out["vars"] + out["rows"]
    return out


def run_lotsizing(
    n: int,
    seed: int,
    mode: str = "satisficing",
    method: str = "dual",
    r: float | None = None,
    tau: float | None = None,
    time_limit: float = TIME_GUARD,
    instance: LotSizingInstance | None = None,
) -> LotSizingResult:
    """Solve one affine lot-sizing formulation.  A timeout returns a partial report."""
    inst = instance if instance is not None else gen_instance(n, seed)
    t0 = time.perf_counter()
    prob, x = build_lotsizing(inst, mode, method, r, tau)
    t1 = time.perf_counter()
    opts = {"method": "highs", "time_limit": float(time_limit)}
    try:
        prob.solve(solver="SCIPY", scipy_options=opts)
    except cp.error.SolverError as exc:
        raise SolverError(f"lot-sizing solve failed: {exc}", "error") from exc
    t2 = time.perf_counter()
    timings = {"build_s": t1 - t0, "solve_s": t2 - t1}
    sizes = size_counts(prob)
    if prob.status == "optimal":
        return LotSizingResult(float(prob.value), np.asarray(x.value) + 0.0, "optimal", timings, sizes)
    if t2 - t1 >= time_limit:
        return LotSizingResult(float("nan"), None, "time_limit", timings, sizes)
    raise SolverError(f"lot-sizing solve ended with status {prob.status}", prob.status)
