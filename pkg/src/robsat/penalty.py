"""Polyhedral supports and penalties.

A penalty is described by ``(M, N, s, t)`` through

    p(zeta) = max { lam @ zeta - eta : M lam + N mu + s eta <= t, eta >= 0 }

and a support by ``Z = {z : H z <= h}``.  All evaluations are small LPs
solved with HiGHS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ContractError, InvariantViolation, UnsupportedError

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    """Minimize ``c @ x`` with HiGHS.  Returns the scipy result object."""
    return linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs", options=LP_OPTIONS
    )


@dataclass
class PolyhedralSupport:
    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.H.shape[0] != self.h.shape[0]:
            raise ContractError("H and h row counts differ")

    @property
    def n_z(self) -> int:
        return self.H.shape[1]

    @property
    def n_h(self) -> int:
        return self.H.shape[0]

    def validate(self) -> None:
        bad = np.flatnonzero(self.h < 0)
        if bad.size:
            raise ContractError(f"h has negative entries at rows {bad.tolist()}, so 0 is not in Z")

    def contains(self, z, tol: float = 1e-9) -> bool:
        return bool(np.all(self.H @ np.asarray(z, dtype=float) <= self.h + tol))

    def shifted(self, zhat) -> "PolyhedralSupport":
        """The set ``{zeta : zeta + zhat in Z}``."""
        return PolyhedralSupport(self.H, self.h - self.H @ np.asarray(zhat, dtype=float))

    def bounding_box(self):
        """Coordinate bounds from 2 n_z support LPs; infinite when unbounded."""
        lo = np.empty(self.n_z)
        hi = np.empty(self.n_z)
        for i in range(self.n_z):
            for sign, out in ((1.0, lo), (-1.0, hi)):
                c = np.zeros(self.n_z)
                c[i] = sign
                res = lp(c, self.H, self.h, bounds=[(None, None)] * self.n_z)
                if res.status == 3:
                    out[i] = -sign * np.inf
                else:
                    out[i] = sign * res.fun
        return lo, hi

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    @staticmethod
    def box(lo, hi) -> "PolyhedralSupport":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        n = lo.shape[0]
        return PolyhedralSupport(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))


@dataclass
class PolyhedralPenalty:
    M: np.ndarray
    N: np.ndarray
    s: np.ndarray
    t: np.ndarray
    tag: dict = field(default_factory=dict)

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.N = np.asarray(self.N, dtype=float).reshape(self.M.shape[0], -1)
        self.s = np.asarray(self.s, dtype=float).ravel()
        self.t = np.asarray(self.t, dtype=float).ravel()
        m = self.M.shape[0]
        if self.s.shape[0] != m or self.t.shape[0] != m:
            raise ContractError("M, N, s, t must share the row count")

    @property
    def n_z(self) -> int:
        return self.M.shape[1]

    @property
    def n_mu(self) -> int:
        return self.N.shape[1]

    @property
    def n_m(self) -> int:
        return self.M.shape[0]

    @property
    def is_norm(self) -> bool:
        return bool(np.all(self.s == 0))

    def to_dict(self) -> dict:
        if self.tag.get("type") == "budgeted":
            return dict(self.tag)
        return {"M": self.M.tolist(), "N": self.N.tolist(), "s": self.s.tolist(), "t": self.t.tolist()}


@dataclass
class InnerMaxCertificate:
    value: float
    beta: np.ndarray
    eta: float
    mu: np.ndarray


@dataclass
class ValidationReport:
    origin: bool
    strict_interior: bool
    bounded: bool
    eta_bounded: bool
    interior_slack: float

    @property
    def ok(self) -> bool:
        return self.origin and self.strict_interior and self.bounded


def budgeted_norm(n: int, gamma: int) -> PolyhedralPenalty:
    """Sum of the ``gamma`` largest absolute entries."""
    if not (1 <= gamma <= n):
        raise ContractError(f"gamma must lie in [1, {n}], got {gamma}")
    I = np.eye(n)
    z = np.zeros((1, n))
    M = np.vstack([z, I, -I, np.zeros((n, n))])
    N = np.vstack([np.ones((1, n)), -I, -I, I])
    t = np.concatenate([[gamma], np.zeros(2 * n), np.ones(n)])
    return PolyhedralPenalty(M, N, np.zeros(3 * n + 1), t, tag={"type": "budgeted", "n": n, "gamma": gamma})


def penalty_from_dict(d: dict, n_z: int | None = None) -> PolyhedralPenalty:
    if d.get("type") == "budgeted":
        n = int(d.get("n", n_z))
        return budgeted_norm(n, int(d["gamma"]))
    return PolyhedralPenalty(d["M"], d["N"], d["s"], d["t"])


def _v_system(p: PolyhedralPenalty):
    """Inequality rows of V over (lam, mu, eta)."""
    return np.hstack([p.M, p.N, p.s[:, None]]), p.t


def eval_penalty(p: PolyhedralPenalty, zeta) -> float:
    zeta = np.asarray(zeta, dtype=float).ravel()
    if zeta.shape[0] != p.n_z:
        raise ContractError("zeta has the wrong length")
    A, b = _v_system(p)
    c = np.concatenate([-zeta, np.zeros(p.n_mu), [1.0]])
    bounds = [(None, None)] * (p.n_z + p.n_mu) + [(0, None)]
    res = lp(c, A, b, bounds=bounds)
    if res.status == 3:
        raise InvariantViolation("penalty LP unbounded: V is not bounded")
    if res.status != 0:
        raise InvariantViolation(f"penalty LP failed: {res.message}")
    return float(-res.fun)


def eval_dual_norm(p: PolyhedralPenalty, zeta) -> float:
    """``min { delta : M zeta + N mu <= delta t, delta >= 0 }``."""
    if not p.is_norm:
        raise UnsupportedError("dual norm requires s = 0")
    zeta = np.asarray(zeta, dtype=float).ravel()
    A = np.hstack([p.N, -p.t[:, None]])
    b = -p.M @ zeta
    c = np.zeros(p.n_mu + 1)
    c[-1] = 1.0
    res = lp(c, A, b, bounds=[(None, None)] * p.n_mu + [(0, None)])
    if res.status != 0:
        raise InvariantViolation(f"dual norm LP failed: {res.message}")
    return float(res.fun)


def validate_assumption3(p: PolyhedralPenalty) -> ValidationReport:
    nz, nmu = p.n_z, p.n_mu
    res = lp(np.zeros(nmu), p.N, p.t, bounds=[(None, None)] * nmu) if nmu else None
    origin = bool(np.all(p.t >= 0)) if nmu == 0 else res.status == 0

    margin = 1e-8 * (1.0 + np.max(np.abs(p.t), initial=0.0))
    # maximize sigma s.t. N mu + sigma <= t, sigma <= 1
    A = np.hstack([p.N, np.ones((p.n_m, 1))])
    c = np.zeros(nmu + 1)
    c[-1] = -1.0
    res = lp(c, A, p.t, bounds=[(None, None)] * nmu + [(None, 1.0)])
    slack = -res.fun if res.status == 0 else -np.inf
    strict = bool(slack > margin)

    Av, bv = _v_system(p)
    bounds = [(None, None)] * (nz + nmu) + [(0, None)]
    bounded = True
    for i in range(nz):
        for sign in (1.0, -1.0):
            c = np.zeros(nz + nmu + 1)
            c[i] = -sign
            r = lp(c, Av, bv, bounds=bounds)
            if r.status != 0:
                bounded = False
    c = np.zeros(nz + nmu + 1)
    c[-1] = -1.0
    eta_bounded = lp(c, Av, bv, bounds=bounds).status == 0
    return ValidationReport(origin, strict, bounded, bool(eta_bounded), float(slack))


def support_function(a, Z: PolyhedralSupport) -> InnerMaxCertificate:
    """``max { a @ z : z in Z }`` through its dual ``min { h @ beta : H' beta = a, beta >= 0 }``."""
    a = np.asarray(a, dtype=float).ravel()
    res = lp(Z.h, A_eq=Z.H.T, b_eq=a, bounds=[(0, None)] * Z.n_h)
    if res.status == 2:
        return InnerMaxCertificate(np.inf, np.full(Z.n_h, np.nan), 0.0, np.zeros(0))
    if res.status != 0:
        raise InvariantViolation(f"support LP failed: {res.message}")
    return InnerMaxCertificate(float(res.fun), res.x, 0.0, np.zeros(0))


def inner_max(a, k: float, Z: PolyhedralSupport, p: PolyhedralPenalty) -> InnerMaxCertificate:
    """``max_{z in Z} a @ z - k p(z)`` as the LP

    ``min h @ beta + eta  s.t.  M (a - H' beta) + N mu + s eta <= k t, beta, eta >= 0``.

    ``k = 0`` reduces to the support function of ``Z`` and is handled on its own.
    """
    a = np.asarray(a, dtype=float).ravel()
    if k < 0:
        raise ContractError("k must be nonnegative")
    if a.shape[0] != Z.n_z or p.n_z != Z.n_z:
        raise ContractError("dimension mismatch between a, Z and p")
    if k == 0:
        return support_function(a, Z)
    nh, nmu = Z.n_h, p.n_mu
    A = np.hstack([-p.M @ Z.H.T, p.N, p.s[:, None]])
    b = k * p.t - p.M @ a
    c = np.concatenate([Z.h, np.zeros(nmu), [1.0]])
    bounds = [(0, None)] * nh + [(None, None)] * nmu + [(0, None)]
    res = lp(c, A, b, bounds=bounds)
    if res.status == 2:
        return InnerMaxCertificate(np.inf, np.full(nh, np.nan), np.nan, np.full(nmu, np.nan))
    if res.status != 0:
        raise InvariantViolation(f"inner max LP failed: {res.message}")
    x = res.x
    return InnerMaxCertificate(float(res.fun), x[:nh], float(x[-1]), x[nh : nh + nmu])


def penalty_values(p: PolyhedralPenalty, Z) -> np.ndarray:
    """Evaluate ``p`` on each row of ``Z``; budgeted norms use the sorted closed form."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if p.tag.get("type") == "budgeted":
        g = int(p.tag["gamma"])
        a = -np.sort(-np.abs(Z), axis=1)
        return np.sum(a[:, :g], axis=1)
    return np.array([eval_penalty(p, z) for z in Z])
