"""Ground-truth checks that do not go through the reformulation engine."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from . import conic
from .casting import expand_program
from .conic import Affine, ProgramBuilder
from .errors import ContractError, SolverError
from .penalty import PolyhedralPenalty, PolyhedralSupport, lp, penalty_values

DEFAULT_DENSITY = 41


@dataclass
class VertexSet:
    vertices: np.ndarray
    H: np.ndarray
    h: np.ndarray


def vertices(H, h, max_dim: int = 8, max_rows: int = 24, override: bool = False) -> VertexSet:
    """All basic feasible points of ``{z : H z <= h}`` by active-set enumeration."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).ravel()
    m, n = H.shape
    if not override and (n > max_dim or m > max_rows):
        raise ContractError(f"vertex enumeration guard: n_z={n}, n_h={m} exceeds ({max_dim}, {max_rows})")
    lo, hi = PolyhedralSupport(H, h).bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ContractError("polytope is unbounded")
    found = []
    for rows in itertools.combinations(range(m), n):
        A = H[list(rows)]
        Q, R = np.linalg.qr(A)
        if np.min(np.abs(np.diag(R))) < 1e-10 * max(1.0, np.max(np.abs(R))):
            continue
        v = np.linalg.solve(A, h[list(rows)])
        if np.all(H @ v <= h + 1e-8):
            if not any(np.max(np.abs(v - u)) <= 1e-9 for u in found):
                found.append(v)
    return VertexSet(np.array(found).reshape(-1, n), H, h)


# -- evaluation -------------------------------------------------------------


def eval_g(ev, x, z, options=None) -> float:
    """Optimal value of the recourse problem at ``(x, z)``."""
    rhs = ev.rhs(x, z)
    if ev.kind == "piecewise":
        return float(np.max(rhs))
    if ev.all_nonneg:
        res = linprog(ev.d, A_ub=-ev.B, b_ub=-rhs, bounds=[(None, None)] * ev.n_y, method="highs")
        if res.status != 0:
            raise SolverError(f"recourse LP failed: {res.message}", "numerical_error")
        return float(res.fun)
    b = ProgramBuilder()
    y = b.var(ev.n_y, "y")
    b.add(y.lmul(ev.B) - rhs, ev.cone)
    prog = expand_program(b.build(y.lmul(ev.d.reshape(1, -1))))
    res = conic.solve(prog, options)
    if res.status != "optimal":
        raise SolverError(f"recourse problem status {res.status}", "numerical_error")
    return res.objective_value


def g_values(ev, x, Z) -> np.ndarray:
    Z = np.atleast_2d(Z)
    if ev.closed_form is not None:
        return np.asarray(ev.closed_form(x, Z), dtype=float)
    return np.array([eval_g(ev, x, z) for z in Z])


def grid_points(support: PolyhedralSupport, density: int | None = None, n_random: int = 20000, seed: int = 0):
    """Grid over the bounding box of the support, restricted to the support."""
    n = support.n_z
    lo, hi = support.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ContractError("grid check needs a bounded support")
    if n <= 4:
        if density is None:
            density = DEFAULT_DENSITY if n < 4 else 11
        axes = [np.linspace(lo[i], hi[i], density) for i in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    else:
        rng = np.random.default_rng(seed)
        pts = lo + (hi - lo) * rng.random((n_random, n))
        try:
            pts = np.vstack([pts, vertices(support.H, support.h, override=True).vertices])
        except ContractError:
            pass
    pts = np.vstack([pts, np.zeros((1, n))])
    keep = np.all(pts @ support.H.T <= support.h + 1e-9, axis=1)
    return pts[keep]


def worst_case_grid(ev, support: PolyhedralSupport, penalty: PolyhedralPenalty, x, k: float, density=None, zhat=None):
    """Grid lower bound on ``sup_{z in Z - zhat} g(x, zhat + z) - k p(z)``.

    Returns ``(value, argmax)`` with ``argmax`` in the shifted coordinates.
    """
    zhat = np.zeros(support.n_z) if zhat is None else np.asarray(zhat, dtype=float)
    Zs = support.shifted(zhat)
    pts = grid_points(Zs, density)
    vals = g_values(ev, x, pts + zhat) - k * penalty_values(penalty, pts)
    i = int(np.argmax(vals))
    return float(vals[i]), pts[i]


def exact_worst_case_piecewise(ev, x, support: PolyhedralSupport, penalty: PolyhedralPenalty, k: float, zhat=None):
    """``max_i f_i + inner_max(F_i', k)`` for ``g = max_i f_i(x) + F_i(x) z``."""
    from .penalty import inner_max

    if ev.kind != "piecewise":
        raise ContractError("exact oracle needs an evaluation of the form 1 y >= f + F z")
    zhat = np.zeros(support.n_z) if zhat is None else np.asarray(zhat, dtype=float)
    Zs = support.shifted(zhat)
    f = ev.rhs(x, zhat)
    F = ev.F(x)
    return max(f[i] + inner_max(F[i], k, Zs, penalty).value for i in range(ev.n_f))


def inner_max_vertex_oracle(a, k: float, Z: PolyhedralSupport, p: PolyhedralPenalty, cap: float = 1e4) -> float:
    """Primal evaluation of ``max_{z in Z} a @ z - k p(z)``.

    ``p`` is written as a max over vertices of its lifted polytope (with a box
    cap on the unbounded directions), then the max becomes an epigraph LP.
    """
    a = np.asarray(a, dtype=float)
    n = Z.n_z
    if k == 0:
        res = lp(-a, Z.H, Z.h, bounds=[(None, None)] * n)
        return np.inf if res.status == 3 else float(-res.fun)
    nz, nmu = p.n_z, p.n_mu
    dim = nz + nmu + 1
    A_v = np.vstack([np.hstack([p.M, p.N, p.s[:, None]]), -np.eye(dim)[-1:]])
    b_v = np.concatenate([p.t, [0.0]])
    rows, rhs = [A_v], [b_v]
    # cap only the directions along which the lifted polytope is unbounded
    for i in range(dim):
        for sign in (1.0, -1.0):
            c = np.zeros(dim)
            c[i] = -sign
            if lp(c, A_v, b_v, bounds=[(None, None)] * dim).status == 3:
                row = np.zeros(dim)
                row[i] = sign
                rows.append(row[None, :])
                rhs.append([cap])
    VS = vertices(np.vstack(rows), np.concatenate(rhs), override=True)
    lam = VS.vertices[:, :nz]
    eta = VS.vertices[:, -1]
    # max a z - k s  s.t.  lam_v z - s <= eta_v,  H z <= h
    A = np.vstack([np.hstack([lam, -np.ones((len(lam), 1))]), np.hstack([Z.H, np.zeros((Z.n_h, 1))])])
    b = np.concatenate([eta, Z.h])
    c = np.concatenate([-a, [k]])
    res = lp(c, A, b, bounds=[(None, None)] * (n + 1))
    if res.status == 3:
        return np.inf
    return float(-res.fun)


# -- recourse assumptions ---------------------------------------------------


@dataclass
class RecourseReport:
    bounded: bool
    complete: bool
    bounded_value: float
    trials: int
    failures: list = field(default_factory=list)
    note: str = "complete recourse is sampled evidence, not a proof"

    @property
    def witness(self):
        return self.failures[0] if self.failures else None


def _feasible(B, K, v, options=None) -> bool:
    b = ProgramBuilder()
    y = b.var(B.shape[1])
    b.add(y.lmul(B) - v, K)
    prog = expand_program(b.build(Affine.constant([0.0], b.num_vars)))
    res = conic.solve(prog, options)
    return res.status == "optimal"


def check_complete_bounded_recourse(B, d, K: conic.ConeDescriptor, trials: int = 64, seed: int = 0, scale: float = 10.0):
    """Bounded: ``min d @ y`` over ``B y in K`` is 0.  Complete: ``B y - v in K`` solvable.

    Directions are the coordinate vectors ``+e_i`` then ``-e_i`` followed by
    random unit vectors, all scaled by ``scale``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = np.asarray(d, dtype=float)
    n = B.shape[0]
    b = ProgramBuilder()
    y = b.var(B.shape[1])
    b.add(y.lmul(B), K)
    res = conic.solve(expand_program(b.build(y.lmul(d.reshape(1, -1)))))
    bval = res.objective_value if res.status == "optimal" else -np.inf
    bounded = res.status == "optimal" and bval >= -1e-7

    rng = np.random.default_rng(seed)
    dirs = [e for e in np.eye(n)] + [-e for e in np.eye(n)]
    dirs = dirs[:trials]
    while len(dirs) < trials:
        u = rng.standard_normal(n)
        dirs.append(u / np.linalg.norm(u))
    failures = [v for v in dirs if not _feasible(B, K, scale * v)]
    return RecourseReport(bool(bounded), not failures, float(bval), len(dirs), failures)


# -- probability bound -------------------------------------------------------

THETA = {"uniform": 1.0 / 3.0, "twopoint": 1.0}


def budget_bound(n: int, c: float, theta: float) -> float:
    return float(np.exp(-((theta * np.sqrt(n) - c) ** 2) / (2.0 * theta)))


def mc_budget_bound(n: int, c: float, distribution: str = "uniform", trials: int = 10**6, seed: int = 0, chunk: int = 50000):
    """Empirical ``P[||z||_1 <= c sqrt(n)]`` and the analytic bound.

    Returns ``(p_hat, bound, standard_error)``.
    """
    if distribution not in THETA:
        raise ContractError(f"unknown distribution {distribution!r}")
    theta = THETA[distribution]
    if not (0 < c < theta * np.sqrt(n)):
        raise ContractError(f"c must lie in (0, {theta * np.sqrt(n):.4g})")
    rng = np.random.Generator(np.random.Philox(seed))
    r = c * np.sqrt(n)
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        if distribution == "uniform":
            z = rng.uniform(-1.0, 1.0, size=(m, n))
        else:
            z = rng.choice([-1.0, 1.0], size=(m, n))
        hits += int(np.sum(np.abs(z).sum(axis=1) <= r))
        done += m
    p = hits / trials
    return p, budget_bound(n, c, theta), float(np.sqrt(p * (1 - p) / trials))


# -- portfolio certainty equivalent --------------------------------------------


def certainty_equivalent(x, mu, sigma, beta, a: float) -> float:
    """Certainty equivalent of ``x @ z`` under exponential utility with independent two-point returns."""
    x, mu, sigma, beta = (np.asarray(v, dtype=float) for v in (x, mu, sigma, beta))
    if not a > 0:
        raise ContractError("a must be positive")
    if np.any((beta <= 0) | (beta >= 1)):
        raise ContractError("beta must lie in (0, 1)")
    if np.any(x < -1e-9) or abs(x.sum() - 1.0) > 1e-6:
        raise ContractError("x must lie on the simplex")
    s = x * sigma * np.sqrt(beta * (1 - beta))
    up = -a * s / beta
    dn = a * s / (1 - beta)
    terms = logsumexp(np.stack([up, dn]), axis=0, b=np.stack([beta, 1 - beta]))
    return float(x @ mu - terms.sum() / a)
