"""Portfolio study: empirical, Markowitz and satisficing portfolios under exponential disutility.

Returns of asset ``i`` take the value ``mu_i + sigma_i sqrt(b (1 - b)) / b`` with
probability ``b = beta_i`` and ``mu_i - sigma_i sqrt(b (1 - b)) / (1 - b)``
otherwise.  The loss of portfolio ``x`` is ``l_a(-x @ z)`` with
``l_a(w) = (exp(a w) - 1) / a``.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from ..casting import cast, exp_disutility, perspective_depth
from ..engine import DecisionSet, SatisficingModel, cast_evaluation, empirical_optimum, solve_satisficing
from ..errors import RobsatError, SolverError
from ..oracle import certainty_equivalent
from ..penalty import PolyhedralSupport, budgeted_norm
from .rng import stream

MU = (0.12, 0.16, 0.14, 0.13, 0.15, 0.12, 0.14, 0.15)
SIGMA = (0.18, 0.22, 0.20, 0.16, 0.14, 0.10, 0.14, 0.19)
A_GRID = (1.0, 2.0, 4.0, 8.0)
GAMMA_GRID = (1, 3, 6, 8)
LAMBDA_GRID = (0.005, 0.01, 0.04, 0.07)
BENCHMARK_SEED = 2024
CASTING_MARGIN = 1e-6
# the direct program is a cross-check, so it is solved tighter than the engine default
DIRECT_OPTIONS = {"tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11, "tol_feas": 1e-11, "tol_ktratio": 1e-9, "max_iter": 1000}


@dataclass
class PortfolioConfig:
    n: int = 8
    mu: tuple = MU
    sigma: tuple = SIGMA
    a: float = 1.0
    gamma: int = 3
    lam: float = 0.01
    omega: int = 100
    seed: int = BENCHMARK_SEED
    pad: float = 0.1

    @property
    def beta(self) -> np.ndarray:
        i = np.arange(1, self.n + 1)
        return 0.5 * (1.0 + i / (self.n + 1))

    def outcomes(self):
        """``(high, low)`` return values per asset."""
        b = self.beta
        mu, s = np.asarray(self.mu[: self.n]), np.asarray(self.sigma[: self.n])
        r = s * np.sqrt(b * (1 - b))
        return mu + r / b, mu - r / (1 - b)


def gen_two_point_samples(cfg: PortfolioConfig, omega: int | None = None) -> np.ndarray:
    omega = cfg.omega if omega is None else omega
    rng = stream(cfg.seed, "samples")
    hi, lo = cfg.outcomes()
    u = rng.random((omega, cfg.n))
    return np.where(u < cfg.beta, hi, lo)


def support_bounds(samples: np.ndarray, pad: float = 0.1):
    return float(samples.min() - pad), float(samples.max() + pad)


def portfolio_model(samples: np.ndarray, a: float, gamma: int, lam: float = 0.0, pad: float = 0.1) -> SatisficingModel:
    """Satisficing model with the casted exponential disutility of ``-x @ z``."""
    samples = np.atleast_2d(samples)
    omega, n = samples.shape
    zlo, zhi = support_bounds(samples, pad)
    W = (-zhi, -zlo)
    loss = exp_disutility(a)
    cm = cast(loss, W, perspective_depth(loss, W) + CASTING_MARGIN)
    WX = np.zeros((n, 1, n))
    for j in range(n):
        WX[j, 0, j] = -1.0
    ev = cast_evaluation(cm, np.zeros(1), np.zeros((1, n)), np.zeros((1, n)), WX)
    support = PolyhedralSupport.box(np.full(n, zlo), np.full(n, zhi))
    return SatisficingModel(ev, support, budgeted_norm(n, gamma), samples, DecisionSet.simplex(n), {"lambda": lam})


def markowitz(samples: np.ndarray, a: float) -> np.ndarray:
    """``max x @ mean - a/2 x' S x`` over the simplex, ``S`` the ML covariance."""
    mean = samples.mean(axis=0)
    S = np.cov(samples, rowvar=False, bias=True)
    x = cp.Variable(samples.shape[1])
    obj = x @ mean - 0.5 * a * cp.quad_form(x, cp.psd_wrap(S))
    cp.Problem(cp.Maximize(obj), [x >= 0, cp.sum(x) == 1]).solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return _clean(x.value)


def _clean(x) -> np.ndarray:
    """Project solver output onto the simplex (removes ~1e-10 noise)."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return x / x.sum()


def direct_satisficing(samples: np.ndarray, a: float, gamma: int, tau: float, pad: float = 0.1):
    """Closed-form robust counterparts for the portfolio model.

    Every robust row ``v(rho) <= w`` over the casted dual set becomes
    ``(y - v3)(exp(-a v1 / (y - v3)) - 1)/a + v2 + P y <= w`` with
    ``y >= v3`` and ``y >= v4``.  Returns ``(k, x)``.
    """
    samples = np.atleast_2d(samples)
    om, n = samples.shape
    zlo, zhi = support_bounds(samples, pad)
    loss = exp_disutility(a)
    P = perspective_depth(loss, (-zhi, -zlo)) + CASTING_MARGIN
    zbar = zhi - samples  # (om, n)
    zlow = zlo - samples
    R = om * n

    x = cp.Variable(n)
    k = cp.Variable()
    ups = cp.Variable(om)
    bb0, bl0, m0 = cp.Variable(R), cp.Variable(R), cp.Variable(R)
    Bb, Bl, Mu = cp.Variable((R, 4)), cp.Variable((R, 4)), cp.Variable((R, 4))

    rep = sp.kron(np.ones((om, 1)), sp.eye(n))  # x repeated per sample
    blk = sp.kron(sp.eye(om), np.ones((1, n)))  # sums within a sample
    Zb = sp.csr_matrix(blk.multiply(zbar.reshape(1, -1)))
    Zl = sp.csr_matrix(blk.multiply(zlow.reshape(1, -1)))
    e1 = np.array([[1.0, 0, 0, 0]])
    xcol = cp.reshape(rep @ x, (R, 1), order="C") @ e1
    base = np.array([0.0, -P, 0.0, 1.0])

    V, Wr = [], []
    # objective rows
    V.append(cp.reshape(samples @ x, (om, 1), order="C") @ e1 + np.tile(base, (om, 1)) + Zb @ Bb - Zl @ Bl)
    Wr.append(ups - Zb @ bb0 + Zl @ bl0)
    # budget row
    V.append(blk @ Mu)
    Wr.append(gamma * k - blk @ m0)
    # |lambda| <= mu with lambda(rho) = x rho1 - beta_up + beta_lo
    V.append(xcol - Bb + Bl - Mu)
    Wr.append(bb0 - bl0 + m0)
    V.append(-xcol + Bb - Bl - Mu)
    Wr.append(-bb0 + bl0 + m0)
    # mu <= k
    V.append(Mu)
    Wr.append(k - m0)
    # beta >= 0
    V.append(-Bb)
    Wr.append(bb0)
    V.append(-Bl)
    Wr.append(bl0)
    V = cp.vstack(V)
    Wr = cp.hstack(Wr)
    rows = V.shape[0]
    y = cp.Variable(rows)
    t = cp.Variable(rows)
    s = y - V[:, 2]
    cons = [
        x >= 0,
        cp.sum(x) == 1,
        k >= 0,
        cp.sum(ups) / om <= tau,
        y >= V[:, 3],
        cp.constraints.ExpCone(-a * V[:, 0], s, t),
        (t - s) / a + V[:, 1] + P * y <= Wr,
    ]
    prob = cp.Problem(cp.Minimize(k), cons)
    best = None
    # same retry rule as the engine backend: drop equilibration if the first solve stalls
    for extra in ({}, {"equilibrate_enable": False}):
        prob = cp.Problem(prob.objective, prob.constraints)
        try:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                prob.solve(solver="CLARABEL", **DIRECT_OPTIONS, **extra)
        except cp.error.SolverError:
            continue
        if prob.status == "optimal":
            return float(k.value), _clean(x.value)
        if prob.status == "optimal_inaccurate" and best is None:
            best = (float(k.value), _clean(x.value))
    if best is None:
        raise SolverError(f"direct portfolio program status {prob.status}", prob.status)
    return best


def _cell(args):
    """Solve one ``(a, gamma, lambda)`` cell; errors are recorded, not raised."""
    samples, a, g, lam, Z0, pad, check_direct, ce = args
    row = {}
    t0 = time.perf_counter()
    try:
        model = portfolio_model(samples, a, g, lam, pad)
        res = solve_satisficing(model, Z0 + lam, Z0=Z0)
        xs = _clean(res.x)
        row.update(k=res.k, x_satisficing=xs.tolist(), ce_satisficing=ce(xs, a))
        if check_direct:
            kd, _ = direct_satisficing(samples, a, g, Z0 + lam, pad)
            row["k_direct"] = kd
    except RobsatError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["seconds"] = time.perf_counter() - t0
    return row


@dataclass
class _CE:
    mu: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray

    def __call__(self, x, a):
        return certainty_equivalent(x, self.mu, self.sigma, self.beta, a)


def run_portfolio(
    cfg: PortfolioConfig | None = None,
    a_grid=A_GRID,
    gamma_grid=GAMMA_GRID,
    lam_grid=LAMBDA_GRID,
    samples: np.ndarray | None = None,
    check_direct: bool = True,
    jobs: int = 1,
):
    """Solve every ``(a, gamma, lambda)`` cell and report certainty equivalents.

    Cells are independent; with ``jobs > 1`` they run in worker processes and
    the rows come back in grid order.
    """
    cfg = cfg or PortfolioConfig()
    samples = gen_two_point_samples(cfg) if samples is None else np.asarray(samples, dtype=float)
    ce = _CE(np.asarray(cfg.mu[: cfg.n]), np.asarray(cfg.sigma[: cfg.n]), cfg.beta)

    rows, tasks = [], []
    for a in a_grid:
        m0 = portfolio_model(samples, a, gamma_grid[0], 0.0, cfg.pad)
        Z0, x_emp = empirical_optimum(m0)
        x_emp = _clean(x_emp)
        x_mk = markowitz(samples, a)
        for g in gamma_grid:
            for lam in lam_grid:
                rows.append(
                    {
                        "a": a,
                        "gamma": g,
                        "lambda": lam,
                        "Z0": Z0,
                        "ce_empirical": ce(x_emp, a),
                        "ce_markowitz": ce(x_mk, a),
                        "x_empirical": x_emp.tolist(),
                        "x_markowitz": x_mk.tolist(),
                    }
                )
                tasks.append((samples, a, g, lam, Z0, cfg.pad, check_direct, ce))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    for row, res in zip(rows, results):
        row.update(res)
    return rows
