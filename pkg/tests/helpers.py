"""Random model generators shared by the test modules."""

import numpy as np

from robsat.engine import DecisionSet, QuadraticModel, SatisficingModel, lp_recourse, piecewise_max
from robsat.penalty import PolyhedralSupport, budgeted_norm


def random_support(rng, n_z):
    lo = -rng.uniform(0.5, 1.5, n_z)
    hi = rng.uniform(0.5, 1.5, n_z)
    return PolyhedralSupport.box(lo, hi)


def random_samples(rng, support, omega):
    lo, hi = support.bounding_box()
    return lo / 2 + (hi - lo) / 2 * rng.random((omega, support.n_z))


def random_piecewise_model(rng, n_z=None, n_x=2, n_rows=3, omega=3):
    n_z = n_z or int(rng.integers(1, 5))
    Fx = rng.standard_normal((n_rows, n_x))
    FX = 0.5 * rng.standard_normal((n_x, n_rows, n_z))
    ev = piecewise_max(rng.standard_normal(n_rows), rng.standard_normal((n_rows, n_z)), Fx, FX)
    sup = random_support(rng, n_z)
    pen = budgeted_norm(n_z, int(rng.integers(1, n_z + 1)))
    return SatisficingModel(ev, sup, pen, random_samples(rng, sup, omega), DecisionSet.simplex(n_x))


def random_lp_model(rng, n_z=None, n_x=2, n_f=3, omega=3):
    """``B = [I; G]`` with ``G >= 0`` keeps the recourse complete, ``d > 0`` keeps it bounded."""
    n_z = n_z or int(rng.integers(1, 4))
    n_y = n_f
    B = np.vstack([np.eye(n_y), rng.random((n_f - n_y, n_y))]) if n_f > n_y else np.eye(n_y)
    d = rng.uniform(0.5, 1.5, n_y)
    ev = lp_recourse(
        B, d, rng.standard_normal(n_f), rng.standard_normal((n_f, n_z)), rng.standard_normal((n_f, n_x)),
        0.5 * rng.standard_normal((n_x, n_f, n_z)),
    )
    sup = random_support(rng, n_z)
    pen = budgeted_norm(n_z, int(rng.integers(1, n_z + 1)))
    return SatisficingModel(ev, sup, pen, random_samples(rng, sup, omega), DecisionSet.simplex(n_x))


def random_quadratic(rng, n_z=None, n_x=2):
    n_z = n_z or int(rng.integers(1, 4))
    n_a = n_z
    return QuadraticModel(
        A0=rng.standard_normal((n_a, n_z)),
        a0=rng.standard_normal(n_a),
        b0=rng.standard_normal(n_z),
        c0=float(rng.standard_normal()),
        r=1.0,
        AX=0.5 * rng.standard_normal((n_x, n_a, n_z)),
        aX=rng.standard_normal((n_a, n_x)),
        bX=rng.standard_normal((n_z, n_x)),
        cX=rng.standard_normal(n_x),
    )


def quadratic_g(q, x, Z):
    """``||A(x) z + a(x)||^2 + b(x) @ z + c(x)`` for each row of ``Z``."""
    A = q.A0 + np.tensordot(x, q.AX, axes=1)
    a = q.a0 + q.aX @ x
    b = q.b0 + q.bX @ x
    c = q.c0 + q.cX @ x
    r = Z @ A.T + a
    return np.sum(r * r, axis=1) + Z @ b + c


def ball_grid(n_z, density=41, r=1.0):
    """Cube grid with the points outside the ball projected onto its sphere."""
    axes = [np.linspace(-r, r, density)] * n_z
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n_z)
    norms = np.linalg.norm(pts, axis=1)
    out = norms > r
    pts[out] *= (r / norms[out])[:, None]
    return pts


def quadratic_grid_gap(q, x, k, tau, density=41):
    """``max_z g(x, z) - tau - k ||z||^2`` over the grid."""
    Z = ball_grid(q.n_z, density, q.r)
    return float(np.max(quadratic_g(q, x, Z) - tau - k * np.sum(Z * Z, axis=1)))
