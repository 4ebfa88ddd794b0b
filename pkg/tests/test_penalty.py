import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robsat.errors import ContractError, InvariantViolation, UnsupportedError
from robsat.oracle import inner_max_vertex_oracle
from robsat.penalty import (
    PolyhedralPenalty,
    PolyhedralSupport,
    budgeted_norm,
    eval_dual_norm,
    eval_penalty,
    inner_max,
    penalty_from_dict,
    penalty_values,
    support_function,
    validate_assumption3,
)


def vec(n, lo=-5.0, hi=5.0):
    return st.lists(st.floats(lo, hi), min_size=n, max_size=n).map(np.array)


def top_sum(z, g):
    return np.sort(np.abs(z))[::-1][:g].sum()


def test_budgeted_extremes_are_inf_and_one_norms():
    z = np.array([0.5, -2.0, 1.0])
    assert np.isclose(eval_penalty(budgeted_norm(3, 1), z), np.abs(z).max())
    assert np.isclose(eval_penalty(budgeted_norm(3, 3), z), np.abs(z).sum())


def test_budgeted_examples():
    assert np.isclose(eval_penalty(budgeted_norm(3, 2), [3.0, -1.0, 2.0]), 5.0)
    assert np.isclose(eval_penalty(budgeted_norm(3, 1), [0.5, -2.0, 1.0]), 2.0)
    assert np.isclose(eval_penalty(budgeted_norm(4, 3), [1.0, 1.0, 1.0, 1.0]), 3.0)
    assert eval_penalty(budgeted_norm(5, 2), np.zeros(5)) == pytest.approx(0.0, abs=1e-12)


def test_budgeted_gamma_range():
    with pytest.raises(ContractError):
        budgeted_norm(3, 0)
    with pytest.raises(ContractError):
        budgeted_norm(3, 4)


def test_budgeted_serializes_as_shorthand():
    p = budgeted_norm(4, 2)
    assert p.to_dict() == {"type": "budgeted", "n": 4, "gamma": 2}
    q = penalty_from_dict({"type": "budgeted", "gamma": 2}, n_z=4)
    assert np.array_equal(q.M, p.M) and np.array_equal(q.t, p.t)


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n), vec(n))))
def test_budgeted_lp_matches_sorted_sum(args):
    n, g, z = args
    p = budgeted_norm(n, g)
    v = eval_penalty(p, z)
    assert abs(v - top_sum(z, g)) <= 1e-7 * (1 + np.abs(z).sum())
    assert abs(eval_penalty(p, -z) - v) <= 1e-7 * (1 + v)
    assert abs(penalty_values(p, z[None])[0] - v) <= 1e-7 * (1 + v)


@given(vec(5))
def test_budgeted_nondecreasing_in_gamma(z):
    vals = [penalty_values(budgeted_norm(5, g), z[None])[0] for g in range(1, 6)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_dual_norm_examples():
    assert np.isclose(eval_dual_norm(budgeted_norm(3, 1), [1.0, -1.0, 1.0]), 3.0)
    assert np.isclose(eval_dual_norm(budgeted_norm(3, 3), [2.0, -5.0, 1.0]), 5.0)
    assert eval_dual_norm(budgeted_norm(3, 2), np.zeros(3)) == pytest.approx(0.0, abs=1e-12)


def test_dual_norm_needs_norm():
    p = budgeted_norm(2, 1)
    q = PolyhedralPenalty(p.M, p.N, np.ones(p.n_m), p.t)
    with pytest.raises(UnsupportedError):
        eval_dual_norm(q, [1.0, 0.0])


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(st.integers(1, n), vec(n), vec(n))))
def test_generalized_cauchy_schwarz(args):
    g, z, w = args
    p = budgeted_norm(len(z), g)
    lhs = abs(z @ w)
    rhs = eval_dual_norm(p, z) * eval_penalty(p, w)
    assert lhs <= rhs + 1e-6 * (1 + rhs)


def test_validate_budgeted_passes():
    rep = validate_assumption3(budgeted_norm(5, 2))
    assert rep.origin and rep.strict_interior and rep.bounded and rep.ok


def test_validate_detects_missing_strict_interior():
    # rows with N = 0 and t = 0 make N mu < t impossible
    M = np.vstack([np.eye(2), -np.eye(2), np.zeros((1, 2))])
    N = np.zeros((5, 1))
    t = np.array([1.0, 1.0, 1.0, 1.0, 0.0])
    rep = validate_assumption3(PolyhedralPenalty(M, N, np.zeros(5), t))
    assert rep.origin and not rep.strict_interior


def test_validate_detects_unbounded_coordinate():
    M = np.array([[1.0, 0.0], [-1.0, 0.0]])
    N = np.zeros((2, 1))
    t = np.ones(2)
    rep = validate_assumption3(PolyhedralPenalty(M, N, np.zeros(2), t))
    assert not rep.bounded
    with pytest.raises(InvariantViolation):
        eval_penalty(PolyhedralPenalty(M, N, np.zeros(2), t), [0.0, 1.0])


def test_support_validation_and_shift():
    with pytest.raises(ContractError):
        PolyhedralSupport(np.eye(2), [1.0, -0.5]).validate()
    Z = PolyhedralSupport.box([-1, -1], [1, 2])
    assert Z.contains([0.5, 1.5]) and not Z.contains([0.0, 2.5])
    assert Z.shifted([0.5, 0.5]).contains([0.0, 1.5])
    lo, hi = Z.bounding_box()
    assert np.allclose(lo, [-1, -1]) and np.allclose(hi, [1, 2])


def test_inner_max_examples():
    box2 = PolyhedralSupport.box([-1, -1], [1, 1])
    assert inner_max([0.0, 0.0], 2.0, box2, budgeted_norm(2, 1)).value == pytest.approx(0.0, abs=1e-9)
    assert inner_max([1.0, 2.0], 0.0, box2, budgeted_norm(2, 1)).value == pytest.approx(3.0, abs=1e-9)
    box1 = PolyhedralSupport.box([-1], [1])
    assert inner_max([2.0], 1.0, box1, budgeted_norm(1, 1)).value == pytest.approx(1.0, abs=1e-9)


def test_inner_max_certificate_is_feasible():
    Z = PolyhedralSupport.box([-1, -2], [2, 1])
    p = budgeted_norm(2, 2)
    a = np.array([1.5, -0.7])
    k = 0.4
    c = inner_max(a, k, Z, p)
    assert np.all(c.beta >= -1e-9) and c.eta >= -1e-9
    lam = a - Z.H.T @ c.beta
    assert np.all(p.M @ lam + p.N @ c.mu + p.s * c.eta <= k * p.t + 1e-7)
    assert c.value == pytest.approx(Z.h @ c.beta + c.eta, abs=1e-8)


def test_inner_max_zero_k_is_support_function():
    Z = PolyhedralSupport.box([-1, 0, -2], [1, 3, 0.5])
    a = np.array([0.3, -1.0, 2.0])
    assert inner_max(a, 0.0, Z, budgeted_norm(3, 2)).value == support_function(a, Z).value


@given(vec(2, -3, 3), st.floats(0.0, 4.0))
def test_inner_max_bounds_grid(a, k):
    Z = PolyhedralSupport.box([-1, -1], [1, 1])
    p = budgeted_norm(2, 1)
    g = np.linspace(-1, 1, 41)
    pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    grid = np.max(pts @ a - k * penalty_values(p, pts))
    assert inner_max(a, k, Z, p).value >= grid - 1e-8


def test_inner_max_convex_nonincreasing_in_k(rng):
    Z = PolyhedralSupport.box(-rng.random(3), rng.random(3) + 0.5)
    p = budgeted_norm(3, 2)
    a = rng.standard_normal(3)
    ks = np.linspace(0.0, 3.0, 13)
    v = np.array([inner_max(a, k, Z, p).value for k in ks])
    assert np.all(np.diff(v) <= 1e-9)
    assert np.all(v[:-2] - 2 * v[1:-1] + v[2:] >= -1e-8)


def test_inner_max_matches_vertex_oracle(rng):
    for _ in range(5):
        n = int(rng.integers(1, 4))
        Z = PolyhedralSupport.box(-rng.random(n) - 0.1, rng.random(n) + 0.1)
        p = budgeted_norm(n, int(rng.integers(1, n + 1)))
        a = rng.standard_normal(n) * 2
        k = float(rng.random() * 2)
        assert abs(inner_max(a, k, Z, p).value - inner_max_vertex_oracle(a, k, Z, p)) <= 1e-6


def test_inner_max_rejects_negative_k():
    with pytest.raises(ContractError):
        inner_max([1.0], -0.1, PolyhedralSupport.box([-1], [1]), budgeted_norm(1, 1))
