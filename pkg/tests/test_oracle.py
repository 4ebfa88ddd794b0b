import numpy as np
import pytest

from robsat import conic
from robsat.apps.portfolio import PortfolioConfig
from robsat.apps.teststrict import H as FIXTURE_H
from robsat.apps.teststrict import h as FIXTURE_h
from robsat.casting import cast, exp_disutility, huber, logexp
from robsat.engine import lp_recourse, piecewise_max
from robsat.errors import ContractError
from robsat.oracle import (
    budget_bound,
    certainty_equivalent,
    check_complete_bounded_recourse,
    eval_g,
    exact_worst_case_piecewise,
    mc_budget_bound,
    vertices,
    worst_case_grid,
)
from robsat.penalty import PolyhedralSupport, budgeted_norm, inner_max, support_function


def test_vertices_of_box_and_simplex():
    box = vertices(np.vstack([np.eye(2), -np.eye(2)]), [1, 1, 0, 0])
    assert len(box.vertices) == 4
    assert {tuple(v) for v in np.round(box.vertices, 9)} == {(0, 0), (0, 1), (1, 0), (1, 1)}
    simplex = vertices(np.vstack([-np.eye(2), np.ones((1, 2))]), [0, 0, 1])
    assert len(simplex.vertices) == 3


def test_vertices_guard_and_override():
    with pytest.raises(ContractError):
        vertices(FIXTURE_H, FIXTURE_h)
    vs = vertices(FIXTURE_H, FIXTURE_h, override=True)
    assert len(vs.vertices) > 0
    assert np.all(vs.vertices @ FIXTURE_H.T <= FIXTURE_h + 1e-8)


def test_vertices_rejects_unbounded():
    with pytest.raises(ContractError):
        vertices(-np.eye(2), [0, 0])


def test_eval_g_forms():
    ev = piecewise_max([0.0, 1.0], [[1.0, 0.0], [0.0, -1.0]])
    z = np.array([2.0, 0.5])
    assert eval_g(ev, [], z) == pytest.approx(max(2.0, 0.5))
    lp = lp_recourse(np.eye(2), [1.0, 3.0], [1.0, -1.0], [[1.0, 0.0], [0.0, 1.0]])
    assert eval_g(lp, [], z) == pytest.approx(1.0 * 3.0 + 3.0 * (-0.5))


def test_worst_case_grid_large_k_is_nominal():
    ev = piecewise_max([0.5], [[1.0, -2.0]])
    sup = PolyhedralSupport.box([-1, -1], [1, 1])
    val, z = worst_case_grid(ev, sup, budgeted_norm(2, 2), [], 1e6)
    assert val == pytest.approx(0.5)
    assert np.allclose(z, 0.0)


def test_worst_case_grid_linear_k_zero_matches_support_function():
    a = np.array([1.0, -2.0])
    ev = piecewise_max([0.0], [a])
    sup = PolyhedralSupport.box([-1, -0.5], [0.7, 1])
    val, _ = worst_case_grid(ev, sup, budgeted_norm(2, 1), [], 0.0)
    assert val == pytest.approx(support_function(a, sup).value, abs=1e-9)


def test_exact_piecewise_examples(rng):
    sup = PolyhedralSupport.box([-1, -1], [1, 1])
    pen = budgeted_norm(2, 2)
    a = rng.standard_normal(2)
    one = piecewise_max([0.3], [a])
    two = piecewise_max([0.3, 0.3], [a, a])
    ref = 0.3 + inner_max(a, 0.4, sup, pen).value
    assert exact_worst_case_piecewise(one, [], sup, pen, 0.4) == pytest.approx(ref, abs=1e-9)
    assert exact_worst_case_piecewise(two, [], sup, pen, 0.4) == pytest.approx(ref, abs=1e-9)
    with pytest.raises(ContractError):
        exact_worst_case_piecewise(lp_recourse(np.eye(1), [1.0], [0.0], [[1.0, 0.0]]), [], sup, pen, 0.4)


def test_exact_piecewise_dominates_grid(rng):
    ev = piecewise_max(rng.standard_normal(5), rng.standard_normal((5, 2)))
    sup = PolyhedralSupport.box([-1, -1], [1, 1])
    pen = budgeted_norm(2, 2)
    k = 0.7
    exact = exact_worst_case_piecewise(ev, [], sup, pen, k)
    grid, _ = worst_case_grid(ev, sup, pen, [], k, density=81)
    lip = np.max(np.abs(ev.F0).sum(axis=1)) + k * 2
    assert grid <= exact + 1e-9
    assert exact - grid <= lip * 2 / 80


@pytest.mark.parametrize("loss", [exp_disutility(1.0), huber(1.0), logexp()], ids=lambda l: type(l).__name__)
def test_cast_model_recourse_passes(loss):
    c = cast(loss, (-1, 1))
    rep = check_complete_bounded_recourse(c.B, c.d, c.cone, trials=16)
    assert rep.bounded and rep.complete and rep.witness is None


def test_raw_perspectification_is_not_complete():
    # g = min { y : (w, y, 1) in K_l }
    B = np.array([[0.0], [1.0], [0.0]])
    rep = check_complete_bounded_recourse(B, [1.0], conic.loss_perspective(exp_disutility(1.0)), trials=16)
    assert rep.bounded and not rep.complete
    assert np.allclose(rep.witness, [0.0, 0.0, 1.0])


def test_identity_recourse_passes():
    rep = check_complete_bounded_recourse(np.eye(3), np.ones(3), conic.nonneg(3), trials=16)
    assert rep.bounded and rep.complete


def test_unbounded_recourse_detected():
    rep = check_complete_bounded_recourse(np.eye(2), [1.0, -1.0], conic.nonneg(2), trials=4)
    assert not rep.bounded


def test_budget_bound_values():
    assert budget_bound(100, 1.0, 1 / 3) == pytest.approx(np.exp(-((10 / 3 - 1) ** 2) * 1.5), rel=1e-12)
    assert budget_bound(100, 1.0, 1 / 3) == pytest.approx(2.8396e-4, rel=1e-4)
    assert budget_bound(25, 2.0, 1.0) == pytest.approx(np.exp(-4.5), rel=1e-12)
    assert budget_bound(100, 10 / 3 - 1e-9, 1 / 3) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n,c,dist", [(100, 1.0, "uniform"), (25, 2.0, "twopoint")])
def test_mc_budget_bound_holds(n, c, dist):
    p, bound, se = mc_budget_bound(n, c, dist, trials=200000, seed=1)
    assert p <= bound + 3 * se


def test_mc_budget_bound_argument_checks():
    with pytest.raises(ContractError):
        mc_budget_bound(25, 6.0, "twopoint", trials=10)
    with pytest.raises(ContractError):
        mc_budget_bound(25, 1.0, "gaussian", trials=10)


def test_certainty_equivalent_examples():
    mu = np.array([0.1, 0.2])
    assert certainty_equivalent([1.0, 0.0], mu, [0.0, 0.3], [0.5, 0.6], 2.0) == pytest.approx(0.1, abs=1e-15)
    cfg = PortfolioConfig()
    x = np.full(8, 1 / 8)
    assert certainty_equivalent(x, cfg.mu, cfg.sigma, cfg.beta, 1e-8) == pytest.approx(x @ np.array(cfg.mu), abs=1e-4)
    with pytest.raises(ContractError):
        certainty_equivalent([0.5, 0.6], mu, [0.1, 0.1], [0.5, 0.5], 1.0)
    with pytest.raises(ContractError):
        certainty_equivalent([0.5, 0.5], mu, [0.1, 0.1], [0.5, 1.0], 1.0)


def test_certainty_equivalent_matches_monte_carlo():
    cfg = PortfolioConfig()
    x = np.full(8, 1 / 8)
    a = 1.0
    rng = np.random.default_rng(7)
    hi, lo = cfg.outcomes()
    m = 2_000_000
    z = np.where(rng.random((m, 8)) < cfg.beta, hi, lo)
    u = np.exp(-a * (z @ x))
    mean, se = u.mean(), u.std() / np.sqrt(m)
    ce_mc = -np.log(mean) / a
    ce = certainty_equivalent(x, cfg.mu, cfg.sigma, cfg.beta, a)
    assert abs(ce - ce_mc) <= 3 * se / mean
