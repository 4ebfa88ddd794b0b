import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robsat import conic
from robsat.casting import (
    REAL_LINE,
    cast,
    conic_expand,
    eval_cast,
    exp_disutility,
    expand_program,
    huber,
    log_sum_exp,
    logexp,
    loss_from_dict,
    perspective_depth,
    perspective_value,
    quadratic,
    squared_hinge,
)
from robsat.conic import Affine, ProgramBuilder
from robsat.errors import ContractError, UnsupportedError
from robsat.oracle import check_complete_bounded_recourse

UNIVARIATE = [exp_disutility(0.5), exp_disutility(2.0), quadratic(), huber(1.0), squared_hinge(), logexp()]


def test_perspective_value_examples():
    assert perspective_value(quadratic(), 2.0, 4.0) == pytest.approx(1.0)
    for loss in UNIVARIATE:
        assert perspective_value(loss, 0.7, 1.0) == pytest.approx(float(loss.value(0.7)))
    e = exp_disutility(1.0)
    assert perspective_value(e, -3.0, 0.0) == 0.0
    assert perspective_value(e, 3.0, 0.0) == np.inf


def test_perspective_value_rejects_negative_y2():
    with pytest.raises(ContractError):
        perspective_value(quadratic(), 1.0, -0.5)


@pytest.mark.parametrize("loss", UNIVARIATE, ids=lambda l: type(l).__name__)
def test_loss_gradient_and_convexity(loss, rng):
    u = rng.uniform(-3, 3, 200)
    v = rng.uniform(-3, 3, 200)
    mid = loss.value((u + v) / 2)
    assert np.all(mid <= (loss.value(u) + loss.value(v)) / 2 + 1e-12)
    h = 1e-6
    fd = (loss.value(u + h) - loss.value(u - h)) / (2 * h)
    assert np.all(np.abs(fd - loss.grad(u)) <= 1e-5 * (1 + np.abs(fd)))


@given(
    st.sampled_from(UNIVARIATE),
    st.floats(-3, 3),
    st.floats(0.05, 4),
    st.floats(-3, 3),
    st.floats(0.05, 4),
)
def test_perspective_jointly_convex(loss, w1, y1, w2, y2):
    mid = perspective_value(loss, (w1 + w2) / 2, (y1 + y2) / 2)
    avg = (perspective_value(loss, w1, y1) + perspective_value(loss, w2, y2)) / 2
    assert mid <= avg + 1e-9 * (1 + abs(avg))


def test_depth_examples():
    assert perspective_depth(huber(1.0)) == 0.5
    assert perspective_depth(huber(3.0)) == 4.5
    assert perspective_depth(log_sum_exp(3)) == pytest.approx(0.0, abs=1e-9)
    a, lo, hi = 2.0, -0.5, 0.5
    ref = max(np.exp(a * v) * (v - 1 / a) + 1 / a for v in (lo, hi))
    assert perspective_depth(exp_disutility(a), (lo, hi)) == pytest.approx(ref, rel=1e-12)
    assert perspective_depth(quadratic(), (-1, 2)) == pytest.approx(4.0)


def test_depth_unsupported_for_multivariate_boxes():
    with pytest.raises(UnsupportedError):
        perspective_depth(quadratic(2), (np.full(2, -1.0), np.full(2, 1.0)))
    with pytest.raises(UnsupportedError):
        perspective_depth(log_sum_exp(2), (np.full(2, -1.0), np.full(2, 1.0)))


@pytest.mark.parametrize("loss", UNIVARIATE, ids=lambda l: type(l).__name__)
def test_depth_dominates_interior_grid(loss):
    W = (-1.5, 2.0)
    u = np.linspace(*W, 301)
    assert np.max(loss.depth_term(u)) <= perspective_depth(loss, W) + 1e-12


def test_cast_examples():
    c = cast(exp_disutility(2.0), (-0.5, 0.5))
    assert eval_cast(c, 0.0) == pytest.approx(0.0, abs=1e-9)
    assert cast(huber(1.0), (-10, 10), 0.5).P == 0.5
    with pytest.raises(ContractError, match="4"):
        cast(quadratic(), (-1, 2), 3.9)


def test_cast_model_shapes():
    c = cast(logexp(), (-2, 2))
    assert np.array_equal(c.B, [[0, 0], [1, 0], [0, 1], [0, 1]])
    assert np.allclose(c.d, [1.0, c.P])
    assert np.allclose(c.rhs(0.3), [-0.3, -c.P, 0.0, 1.0])
    r0, R = c.rhs_template()
    assert np.allclose(r0 + R @ [0.3], c.rhs(0.3))
    assert c.cone.total_dim == 4


def test_eval_cast_outside_domain_is_strictly_lower():
    c = cast(exp_disutility(1.0), (-1, 1))
    assert eval_cast(c, 5.0) < float(exp_disutility(1.0).value(5.0)) - 1e-3


def test_eval_cast_large_P_recovers_loss():
    c = cast(exp_disutility(1.0), (-1, 1), 1e4)
    w = np.linspace(-3, 3, 7)
    assert np.allclose(eval_cast(c, w), exp_disutility(1.0).value(w), atol=1e-8)


@pytest.mark.parametrize(
    "loss", [exp_disutility(0.5), exp_disutility(1.0), exp_disutility(2.0), exp_disutility(8.0), huber(1.0), logexp()],
    ids=lambda l: str(l.to_dict()),
)
def test_cast_equality_and_inequality_grids(loss):
    W = (-0.5, 0.5)
    c = cast(loss, W)
    inside = np.linspace(*W, 201)
    assert np.max(np.abs(eval_cast(c, inside) - loss.value(inside))) <= 1e-6
    wide = np.linspace(-1.5, 1.5, 201)
    assert np.all(eval_cast(c, wide) <= loss.value(wide) + 1e-8)


def test_cast_log_sum_exp_matches_on_samples(rng):
    c = cast(log_sum_exp(3))
    w = rng.uniform(-3, 3, (20, 3))
    assert np.max(np.abs(eval_cast(c, w) - log_sum_exp(3).value(w))) <= 1e-6


@pytest.mark.parametrize("loss", [exp_disutility(1.0), huber(1.0), logexp(), quadratic()], ids=lambda l: type(l).__name__)
def test_cast_recourse_is_complete_and_bounded(loss):
    c = cast(loss, (-1, 1))
    rep = check_complete_bounded_recourse(c.B, c.d, c.cone, trials=32)
    assert rep.bounded and rep.complete
    assert rep.bounded_value == pytest.approx(0.0, abs=1e-6)


def test_loss_dict_round_trip():
    for loss in UNIVARIATE + [log_sum_exp(4), quadratic(3)]:
        assert loss_from_dict(loss.to_dict()) == loss
    with pytest.raises(ContractError):
        loss_from_dict({"id": "abs"})


def _min_v1(loss, w, v2):
    """``min v1`` over the expanded cone with ``w`` and ``v2`` fixed."""
    b = ProgramBuilder()
    v1 = b.var(1, "v1")
    E = Affine.vstack([Affine.constant(np.atleast_1d(w), 1), v1, Affine.constant([v2], 1)])
    conic_expand(loss)(E, 1, b)
    prog = b.build(v1)
    return conic.solve(prog).objective_value


@pytest.mark.parametrize(
    "loss",
    [quadratic(), exp_disutility(1.5), huber(1.0), squared_hinge(), logexp(), log_sum_exp(3), quadratic(2)],
    ids=lambda l: str(l.to_dict()),
)
def test_conic_expand_matches_perspective(loss, rng):
    for _ in range(8):
        w = rng.uniform(-2, 2, loss.n_w)
        v2 = rng.uniform(0.2, 3.0)
        ref = perspective_value(loss, w if loss.n_w > 1 else w[0], v2)
        assert _min_v1(loss, w, v2) == pytest.approx(float(ref), abs=1e-6, rel=1e-6)


@pytest.mark.parametrize("loss", [quadratic(), exp_disutility(2.0), logexp(), huber(0.5)], ids=lambda l: type(l).__name__)
def test_expand_program_membership_agreement(loss, rng):
    # fix (w, v1, v2) with equalities and check the expanded program's feasibility
    agree = 0
    for _ in range(12):
        w, v2 = rng.uniform(-2, 2), rng.uniform(0.1, 2.0)
        v1 = float(perspective_value(loss, w, v2)) + rng.choice([-0.2, 0.2])
        b = ProgramBuilder()
        x = b.var(3)
        b.equal(x - Affine.constant([w, v1, v2], 3))
        b.add(x, conic.loss_perspective(loss))
        prog = expand_program(b.build(Affine.constant([0.0], 3)))
        member = conic.membership(conic.loss_perspective(loss), [w, v1, v2], 1e-7)
        status = conic.solve(prog).status
        agree += member == (status == "optimal")
    assert agree == 12
