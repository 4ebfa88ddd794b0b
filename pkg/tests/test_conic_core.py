import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from robsat import conic
from robsat.casting import exp_disutility
from robsat.conic import Affine, ProgramBuilder
from robsat.errors import CapabilityError, ContractError, UnsupportedError


def vec(n, lo=-5.0, hi=5.0):
    return st.lists(st.floats(lo, hi), min_size=n, max_size=n).map(np.array)


def test_total_dim_counts_psd_in_svec_form():
    K = conic.nonneg(2) * conic.soc(3) * conic.psd(3) * conic.loss_perspective(exp_disutility(1.0))
    assert K.total_dim == 2 + 3 + 6 + 3


def test_membership_examples():
    assert conic.membership(conic.nonneg(3), np.zeros(3), 1e-9)
    assert conic.membership(conic.loss_perspective(exp_disutility(1.0)), [0.0, 0.0, 1.0])
    assert not conic.membership(conic.psd(2), conic.svec(np.array([[1.0, 2.0], [2.0, 1.0]])))


def test_membership_dimension_mismatch():
    with pytest.raises(ContractError):
        conic.membership(conic.nonneg(3), np.zeros(2))


def test_loss_perspective_membership_uses_recession():
    K = conic.loss_perspective(exp_disutility(1.0))
    assert conic.membership(K, [-3.0, 0.0, 0.0])
    assert not conic.membership(K, [3.0, 100.0, 0.0])


def test_dual_cone_examples():
    assert conic.dual_cone(conic.nonneg(5)) == conic.nonneg(5)
    assert conic.dual_cone(conic.soc(4)) == conic.soc(4)
    assert conic.dual_cone(conic.zero(2)) == conic.free(2)
    with pytest.raises(UnsupportedError):
        conic.dual_cone(conic.loss_perspective(exp_disutility(1.0)))


def test_svec_round_trip_and_inner_product(rng):
    A = rng.standard_normal((4, 4))
    A = A + A.T
    B = rng.standard_normal((4, 4))
    B = B + B.T
    assert np.allclose(conic.smat(conic.svec(A)), A)
    assert np.isclose(conic.svec(A) @ conic.svec(B), np.trace(A @ B))


def _in_cone(kind, raw):
    if kind == "nonneg":
        return conic.nonneg(len(raw)), np.abs(raw)
    if kind == "soc":
        return conic.soc(len(raw)), np.concatenate([[np.linalg.norm(raw[1:]) + abs(raw[0])], raw[1:]])
    G = raw[:9].reshape(3, 3)
    return conic.psd(3), conic.svec(G @ G.T)


@given(st.sampled_from(["nonneg", "soc", "psd"]), vec(9), vec(9))
def test_self_dual_inner_products_are_nonnegative(kind, a, b):
    K, v = _in_cone(kind, a)
    _, w = _in_cone(kind, b)
    assert conic.membership(K, v) and conic.membership(conic.dual_cone(K), w)
    assert v @ w >= -1e-7 * (1 + np.abs(v).max() * np.abs(w).max())


def _scalar_program():
    b = ProgramBuilder()
    x = b.var(1, "x")
    b.nonneg(x)
    return b.build(x)


def test_solve_trivial_lp():
    res = conic.solve(_scalar_program())
    assert res.status == "optimal"
    assert abs(res.objective_value) <= 1e-8


def test_solve_detects_infeasibility():
    b = ProgramBuilder()
    x = b.var(1)
    b.nonneg(x + 1.0)
    b.nonneg(-x - 2.0)
    assert conic.solve(b.build(Affine.constant([0.0], 1))).status == "infeasible"


def test_solve_rejects_unexpanded_loss_cone():
    b = ProgramBuilder()
    v = b.var(3)
    b.add(v, conic.loss_perspective(exp_disutility(1.0)))
    with pytest.raises(CapabilityError):
        conic.solve(b.build(v[1]))


def test_solve_socp_and_sdp():
    # min t s.t. ||(1, 2)|| <= t
    b = ProgramBuilder()
    t = b.var(1, "t")
    b.add(Affine.vstack([t, Affine.constant([1.0, 2.0], b.num_vars)]), conic.soc(3))
    res = conic.solve(b.build(t))
    assert abs(res.objective_value - np.sqrt(5)) <= 1e-7
    # min s s.t. s I - C >= 0 gives the top eigenvalue of C
    C = np.array([[2.0, 1.0], [1.0, 3.0]])
    b = ProgramBuilder()
    s = b.var(1, "s")
    b.add(s.lmul(conic.svec(np.eye(2)).reshape(-1, 1)) - conic.svec(C), conic.psd(2))
    res = conic.solve(b.build(s))
    assert abs(res.objective_value - np.linalg.eigvalsh(C).max()) <= 1e-7


def test_optimal_solution_passes_membership_and_solve_is_idempotent():
    b = ProgramBuilder()
    x = b.var(3, "x")
    b.add(Affine.vstack([Affine.constant([1.0], 3), x]), conic.soc(4))
    b.add(x.lmul(np.array([[1.0, 2.0, 3.0]])) + 2.0, conic.nonneg(1))
    b.add(Affine.vstack([x[0], Affine.constant([1.0], 3), x[1] + 1.0]), conic.exp_cone())
    prog = b.build(x.lmul(np.array([[1.0, -1.0, 0.5]])))
    r1 = conic.solve(prog)
    r2 = conic.solve(prog)
    assert r1.status == r2.status == "optimal"
    assert abs(r1.objective_value - r2.objective_value) <= 1e-9
    assert prog.is_feasible(r1.primal, 1e-6)


def test_empirical_portfolio_program_matches_grid():
    from robsat.apps.portfolio import portfolio_model
    from robsat.engine import empirical_optimum

    zhat = np.array([[0.05, 0.12]])
    model = portfolio_model(zhat, a=2.0, gamma=1)
    Z0, x = empirical_optimum(model)
    grid = np.linspace(0.0, 1.0, 1001)
    loss = exp_disutility(2.0)
    vals = loss.value(-(grid * zhat[0, 0] + (1 - grid) * zhat[0, 1]))
    assert abs(Z0 - vals.min()) <= 1e-6
    assert abs(Z0 - loss.value(-(x @ zhat[0]))) <= 1e-6


def test_program_json_round_trip(tmp_path):
    b = ProgramBuilder()
    x = b.var(2, "x")
    b.add(Affine.vstack([Affine.constant([1.0], 2), x]), conic.soc(3))
    b.nonneg(x + 0.5)
    prog = b.build(x.sum())
    path = tmp_path / "prog.json"
    conic.dump_program(prog, path)
    back = conic.load_program(path)
    assert back.num_vars == prog.num_vars
    for c1, c2 in zip(prog.constraints, back.constraints):
        assert (c1.A != c2.A).nnz == 0
        assert np.array_equal(c1.b, c2.b)
        assert c1.cone == c2.cone
    assert abs(conic.solve(back).objective_value - conic.solve(prog).objective_value) <= 1e-9


def test_program_json_accepts_dense_matrices():
    d = {
        "num_vars": 1,
        "objective": [1.0],
        "constraints": [{"A": [[1.0]], "b": [-2.0], "cone": [{"type": "nonneg", "dim": 1}]}],
    }
    prog = conic.program_from_dict(json.loads(json.dumps(d)))
    assert abs(conic.solve(prog).objective_value - 2.0) <= 1e-8


def test_builder_rejects_row_mismatch():
    b = ProgramBuilder()
    x = b.var(2)
    with pytest.raises(ContractError):
        b.add(x, conic.nonneg(3))


def test_affine_algebra():
    b = ProgramBuilder()
    x = b.var(2)
    e = (2.0 * x - 1.0).lmul(sp.eye(2))
    assert np.allclose(e.value(np.array([1.0, 3.0])), [1.0, 5.0])
    assert np.allclose(e.sum().value(np.array([1.0, 3.0])), [6.0])
