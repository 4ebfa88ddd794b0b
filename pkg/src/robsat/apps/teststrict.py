"""A two-stage LP instance where the dual affine rule beats the primal rule.

The evaluation is ``g(z) = min { d @ y : B y >= f + F z }`` on
``Z = {z : H z <= h}`` with the 1-norm penalty, a single sample at the origin
and no first-stage decision.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..engine import DecisionSet, SatisficingModel, empirical_optimum, lp_recourse
from ..engine.twostage import solve_twostage_dual, solve_twostage_primal
from ..errors import RobsatError
from ..penalty import PolyhedralSupport, budgeted_norm

H_TOP = np.array(
    [
        [0.2220, 0.6117, 0.0807, 0.2741, 0.5999, 0.1442, 0.0243, 0.5777, 0.2591],
        [0.8707, 0.7659, 0.7384, 0.4142, 0.2658, 0.1656, 0.2046, 0.0016, 0.8025],
        [0.2067, 0.5184, 0.4413, 0.2961, 0.2847, 0.9639, 0.6998, 0.5155, 0.8705],
        [0.9186, 0.2968, 0.1583, 0.6288, 0.2536, 0.9602, 0.7795, 0.6398, 0.9227],
        [0.4884, 0.1877, 0.8799, 0.5798, 0.3276, 0.1884, 0.0229, 0.9856, 0.0022],
    ]
)
H = np.vstack([H_TOP, -np.eye(9)])
h = np.array([0.4695, 0.9815, 0.3989, 0.8137, 0.5465] + [100.0] * 9)
F = np.array(
    [
        [0.8248, 0.5464, 0.3655, 0.6389, 0.9435, 0.1008, 0.3715, 0.4783, 0.8005],
        [0.0942, 0.7961, 0.2443, 0.4934, 0.1117, 0.3834, 0.0124, 0.8500, 0.0204],
        [0.3610, 0.0511, 0.7951, 0.5835, 0.8436, 0.5104, 0.8597, 0.5147, 0.5726],
        [0.0355, 0.1887, 0.3521, 0.9393, 0.3460, 0.9611, 0.1111, 0.4466, 0.4114],
    ]
)
d = np.array([0.8167, 0.5661])
f = np.array([0.6354, 0.8119, 0.9267, 0.9126])
B = np.array(
    [
        [0.7709, 0.1115],
        [0.4849, 0.2512],
        [0.0291, 0.9649],
        [0.0865, 0.6318],
    ]
)

FIXTURE_SHA256 = "5a1ea539685002bd455c50749f9e3986ec6415f3a95bac9ed989caef9ac49bae"
DEFAULT_TAUS = tuple(np.linspace(1.6, 4.0, 10))


def fixture_hash() -> str:
    """SHA-256 over the fixture arrays printed with four decimals."""
    text = ";".join(
        name + "=" + ",".join(f"{v:.4f}" for v in arr.ravel()) for name, arr in (("H", H), ("h", h), ("F", F), ("d", d), ("f", f), ("B", B))
    )
    return hashlib.sha256(text.encode()).hexdigest()


def teststrict_model(tau: float | None = None) -> SatisficingModel:
    ev = lp_recourse(B, d, f, F)
    target = {} if tau is None else {"tau": float(tau)}
    return SatisficingModel(ev, PolyhedralSupport(H, h), budgeted_norm(9, 9), np.zeros((1, 9)), DecisionSet.free(0), target)


def nominal_value() -> float:
    """``g(0) = min { d @ y : B y >= f }``."""
    Z0, _ = empirical_optimum(teststrict_model())
    return Z0


def run_teststrict(taus) -> list[dict]:
    """Rows of ``(tau, k_primal, k_dual)``; a failed solve leaves ``nan`` and an error note."""
    model = teststrict_model()
    rows = []
    for tau in taus:
        row = {"tau": float(tau), "k_primal": float("nan"), "k_dual": float("nan")}
        for name, fn in (("k_primal", solve_twostage_primal), ("k_dual", solve_twostage_dual)):
            try:
                row[name] = fn(model, float(tau))[0]
            except RobsatError as exc:
                row.setdefault("errors", {})[name] = str(exc)
        rows.append(row)
    return rows
