"""Evaluation functions and satisficing models.

An evaluation function is the optimal value of a conic recourse problem

    g(x, z) = min { d @ y : B y - f(x) - F(x) z in K }

with ``f(x) = f0 + Fx x`` and ``F(x) = F0 + sum_j x_j FX[j]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import conic
from ..casting import CastModel, eval_cast
from ..errors import ContractError
from ..penalty import PolyhedralPenalty, PolyhedralSupport


@dataclass
class EvaluationFunction:
    B: np.ndarray
    d: np.ndarray
    f0: np.ndarray
    Fx: np.ndarray
    F0: np.ndarray
    FX: np.ndarray
    cone: conic.ConeDescriptor
    closed_form: Optional[Callable] = field(default=None, repr=False, compare=False)
    kind: str = "conic"
    cast_model: Optional[CastModel] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.d = np.asarray(self.d, dtype=float).ravel()
        self.f0 = np.asarray(self.f0, dtype=float).ravel()
        n_f = self.f0.shape[0]
        self.F0 = np.asarray(self.F0, dtype=float).reshape(n_f, -1)
        self.Fx = np.asarray(self.Fx, dtype=float).reshape(n_f, -1)
        n_x = self.Fx.shape[1]
        self.FX = np.asarray(self.FX, dtype=float).reshape(n_x, n_f, self.F0.shape[1])
        if self.B.shape != (n_f, self.d.shape[0]):
            raise ContractError(f"B must be {n_f} x {self.d.shape[0]}, got {self.B.shape}")
        if self.cone.total_dim != n_f:
            raise ContractError("cone dimension must equal the number of rows of B")

    @property
    def n_f(self) -> int:
        return self.f0.shape[0]

    @property
    def n_y(self) -> int:
        return self.d.shape[0]

    @property
    def n_x(self) -> int:
        return self.Fx.shape[1]

    @property
    def n_z(self) -> int:
        return self.F0.shape[1]

    def f(self, x) -> np.ndarray:
        return self.f0 + self.Fx @ np.asarray(x, dtype=float)

    def F(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.F0 + np.tensordot(x, self.FX, axes=1) if self.n_x else self.F0.copy()

    def rhs(self, x, z) -> np.ndarray:
        return self.f(x) + self.F(x) @ np.asarray(z, dtype=float)

    @property
    def all_nonneg(self) -> bool:
        return self.cone.kinds() <= {"nonneg"}

    def to_dict(self) -> dict:
        out = {
            "B": self.B.tolist(),
            "d": self.d.tolist(),
            "f0": self.f0.tolist(),
            "fX": self.Fx.tolist(),
            "F0": self.F0.tolist(),
            "FX": self.FX.tolist(),
            "cone": self.cone.to_list(),
        }
        cm = self.cast_model
        if cm is not None:
            out["cast"] = {"loss": cm.loss.to_dict(), "featured_domain": list(cm.W), "P": cm.P}
        return out


def piecewise_max(f0, F0, Fx=None, FX=None) -> EvaluationFunction:
    """``g(x, z) = max_i f_i(x) + F_i(x) z``, i.e. ``min { y : 1 y >= f + F z }``."""
    f0 = np.asarray(f0, dtype=float).ravel()
    F0 = np.asarray(F0, dtype=float).reshape(f0.shape[0], -1)
    n_f, n_z = F0.shape
    if Fx is None:
        Fx = np.zeros((n_f, 0))
    Fx = np.asarray(Fx, dtype=float).reshape(n_f, -1)
    if FX is None:
        FX = np.zeros((Fx.shape[1], n_f, n_z))
    ev = EvaluationFunction(np.ones((n_f, 1)), [1.0], f0, Fx, F0, FX, conic.nonneg(n_f), kind="piecewise")

    def closed(x, Z):
        return np.max(np.atleast_2d(Z) @ ev.F(x).T + ev.f(x), axis=1)

    ev.closed_form = closed
    return ev


def lp_recourse(B, d, f0, F0, Fx=None, FX=None) -> EvaluationFunction:
    """``g(x, z) = min { d @ y : B y >= f(x) + F(x) z }``."""
    f0 = np.asarray(f0, dtype=float).ravel()
    F0 = np.asarray(F0, dtype=float).reshape(f0.shape[0], -1)
    n_f, n_z = F0.shape
    if Fx is None:
        Fx = np.zeros((n_f, 0))
    Fx = np.asarray(Fx, dtype=float).reshape(n_f, -1)
    if FX is None:
        FX = np.zeros((Fx.shape[1], n_f, n_z))
    return EvaluationFunction(B, d, f0, Fx, F0, FX, conic.nonneg(n_f), kind="lp")


def cast_evaluation(cm: CastModel, w0, W0, Wx=None, WX=None) -> EvaluationFunction:
    """Evaluation function ``l_hat(w(x, z))`` with ``w`` affine in ``z`` and bilinear in ``x``.

    ``w(x, z) = w0 + Wx x + (W0 + sum_j x_j WX[j]) z``.
    """
    n_w = cm.loss.n_w
    w0 = np.asarray(w0, dtype=float).reshape(n_w)
    W0 = np.asarray(W0, dtype=float).reshape(n_w, -1)
    n_z = W0.shape[1]
    if Wx is None:
        Wx = np.zeros((n_w, 0))
    Wx = np.asarray(Wx, dtype=float).reshape(n_w, -1)
    n_x = Wx.shape[1]
    if WX is None:
        WX = np.zeros((n_x, n_w, n_z))
    WX = np.asarray(WX, dtype=float).reshape(n_x, n_w, n_z)
    r0, R = cm.rhs_template()
    ev = EvaluationFunction(
        cm.B,
        cm.d,
        r0 + R @ w0,
        R @ Wx,
        R @ W0,
        np.einsum("fw,jwz->jfz", R, WX),
        cm.cone,
    )
    return attach_cast(ev, cm)


def attach_cast(ev: EvaluationFunction, cm: CastModel) -> EvaluationFunction:
    """Mark ``ev`` as a casted loss and give it the closed form ``l_hat(w)``.

    The first ``n_w`` rows of ``f(x) + F(x) z`` hold ``-w``.
    """
    n_w = cm.loss.n_w
    if ev.n_f != n_w + 3 or not np.array_equal(ev.B, cm.B) or not np.array_equal(ev.d, cm.d):
        raise ContractError("evaluation data do not match the cast model")

    def closed(x, Z):
        x = np.asarray(x, dtype=float)
        Fz = ev.F(x)[:n_w]
        w = -(np.atleast_2d(Z) @ Fz.T + ev.f(x)[:n_w])
        return eval_cast(cm, w[:, 0] if n_w == 1 else w)

    ev.kind = "cast"
    ev.closed_form = closed
    ev.cast_model = cm
    return ev


@dataclass
class DecisionSet:
    """``{x : A x <= b, E x = e}``."""

    A: np.ndarray
    b: np.ndarray
    E: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2:
            self.A = self.A.reshape(self.b.shape[0], -1)
        if self.E is not None:
            self.e = np.asarray(self.e, dtype=float).ravel()
            self.E = np.asarray(self.E, dtype=float)
            if self.E.ndim != 2:
                self.E = self.E.reshape(self.e.shape[0], -1)

    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    def contains(self, x, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        ok = np.all(self.A @ x <= self.b + tol)
        if self.E is not None:
            ok = ok and np.all(np.abs(self.E @ x - self.e) <= tol)
        return bool(ok)

    @staticmethod
    def simplex(n: int) -> "DecisionSet":
        return DecisionSet(-np.eye(n), np.zeros(n), np.ones((1, n)), np.ones(1))

    @staticmethod
    def box(lo, hi) -> "DecisionSet":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        n = lo.shape[0]
        return DecisionSet(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    @staticmethod
    def point(x0) -> "DecisionSet":
        x0 = np.asarray(x0, dtype=float).ravel()
        n = x0.shape[0]
        return DecisionSet(np.zeros((0, n)), np.zeros(0), np.eye(n), x0)

    @staticmethod
    def free(n: int) -> "DecisionSet":
        return DecisionSet(np.zeros((0, n)), np.zeros(0))

    def to_dict(self) -> dict:
        out = {"A": self.A.tolist(), "b": self.b.tolist()}
        if self.E is not None:
            out.update({"E": self.E.tolist(), "e": self.e.tolist()})
        return out


@dataclass
class SatisficingModel:
    eval: EvaluationFunction
    support: PolyhedralSupport
    penalty: PolyhedralPenalty
    samples: np.ndarray
    decision_set: DecisionSet
    target: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[1] != self.eval.n_z:
            raise ContractError("samples must have n_z columns")
        if self.support.n_z != self.eval.n_z or self.penalty.n_z != self.eval.n_z:
            raise ContractError("support, penalty and evaluation disagree on n_z")
        if self.decision_set.n_x != self.eval.n_x:
            raise ContractError("decision set and evaluation disagree on n_x")

    @property
    def omega(self) -> int:
        return self.samples.shape[0]

    def check_samples(self, tol: float = 1e-9) -> None:
        viol = self.samples @ self.support.H.T - self.support.h
        bad = np.flatnonzero(np.max(viol, axis=1) > tol)
        if bad.size:
            raise ContractError(f"samples {bad.tolist()} lie outside the support")


@dataclass
class QuadraticModel:
    """``g(x, z) = ||A(x) z + a(x)||^2 + b(x) @ z + c(x)`` over ``||z|| <= r``.

    Each map is affine in ``x``: ``A(x) = A0 + sum_j x_j AX[j]``,
    ``a(x) = a0 + aX x``, ``b(x) = b0 + bX x``, ``c(x) = c0 + cX @ x``.
    """

    A0: np.ndarray
    a0: np.ndarray
    b0: np.ndarray
    c0: float
    r: float = 1.0
    AX: Optional[np.ndarray] = None
    aX: Optional[np.ndarray] = None
    bX: Optional[np.ndarray] = None
    cX: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A0 = np.atleast_2d(np.asarray(self.A0, dtype=float))
        n_a, n_z = self.A0.shape
        self.a0 = np.asarray(self.a0, dtype=float).reshape(n_a)
        self.b0 = np.asarray(self.b0, dtype=float).reshape(n_z)
        self.c0 = float(self.c0)
        if not self.r > 0:
            raise ContractError("radius must be positive")
        sizes = [
            np.shape(self.AX)[0] if self.AX is not None else 0,
            np.shape(self.aX)[1] if self.aX is not None else 0,
            np.shape(self.bX)[1] if self.bX is not None else 0,
            np.shape(self.cX)[0] if self.cX is not None else 0,
        ]
        n_x = max(sizes)
        self.AX = np.zeros((n_x, n_a, n_z)) if self.AX is None else np.asarray(self.AX, dtype=float).reshape(n_x, n_a, n_z)
        self.aX = np.zeros((n_a, n_x)) if self.aX is None else np.asarray(self.aX, dtype=float).reshape(n_a, n_x)
        self.bX = np.zeros((n_z, n_x)) if self.bX is None else np.asarray(self.bX, dtype=float).reshape(n_z, n_x)
        self.cX = np.zeros(n_x) if self.cX is None else np.asarray(self.cX, dtype=float).reshape(n_x)

    @property
    def n_a(self) -> int:
        return self.A0.shape[0]

    @property
    def n_z(self) -> int:
        return self.A0.shape[1]

    @property
    def n_x(self) -> int:
        return self.cX.shape[0]

    def maps(self, x):
        x = np.asarray(x, dtype=float)
        A = self.A0 + (np.tensordot(x, self.AX, axes=1) if self.n_x else 0.0)
        return A, self.a0 + self.aX @ x, self.b0 + self.bX @ x, self.c0 + self.cX @ x

    def g(self, x, Z) -> np.ndarray:
        A, a, b, c = self.maps(x)
        Z = np.atleast_2d(Z)
        r = Z @ A.T + a
        return np.sum(r * r, axis=1) + Z @ b + c
