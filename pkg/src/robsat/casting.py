"""Smooth convex losses, their perspectives, and perspective casting.

Casting a loss ``l`` with featured domain ``W`` and constant ``P`` yields the
recourse problem

    min  y1 + P y2   s.t.  (w, y1 + P, y2) in K_l,  y2 >= 1

whose value is ``min_{y2 >= 1} P y2 + y2 l(w / y2) - P``.  It equals ``l(w)``
on ``W`` whenever ``P`` is at least the perspective depth of ``l`` over ``W``,
and it has complete and bounded recourse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp, softmax

from . import conic
from .conic import Affine, ProgramBuilder
from .errors import CapabilityError, ContractError, UnsupportedError

Y_MAX = 1e6
GOLDEN_TOL = 1e-10
REAL_LINE = (-1e8, 1e8)
DEFAULT_MARGIN = 1e-6


class Loss:
    """Base class.  Univariate losses take scalars or arrays elementwise."""

    n_w = 1
    line_free = True  # epigraph contains no line

    def value(self, w):
        raise NotImplementedError

    def grad(self, w):
        raise NotImplementedError

    def recession(self, w):
        raise NotImplementedError

    def depth_term(self, u):
        """``l'(u) u - l(u)``, written to avoid cancellation."""
        raise NotImplementedError

    def perspective(self, w, y2):
        w = np.asarray(w, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        safe = np.where(y2 > 0, y2, 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            pos = y2 * self.value(w / safe)
        out = np.where(y2 > 0, pos, self.recession(w))
        return float(out) if out.ndim == 0 else out

    def expand(self, E: Affine, count: int, builder: ProgramBuilder) -> None:
        raise CapabilityError(f"no conic expansion for {type(self).__name__}")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExpDisutility(Loss):
    a: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ContractError("exp_disutility needs a > 0")

    def value(self, w):
        with np.errstate(over="ignore"):
            return np.expm1(self.a * np.asarray(w, dtype=float)) / self.a

    def grad(self, w):
        with np.errstate(over="ignore"):
            return np.exp(self.a * np.asarray(w, dtype=float))

    def recession(self, w):
        return np.where(np.asarray(w) <= 0, 0.0, np.inf)

    def depth_term(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(self.a * u)
            return np.where(e == 0, 1.0 / self.a, e * (u - 1.0 / self.a) + 1.0 / self.a)

    def expand(self, E, count, builder):
        a = self.a
        # (w, v1, v2) -> (a w, v2, a v1 + v2) in the exponential cone
        T = np.array([[a, 0, 0], [0, 0, 1], [0, a, 1]], dtype=float)
        builder.add(E.lmul(sp.kron(sp.eye(count), T)), conic.exp_cone().repeat(count))

    def to_dict(self):
        return {"id": "exp_disutility", "a": self.a}


@dataclass(frozen=True)
class Quadratic(Loss):
    n: int = 1

    @property
    def n_w(self):
        return self.n

    def value(self, w):
        w = np.asarray(w, dtype=float)
        return w * w if self.n == 1 else np.sum(w * w, axis=-1)

    def grad(self, w):
        return 2.0 * np.asarray(w, dtype=float)

    def recession(self, w):
        w = np.asarray(w, dtype=float)
        nz = w != 0 if self.n == 1 else np.any(w != 0, axis=-1)
        return np.where(nz, np.inf, 0.0)

    def depth_term(self, u):
        return self.value(u)

    def expand(self, E, count, builder):
        n = self.n
        T = np.zeros((n + 2, n + 2))
        T[0, n], T[0, n + 1] = 1.0, 1.0
        T[1 : n + 1, :n] = 2.0 * np.eye(n)
        T[n + 1, n], T[n + 1, n + 1] = 1.0, -1.0
        builder.add(E.lmul(sp.kron(sp.eye(count), T)), conic.soc(n + 2).repeat(count))

    def to_dict(self):
        return {"id": "quadratic"} if self.n == 1 else {"id": "quadratic", "n": self.n}


@dataclass(frozen=True)
class Huber(Loss):
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ContractError("huber needs delta > 0")

    def value(self, w):
        w = np.asarray(w, dtype=float)
        d = self.delta
        aw = np.abs(w)
        return np.where(aw <= d, 0.5 * w * w, d * aw - 0.5 * d * d)

    def grad(self, w):
        return np.clip(np.asarray(w, dtype=float), -self.delta, self.delta)

    def recession(self, w):
        return self.delta * np.abs(np.asarray(w, dtype=float))

    def depth_term(self, u):
        u = np.asarray(u, dtype=float)
        d = self.delta
        return np.where(np.abs(u) <= d, 0.5 * u * u, 0.5 * d * d)

    def expand(self, E, count, builder):
        # huber(w) = min_u u^2 / 2 + delta |w - u|; per atom aux (u, s, t)
        d = self.delta
        X = _interleave(E, builder.var(3 * count), count, 3, 3)
        # columns: w v1 v2 u s t
        T_soc = np.array([[0, 0, 1, 0, 0, 1], [0, 0, 0, np.sqrt(2), 0, 0], [0, 0, -1, 0, 0, 1]], dtype=float)
        T_lin = np.array([[-1, 0, 0, 1, 1, 0], [1, 0, 0, -1, 1, 0], [0, 1, 0, 0, -d, -1]], dtype=float)
        builder.add(X.lmul(sp.kron(sp.eye(count), T_soc)), conic.soc(3).repeat(count))
        builder.nonneg(X.lmul(sp.kron(sp.eye(count), T_lin)))

    def to_dict(self):
        return {"id": "huber", "delta": self.delta}


@dataclass(frozen=True)
class SquaredHinge(Loss):
    def value(self, w):
        p = np.maximum(np.asarray(w, dtype=float), 0.0)
        return p * p

    def grad(self, w):
        return 2.0 * np.maximum(np.asarray(w, dtype=float), 0.0)

    def recession(self, w):
        return np.where(np.asarray(w) <= 0, 0.0, np.inf)

    def depth_term(self, u):
        return self.value(u)

    def expand(self, E, count, builder):
        X = _interleave(E, builder.var(count), count, 3, 1)
        # columns: w v1 v2 s
        T_soc = np.array([[0, 1, 1, 0], [0, 0, 0, 2], [0, 1, -1, 0]], dtype=float)
        T_lin = np.array([[0, 0, 0, 1], [-1, 0, 0, 1]], dtype=float)
        builder.add(X.lmul(sp.kron(sp.eye(count), T_soc)), conic.soc(3).repeat(count))
        builder.nonneg(X.lmul(sp.kron(sp.eye(count), T_lin)))

    def to_dict(self):
        return {"id": "squared_hinge"}


@dataclass(frozen=True)
class LogExp(Loss):
    """``log(1 + exp(w))``."""

    def value(self, w):
        return np.logaddexp(0.0, np.asarray(w, dtype=float))

    def grad(self, w):
        return expit(np.asarray(w, dtype=float))

    def recession(self, w):
        return np.maximum(np.asarray(w, dtype=float), 0.0)

    def depth_term(self, u):
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        # u >= 0: -u sigma(-u) - log1p(e^-u); u < 0: u sigma(u) - log1p(e^u)
        return -au * expit(-au) - np.log1p(np.exp(-au))

    def expand(self, E, count, builder):
        X = _interleave(E, builder.var(2 * count), count, 3, 2)
        # columns: w v1 v2 u1 u2; e^{-v1/v2} + e^{(w - v1)/v2} <= 1
        T_exp = np.array(
            [[0, -1, 0, 0, 0], [0, 0, 1, 0, 0], [0, 0, 0, 1, 0], [1, -1, 0, 0, 0], [0, 0, 1, 0, 0], [0, 0, 0, 0, 1]],
            dtype=float,
        )
        T_lin = np.array([[0, 0, 1, -1, -1]], dtype=float)
        builder.add(X.lmul(sp.kron(sp.eye(count), T_exp)), conic.exp_cone().repeat(2 * count))
        builder.nonneg(X.lmul(sp.kron(sp.eye(count), T_lin)))

    def to_dict(self):
        return {"id": "logexp"}


@dataclass(frozen=True)
class LogSumExp(Loss):
    n: int = 2

    @property
    def n_w(self):
        return self.n

    def value(self, w):
        return logsumexp(np.asarray(w, dtype=float), axis=-1)

    def grad(self, w):
        return softmax(np.asarray(w, dtype=float), axis=-1)

    def recession(self, w):
        return np.max(np.asarray(w, dtype=float), axis=-1)

    def depth_term(self, u):
        p = softmax(np.asarray(u, dtype=float), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-1)

    def perspective(self, w, y2):
        w = np.asarray(w, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        safe = np.where(y2 > 0, y2, 1.0)
        pos = y2 * self.value(w / safe[..., None])
        out = np.where(y2 > 0, pos, self.recession(w))
        return float(out) if out.ndim == 0 else out

    def expand(self, E, count, builder):
        n = self.n
        X = _interleave(E, builder.var(n * count), count, n + 2, n)
        # columns: w_1..w_n v1 v2 u_1..u_n; (w_i - v1, v2, u_i) in K_exp, sum u <= v2
        T_exp = np.zeros((3 * n, 2 * n + 2))
        for i in range(n):
            T_exp[3 * i, i] = 1.0
            T_exp[3 * i, n] = -1.0
            T_exp[3 * i + 1, n + 1] = 1.0
            T_exp[3 * i + 2, n + 2 + i] = 1.0
        T_lin = np.zeros((1, 2 * n + 2))
        T_lin[0, n + 1] = 1.0
        T_lin[0, n + 2 :] = -1.0
        builder.add(X.lmul(sp.kron(sp.eye(count), T_exp)), conic.exp_cone().repeat(n * count))
        builder.nonneg(X.lmul(sp.kron(sp.eye(count), T_lin)))

    def to_dict(self):
        return {"id": "log_sum_exp", "n": self.n}


def _interleave(E: Affine, aux: Affine, count: int, m_e: int, m_a: int) -> Affine:
    """Stack atom rows with their auxiliary rows so each atom is contiguous."""
    perm = []
    for i in range(count):
        perm.extend(range(i * m_e, (i + 1) * m_e))
        perm.extend(range(count * m_e + i * m_a, count * m_e + (i + 1) * m_a))
    return Affine.vstack([E, aux])[np.array(perm, dtype=int)]


def exp_disutility(a: float = 1.0) -> ExpDisutility:
    return ExpDisutility(float(a))


def quadratic(n: int = 1) -> Quadratic:
    return Quadratic(int(n))


def huber(delta: float = 1.0) -> Huber:
    return Huber(float(delta))


def squared_hinge() -> SquaredHinge:
    return SquaredHinge()


def logexp() -> LogExp:
    return LogExp()


def log_sum_exp(n: int) -> LogSumExp:
    return LogSumExp(int(n))


def loss_from_dict(d: dict) -> Loss:
    kind = d["id"]
    if kind == "exp_disutility":
        return exp_disutility(d.get("a", 1.0))
    if kind == "quadratic":
        return quadratic(d.get("n", 1))
    if kind == "huber":
        return huber(d.get("delta", 1.0))
    if kind == "squared_hinge":
        return squared_hinge()
    if kind == "logexp":
        return logexp()
    if kind == "log_sum_exp":
        return log_sum_exp(d["n"])
    raise ContractError(f"unknown loss id {kind!r}")


def perspective_value(loss: Loss, w, y2):
    if np.any(np.asarray(y2) < 0):
        raise ContractError("y2 must be nonnegative")
    return loss.perspective(w, y2)


def conic_expand(loss: Loss):
    """Return the expansion recipe ``(E, count, builder) -> None`` for ``loss``."""
    if type(loss).expand is Loss.expand:
        raise CapabilityError(f"no conic expansion for {type(loss).__name__}")
    return loss.expand


def perspective_depth(loss: Loss, W=REAL_LINE) -> float:
    """``sup_{u in W} grad l(u) @ u - l(u)``.

    For univariate losses the term is monotone on each side of 0, so the sup
    sits at an endpoint of the interval ``W = (lo, hi)``.
    """
    if loss.n_w == 1:
        lo, hi = float(W[0]), float(W[1])
        if lo > hi:
            raise ContractError("empty featured domain")
        return float(max(loss.depth_term(lo), loss.depth_term(hi)))
    if isinstance(loss, LogSumExp):
        lo = np.broadcast_to(np.asarray(W[0], dtype=float), (loss.n,))
        hi = np.broadcast_to(np.asarray(W[1], dtype=float), (loss.n,))
        if np.all(lo <= REAL_LINE[0]) and np.all(hi >= REAL_LINE[1]):
            return 0.0
    raise UnsupportedError(f"no closed-form depth for {type(loss).__name__} on this domain")


@dataclass(frozen=True)
class CastModel:
    loss: Loss
    W: tuple
    P: float

    @property
    def B(self) -> np.ndarray:
        n = self.loss.n_w
        B = np.zeros((n + 3, 2))
        B[n, 0] = 1.0
        B[n + 1, 1] = 1.0
        B[n + 2, 1] = 1.0
        return B

    @property
    def d(self) -> np.ndarray:
        return np.array([1.0, self.P])

    @property
    def cone(self) -> conic.ConeDescriptor:
        return conic.loss_perspective(self.loss) * conic.nonneg(1)

    def rhs(self, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        return np.concatenate([-w, [-self.P, 0.0, 1.0]])

    def rhs_template(self):
        """``(r0, R)`` with ``rhs(w) = r0 + R @ w``."""
        n = self.loss.n_w
        R = np.zeros((n + 3, n))
        R[:n] = -np.eye(n)
        return self.rhs(np.zeros(n)), R


def cast(loss: Loss, W=REAL_LINE, P: float | None = None) -> CastModel:
    depth = perspective_depth(loss, W)
    if P is None:
        P = depth + DEFAULT_MARGIN
    if not np.isfinite(depth):
        raise ContractError("perspective depth is infinite on this domain")
    if P < depth:
        raise ContractError(f"P = {P} is below the perspective depth {depth}")
    return CastModel(loss, tuple(W), float(P))


def eval_cast(c: CastModel, w):
    """``min_{1 <= y2 <= Y_MAX} P y2 + y2 l(w / y2) - P`` by golden section.

    Accepts a single input or an array of inputs (leading axes).
    """
    loss, P = c.loss, c.P
    w = np.asarray(w, dtype=float)
    multi = loss.n_w > 1
    shape = w.shape[:-1] if multi else w.shape

    def f(y):
        return P * y + loss.perspective(w, y) - P

    lo = np.ones(shape)
    hi = np.full(shape, Y_MAX)
    g = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while np.max(hi - lo) > GOLDEN_TOL:
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x1 = hi - g * (hi - lo)
        x2 = lo + g * (hi - lo)
        f1, f2 = f(x1), f(x2)
    best = np.minimum(np.minimum(f(lo), f(hi)), np.minimum(f(np.ones(shape)), f(np.full(shape, Y_MAX))))
    return float(best) if np.ndim(best) == 0 else best


def expand_program(program: conic.ConicProgram) -> conic.ConicProgram:
    """Rewrite every loss-perspective atom into standard cones."""
    if all("loss_perspective" not in c.cone.kinds() for c in program.constraints):
        return program
    b = ProgramBuilder()
    b.num_vars = program.num_vars
    b.names = dict(program.var_names or {})
    for c in program.constraints:
        E = Affine(c.A, c.b)
        # gather rows of like atoms so each loss is expanded once per constraint
        groups: dict = {}
        for atom, lo, hi in c.cone.blocks():
            key = atom.loss if atom.kind == "loss_perspective" else None
            rows, atoms = groups.setdefault(key, ([], []))
            rows.extend(range(lo, hi))
            atoms.append(atom)
        for key, (rows, atoms) in groups.items():
            sub = E[np.array(rows, dtype=int)]
            if key is None:
                b.add(sub, conic.ConeDescriptor(tuple(atoms)))
            else:
                conic_expand(key)(sub, len(atoms), b)
    obj = Affine(sp.csr_matrix(program.objective.reshape(1, -1)), [program.objective_offset])
    return b.build(obj)
