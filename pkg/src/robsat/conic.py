"""Cones, a sparse conic program representation, and a cvxpy backend.

A constraint ``(A, b, cone)`` means ``A @ v + b`` lies in ``cone`` where ``v``
is the stacked vector of program variables.  Atomic cones:

* ``zero(n)``: the origin in R^n
* ``free(n)``: all of R^n (only produced by :func:`dual_cone`)
* ``nonneg(n)``: the nonnegative orthant
* ``soc(n)``: ``{(t, u) : ||u||_2 <= t}``
* ``psd(n)``: n x n PSD matrices in scaled symmetric vectorization
* ``exp()``: closure of ``{(x, y, z) : y > 0, y exp(x / y) <= z}``
* ``loss_perspective(loss)``: ``{(w, v1, v2) : v2 l(w / v2) <= v1, v2 >= 0}``
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CapabilityError, ContractError, UnsupportedError

DEFAULT_TOL = 1e-7
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Atom:
    kind: str
    size: int
    loss: Any = None

    @property
    def dim(self) -> int:
        if self.kind == "psd":
            return self.size * (self.size + 1) // 2
        if self.kind == "loss_perspective":
            return self.loss.n_w + 2
        return self.size

    def to_dict(self) -> dict:
        if self.kind == "psd":
            return {"type": "psd", "order": self.size}
        if self.kind == "loss_perspective":
            return {"type": "loss_perspective", "loss": self.loss.to_dict()}
        return {"type": self.kind, "dim": self.size}


@dataclass(frozen=True)
class ConeDescriptor:
    atoms: tuple

    @property
    def total_dim(self) -> int:
        return sum(a.dim for a in self.atoms)

    def __mul__(self, other: "ConeDescriptor") -> "ConeDescriptor":
        return ConeDescriptor(self.atoms + other.atoms)

    def repeat(self, count: int) -> "ConeDescriptor":
        return ConeDescriptor(self.atoms * count)

    def kinds(self) -> set:
        return {a.kind for a in self.atoms}

    def blocks(self):
        """Yield ``(atom, start, stop)`` for every atom."""
        start = 0
        for a in self.atoms:
            yield a, start, start + a.dim
            start += a.dim

    def to_list(self) -> list:
        return [a.to_dict() for a in self.atoms]


def zero(n: int) -> ConeDescriptor:
    return ConeDescriptor((Atom("zero", int(n)),))


def free(n: int) -> ConeDescriptor:
    return ConeDescriptor((Atom("free", int(n)),))


def nonneg(n: int) -> ConeDescriptor:
    return ConeDescriptor((Atom("nonneg", int(n)),))


def soc(n: int) -> ConeDescriptor:
    if n < 1:
        raise ContractError("soc dimension must be at least 1")
    return ConeDescriptor((Atom("soc", int(n)),))


def psd(order: int) -> ConeDescriptor:
    return ConeDescriptor((Atom("psd", int(order)),))


def exp_cone() -> ConeDescriptor:
    return ConeDescriptor((Atom("exp", 3),))


def loss_perspective(loss) -> ConeDescriptor:
    return ConeDescriptor((Atom("loss_perspective", loss.n_w + 2, loss),))


def product(*cones: ConeDescriptor) -> ConeDescriptor:
    atoms: tuple = ()
    for c in cones:
        atoms = atoms + c.atoms
    return ConeDescriptor(atoms)


def atom_from_dict(d: dict) -> ConeDescriptor:
    kind = d["type"]
    if kind == "psd":
        return psd(d["order"])
    if kind == "loss_perspective":
        from .casting import loss_from_dict

        return loss_perspective(loss_from_dict(d["loss"]))
    if kind == "exp":
        return exp_cone()
    if kind in ("zero", "free", "nonneg", "soc"):
        return ConeDescriptor((Atom(kind, int(d["dim"])),))
    raise ContractError(f"unknown cone type {kind!r}")


def cone_from_list(items: Sequence[dict]) -> ConeDescriptor:
    return product(*[atom_from_dict(d) for d in items])


# -- symmetric vectorization ---------------------------------------------


def svec_indices(n: int):
    """Row/column pairs in svec order (upper triangle, row by row)."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def svec(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    return np.array([X[i, j] if i == j else SQRT2 * X[i, j] for i, j in svec_indices(n)])


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = int(round((np.sqrt(8 * len(v) + 1) - 1) / 2))
    X = np.zeros((n, n))
    for val, (i, j) in zip(v, svec_indices(n)):
        if i == j:
            X[i, i] = val
        else:
            X[i, j] = X[j, i] = val / SQRT2
    return X


# -- membership ------------------------------------------------------------


def _exp_member(x: float, y: float, z: float, tol: float) -> bool:
    if y < -tol or z < -tol:
        return False
    if y <= tol:
        return x <= tol
    r = x / y
    if r > 700:
        return False
    return y * np.exp(r) <= z + tol


def membership(cone: ConeDescriptor, v, tol: float = DEFAULT_TOL) -> bool:
    """Check ``v`` against every atom of ``cone``.

    The tolerance is relative: it is scaled by ``||v||_inf + 1``.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != cone.total_dim:
        raise ContractError(f"vector length {v.shape[0]} != cone dimension {cone.total_dim}")
    if tol <= 0:
        raise ContractError("tol must be positive")
    scale = tol * (np.max(np.abs(v), initial=0.0) + 1.0)
    for atom, lo, hi in cone.blocks():
        blk = v[lo:hi]
        k = atom.kind
        if k == "zero":
            ok = np.all(np.abs(blk) <= scale)
        elif k == "free":
            ok = True
        elif k == "nonneg":
            ok = np.all(blk >= -scale)
        elif k == "soc":
            ok = blk[0] >= np.linalg.norm(blk[1:]) - scale
        elif k == "psd":
            ok = np.linalg.eigvalsh(smat(blk)).min() >= -scale
        elif k == "exp":
            ok = _exp_member(blk[0], blk[1], blk[2], scale)
        elif k == "loss_perspective":
            n_w = atom.loss.n_w
            w, v1, v2 = blk[:n_w], blk[n_w], blk[n_w + 1]
            if v2 < -scale:
                ok = False
            else:
                val = atom.loss.perspective(w if n_w > 1 else w[0], max(v2, 0.0))
                ok = val <= v1 + scale
                if not ok and v2 <= scale:
                    # boundary: accept if a tiny positive v2 works
                    val2 = atom.loss.perspective(w if n_w > 1 else w[0], scale)
                    ok = val2 <= v1 + scale
        else:
            raise ContractError(f"unknown atom {k}")
        if not ok:
            return False
    return True


def dual_cone(cone: ConeDescriptor) -> ConeDescriptor:
    """Atom-by-atom dual for self-dual atoms, with zero and free swapped."""
    out = []
    for a in cone.atoms:
        if a.kind in ("nonneg", "soc", "psd"):
            out.append(a)
        elif a.kind == "zero":
            out.append(Atom("free", a.size))
        elif a.kind == "free":
            out.append(Atom("zero", a.size))
        else:
            raise UnsupportedError(f"dual cone of {a.kind} atoms is not provided")
    return ConeDescriptor(tuple(out))


# -- program representation ------------------------------------------------


@dataclass
class Constraint:
    A: sp.csr_matrix
    b: np.ndarray
    cone: ConeDescriptor


@dataclass
class ConicProgram:
    num_vars: int
    objective: np.ndarray
    constraints: list = field(default_factory=list)
    var_names: dict | None = None
    objective_offset: float = 0.0

    def check(self) -> None:
        if len(self.objective) != self.num_vars:
            raise ContractError("objective length must equal num_vars")
        for i, c in enumerate(self.constraints):
            if c.A.shape[1] != self.num_vars:
                raise ContractError(f"constraint {i}: A has {c.A.shape[1]} columns")
            if c.A.shape[0] != c.cone.total_dim or len(c.b) != c.cone.total_dim:
                raise ContractError(f"constraint {i}: rows do not match cone dimension")

    @property
    def num_rows(self) -> int:
        return sum(c.cone.total_dim for c in self.constraints)

    def residuals(self, v: np.ndarray):
        for c in self.constraints:
            yield c.cone, c.A @ v + c.b

    def is_feasible(self, v, tol: float = 1e-6) -> bool:
        return all(membership(cone, r, tol) for cone, r in self.residuals(np.asarray(v)))


@dataclass
class SolveResult:
    status: str
    objective_value: float
    primal: np.ndarray | None
    solver_info: dict = field(default_factory=dict)

    def block(self, program: ConicProgram, name: str) -> np.ndarray:
        lo, hi = program.var_names[name]
        return self.primal[lo:hi]


# -- JSON -----------------------------------------------------------------


def _matrix_to_json(A: sp.spmatrix) -> dict:
    A = sp.coo_matrix(A)
    return {
        "shape": list(A.shape),
        "rows": A.row.tolist(),
        "cols": A.col.tolist(),
        "vals": A.data.tolist(),
    }


def _matrix_from_json(obj, ncols: int) -> sp.csr_matrix:
    if isinstance(obj, dict):
        return sp.csr_matrix((obj["vals"], (obj["rows"], obj["cols"])), shape=tuple(obj["shape"]))
    arr = np.asarray(obj, dtype=float).reshape(-1, ncols)
    return sp.csr_matrix(arr)


def program_to_dict(p: ConicProgram) -> dict:
    return {
        "num_vars": p.num_vars,
        "objective": np.asarray(p.objective, dtype=float).tolist(),
        "objective_offset": p.objective_offset,
        "constraints": [
            {"A": _matrix_to_json(c.A), "b": np.asarray(c.b).tolist(), "cone": c.cone.to_list()}
            for c in p.constraints
        ],
        "var_names": p.var_names,
    }


def program_from_dict(d: dict) -> ConicProgram:
    n = int(d["num_vars"])
    cons = [
        Constraint(_matrix_from_json(c["A"], n), np.asarray(c["b"], dtype=float), cone_from_list(c["cone"]))
        for c in d["constraints"]
    ]
    names = d.get("var_names")
    if names is not None:
        names = {k: tuple(v) for k, v in names.items()}
    p = ConicProgram(n, np.asarray(d["objective"], dtype=float), cons, names, float(d.get("objective_offset", 0.0)))
    p.check()
    return p


def dump_program(p: ConicProgram, path) -> None:
    with open(path, "w") as fh:
        json.dump(program_to_dict(p), fh)


def load_program(path) -> ConicProgram:
    with open(path) as fh:
        return program_from_dict(json.load(fh))


# -- affine expressions and builder -----------------------------------------


class Affine:
    """Sparse affine map ``mat @ v + const`` over a growing variable vector."""

    __slots__ = ("mat", "const")
    __array_ufunc__ = None

    def __init__(self, mat, const):
        self.mat = sp.csr_matrix(mat)
        self.const = np.asarray(const, dtype=float).ravel()
        if self.mat.shape[0] != self.const.shape[0]:
            raise ContractError("affine rows mismatch")

    @property
    def rows(self) -> int:
        return self.const.shape[0]

    @staticmethod
    def constant(c, ncols: int = 0) -> "Affine":
        c = np.atleast_1d(np.asarray(c, dtype=float)).ravel()
        return Affine(sp.csr_matrix((len(c), ncols)), c)

    def _pad(self, ncols: int) -> sp.csr_matrix:
        m = self.mat
        if m.shape[1] < ncols:
            m = sp.hstack([m, sp.csr_matrix((m.shape[0], ncols - m.shape[1]))], format="csr")
        return m

    def __add__(self, other):
        if not isinstance(other, Affine):
            other = Affine.constant(np.broadcast_to(np.asarray(other, dtype=float), (self.rows,)))
        if other.rows != self.rows:
            raise ContractError(f"cannot add {self.rows} rows to {other.rows}")
        n = max(self.mat.shape[1], other.mat.shape[1])
        return Affine(self._pad(n) + other._pad(n), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.mat, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Affine) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s: float):
        return Affine(self.mat * float(s), self.const * float(s))

    __rmul__ = __mul__

    def lmul(self, M) -> "Affine":
        """Left-multiply by a dense or sparse constant matrix."""
        M = sp.csr_matrix(M) if sp.issparse(M) else sp.csr_matrix(np.atleast_2d(np.asarray(M, dtype=float)))
        return Affine(M @ self.mat, M @ self.const)

    __rmatmul__ = lmul

    def __getitem__(self, idx):
        idx = np.arange(self.rows)[idx]
        idx = np.atleast_1d(idx)
        return Affine(self.mat[idx], self.const[idx])

    def sum(self) -> "Affine":
        return self.lmul(np.ones((1, self.rows)))

    def value(self, v: np.ndarray) -> np.ndarray:
        return self._pad(len(v)) @ v + self.const

    @staticmethod
    def vstack(parts: Sequence["Affine"]) -> "Affine":
        parts = list(parts)
        n = max(p.mat.shape[1] for p in parts)
        return Affine(sp.vstack([p._pad(n) for p in parts], format="csr"), np.concatenate([p.const for p in parts]))


class ProgramBuilder:
    """Allocate named variable blocks and collect conic constraints."""

    def __init__(self):
        self.num_vars = 0
        self.names: dict = {}
        self.constraints: list = []

    def var(self, size: int, name: str | None = None) -> Affine:
        size = int(size)
        lo = self.num_vars
        self.num_vars += size
        if name is not None:
            self.names[name] = (lo, self.num_vars)
        mat = sp.csr_matrix((np.ones(size), (np.arange(size), np.arange(lo, lo + size))), shape=(size, self.num_vars))
        return Affine(mat, np.zeros(size))

    def add(self, expr: Affine, cone: ConeDescriptor) -> None:
        if expr.rows != cone.total_dim:
            raise ContractError(f"expression has {expr.rows} rows, cone needs {cone.total_dim}")
        self.constraints.append((expr, cone))

    def nonneg(self, expr: Affine) -> None:
        if expr.rows:
            self.add(expr, nonneg(expr.rows))

    def equal(self, expr: Affine) -> None:
        if expr.rows:
            self.add(expr, zero(expr.rows))

    def build(self, objective: Affine) -> ConicProgram:
        n = self.num_vars
        obj = np.asarray(objective._pad(n).todense()).ravel() if objective.mat.shape[1] else np.zeros(n)
        cons = [Constraint(e._pad(n), e.const, c) for e, c in self.constraints]
        p = ConicProgram(n, obj, cons, dict(self.names), float(objective.const[0]))
        p.check()
        return p


# -- backend ----------------------------------------------------------------

SUPPORTED = {"zero", "free", "nonneg", "soc", "psd", "exp"}
DEFAULT_OPTIONS = {
    "solver": "CLARABEL",
    "tol_gap_abs": 1e-9,
    "tol_gap_rel": 1e-9,
    "tol_feas": 1e-9,
    "tol_ktratio": 1e-7,
    "max_iter": 500,
}


def _group_rows(program: ConicProgram):
    """Collect row blocks of every constraint by atom kind."""
    groups: dict = {}
    for c in program.constraints:
        for atom, lo, hi in c.cone.blocks():
            groups.setdefault((atom.kind, atom.size), []).append((c, lo, hi))
    return groups


def _stack(items):
    A = sp.vstack([c.A[lo:hi] for c, lo, hi in items], format="csr")
    b = np.concatenate([c.b[lo:hi] for c, lo, hi in items])
    return A, b


def _svec_to_full(n: int) -> sp.csr_matrix:
    """Matrix S with vec_rowmajor(X) = S @ svec(X)."""
    rows, cols, vals = [], [], []
    for k, (i, j) in enumerate(svec_indices(n)):
        if i == j:
            rows.append(i * n + i)
            cols.append(k)
            vals.append(1.0)
        else:
            for r in (i * n + j, j * n + i):
                rows.append(r)
                cols.append(k)
                vals.append(1.0 / SQRT2)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, len(svec_indices(n))))


def solve(program: ConicProgram, backend_options: dict | None = None) -> SolveResult:
    """Solve ``min c @ v`` subject to the program's conic constraints."""
    import cvxpy as cp

    program.check()
    for c in program.constraints:
        bad = c.cone.kinds() - SUPPORTED
        if bad:
            raise CapabilityError(f"backend does not support cone types {sorted(bad)}; expand them first")

    opts = dict(DEFAULT_OPTIONS)
    opts.update(backend_options or {})
    solver = opts.pop("solver")
    if solver != "CLARABEL":
        for key in ("tol_gap_abs", "tol_gap_rel", "tol_feas", "tol_ktratio", "max_iter"):
            opts.pop(key, None)

    t0 = time.perf_counter()
    n = program.num_vars
    v = cp.Variable(n)
    cons = []
    for (kind, size), items in _group_rows(program).items():
        if kind == "free":
            continue
        A, b = _stack(items)
        expr = A @ v + b
        if kind == "zero":
            cons.append(expr == 0)
        elif kind == "nonneg":
            cons.append(expr >= 0)
        elif kind == "soc":
            m = len(items)
            X = cp.reshape(expr, (m, size), order="C")
            if size == 1:
                cons.append(X[:, 0] >= 0)
            else:
                cons.append(cp.SOC(X[:, 0], X[:, 1:], axis=1))
        elif kind == "exp":
            X = cp.reshape(expr, (len(items), 3), order="C")
            cons.append(cp.ExpCone(X[:, 0], X[:, 1], X[:, 2]))
        elif kind == "psd":
            S = _svec_to_full(size)
            dim = S.shape[1]
            for i in range(len(items)):
                full = S @ expr[i * dim : (i + 1) * dim]
                M = cp.reshape(full, (size, size), order="C")
                cons.append((M + M.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(program.objective @ v + program.objective_offset), cons)
    build = time.perf_counter() - t0
    info = {"solver": solver, "build_s": build, "attempts": 0}
    fallback = None
    for extra in _retry_ladder(solver, opts):
        result = _attempt(prob, v, solver, {**opts, **extra}, info)
        if result.status != "numerical_error" and not info.get("inaccurate"):
            return result
        if fallback is None or (fallback.status == "numerical_error" and result.status != "numerical_error"):
            fallback, fallback_info = result, dict(info)
    fallback.solver_info = fallback_info
    return fallback


def _retry_ladder(solver: str, opts: dict):
    """Option overrides tried in turn while a solve is inaccurate or fails."""
    yield {}
    if solver == "CLARABEL" and opts.get("equilibrate_enable", True):
        yield {"equilibrate_enable": False}


def _attempt(prob, v, solver: str, opts: dict, info: dict) -> SolveResult:
    import cvxpy as cp

    t0 = time.perf_counter()
    info["attempts"] += 1
    info.pop("error", None)
    # a fresh problem keeps cvxpy from reusing a cached solver with the old settings
    prob = cp.Problem(prob.objective, prob.constraints)
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            prob.solve(solver=solver, **opts)
    except cp.error.SolverError as exc:
        info["error"] = str(exc)
        info["inaccurate"] = False
        info["solve_s"] = info.get("solve_s", 0.0) + time.perf_counter() - t0
        return SolveResult("numerical_error", float("nan"), None, dict(info))
    info["solve_s"] = info.get("solve_s", 0.0) + time.perf_counter() - t0
    info["cvxpy_status"] = prob.status
    status = {
        cp.OPTIMAL: "optimal",
        cp.OPTIMAL_INACCURATE: "optimal",
        cp.INFEASIBLE: "infeasible",
        cp.INFEASIBLE_INACCURATE: "infeasible",
        cp.UNBOUNDED: "unbounded",
        cp.UNBOUNDED_INACCURATE: "unbounded",
    }.get(prob.status, "numerical_error")
    info["inaccurate"] = prob.status.endswith("inaccurate")
    if status == "optimal":
        return SolveResult(status, float(prob.value), np.asarray(v.value, dtype=float), dict(info))
    value = {"infeasible": np.inf, "unbounded": -np.inf}.get(status, np.nan)
    return SolveResult(status, float(value), None, dict(info))
