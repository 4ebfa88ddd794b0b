"""JSON model files and CSV sample files.

A model file holds

    {"eval": {"B", "d", "f0", "fX", "F0", "FX", "cone", ["cast": {"loss", "featured_domain", "P"}]},
     "support": {"H", "h"}, "penalty": {...}, "samples": path or rows,
     "decision_set": {"A", "b", ["E", "e"]}, "target": {"tau"} or {"lambda"}}

A relative sample path is resolved against the model file's directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .. import conic
from ..casting import cast, loss_from_dict
from ..engine import DecisionSet, EvaluationFunction, SatisficingModel, attach_cast
from ..errors import ContractError, ValidationError
from ..oracle import check_complete_bounded_recourse
from ..penalty import PolyhedralSupport, penalty_from_dict, validate_assumption3

REQUIRED = ("eval", "support", "penalty", "samples", "decision_set")
EVAL_KEYS = ("B", "d", "f0", "F0", "cone")


def write_samples_csv(samples: np.ndarray, path, names=None) -> None:
    """Header of column names, then one sample per row with 17 significant digits."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    names = names or [f"z{i + 1}" for i in range(samples.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in samples:
            w.writerow([f"{v:.17g}" for v in row])


def read_samples_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ContractError(f"{path}: no sample rows")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ContractError(f"{path}: {exc}") from exc


def _array(d: dict, key: str, where: str):
    try:
        return np.asarray(d[key], dtype=float)
    except KeyError:
        raise ContractError(f"{where}: missing field {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise ContractError(f"{where}.{key}: {exc}") from None


def _rows(M: np.ndarray, n_x: int) -> np.ndarray:
    """Reshape ``M`` to ``n_x`` columns; empty input becomes a ``0 x n_x`` matrix."""
    if M.size == 0:
        return np.zeros((0, n_x))
    if n_x == 0 or M.size % n_x:
        raise ContractError(f"decision_set: {M.size} entries do not fit {n_x} columns")
    return M.reshape(-1, n_x)


def eval_from_dict(d: dict) -> EvaluationFunction:
    for key in EVAL_KEYS:
        if key not in d:
            raise ContractError(f"eval: missing field {key!r}")
    B = _array(d, "B", "eval")
    f0 = _array(d, "f0", "eval")
    n_f = f0.size
    fX = np.asarray(d.get("fX", np.zeros((n_f, 0))), dtype=float)
    FX = np.asarray(d.get("FX", []), dtype=float)
    try:
        ev = EvaluationFunction(B, _array(d, "d", "eval"), f0, fX, _array(d, "F0", "eval"), FX, conic.cone_from_list(d["cone"]))
    except ValueError as exc:
        raise ContractError(f"eval: {exc}") from None
    if "cast" in d:
        c = d["cast"]
        P = c.get("P")
        cm = cast(loss_from_dict(c["loss"]), tuple(c["featured_domain"]), None if P is None else float(P))
        attach_cast(ev, cm)
    return ev


def model_from_dict(d: dict, base_dir=None) -> SatisficingModel:
    missing = [k for k in REQUIRED if k not in d]
    if missing:
        raise ContractError(f"model: missing fields {missing}")
    ev = eval_from_dict(d["eval"])
    sup = PolyhedralSupport(_array(d["support"], "H", "support"), _array(d["support"], "h", "support"))
    pen = penalty_from_dict(d["penalty"], ev.n_z)
    s = d["samples"]
    if isinstance(s, str):
        p = Path(s)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        samples = read_samples_csv(p)
    else:
        samples = np.asarray(s, dtype=float)
    ds = d["decision_set"]
    A = _rows(_array(ds, "A", "decision_set"), ev.n_x)
    E = ds.get("E")
    if E is not None:
        E = _rows(np.asarray(E, dtype=float), ev.n_x)
    try:
        X = DecisionSet(A, _array(ds, "b", "decision_set"), E, ds.get("e"))
    except ValueError as exc:
        raise ContractError(f"decision_set: {exc}") from None
    target = dict(d.get("target", {}))
    if len(set(target) & {"tau", "lambda"}) > 1:
        raise ContractError("target: give either tau or lambda")
    return SatisficingModel(ev, sup, pen, samples, X, target)


def validate_model(model: SatisficingModel, recourse_trials: int = 64) -> None:
    """Run the support, penalty, sample and recourse checks; raise on the first failure."""
    sup = model.support
    bad = np.flatnonzero(sup.h < 0)
    if bad.size:
        raise ValidationError(f"support.h: negative entries at rows {bad.tolist()}, so 0 is not in Z")
    rep = validate_assumption3(model.penalty)
    if not rep.ok:
        raise ValidationError(
            f"penalty: origin={rep.origin} strict_interior={rep.strict_interior} bounded={rep.bounded}"
        )
    viol = model.samples @ sup.H.T - sup.h
    out = np.flatnonzero(np.max(viol, axis=1) > 1e-9)
    if out.size:
        raise ValidationError(f"samples: rows {out.tolist()} lie outside the support")
    ev = model.eval
    rec = check_complete_bounded_recourse(ev.B, ev.d, ev.cone, trials=recourse_trials)
    if not rec.bounded:
        raise ValidationError(f"eval: recourse is unbounded (min d @ y over B y in K is {rec.bounded_value})")
    if not rec.complete:
        raise ValidationError(f"eval: recourse is not complete, witness direction {np.round(rec.witness, 6).tolist()}")


def model_to_dict(model: SatisficingModel, samples_path: str | None = None) -> dict:
    return {
        "eval": model.eval.to_dict(),
        "support": model.support.to_dict(),
        "penalty": model.penalty.to_dict(),
        "samples": samples_path if samples_path is not None else model.samples.tolist(),
        "decision_set": model.decision_set.to_dict(),
        "target": dict(model.target),
    }


def load_model(path, validate: bool = True, recourse_trials: int = 64) -> SatisficingModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    model = model_from_dict(d, base_dir=path.parent)
    if validate:
        validate_model(model, recourse_trials)
    return model


def dumps_model(model: SatisficingModel, samples_path: str | None = None) -> str:
    return json.dumps(model_to_dict(model, samples_path), indent=1)


def save_model(model: SatisficingModel, path, samples_path: str | None = None) -> None:
    Path(path).write_text(dumps_model(model, samples_path) + "\n")
