"""Command line entry point.

Exit codes: 0 ok, 1 a verification found a violation, 2 invalid input,
3 unsupported cone or loss, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from ..errors import (
    CapabilityError,
    ContractError,
    InvariantViolation,
    SolverError,
    TargetTooLowError,
    UnsupportedError,
    ValidationError,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_CAPABILITY, EXIT_SOLVER = 0, 1, 2, 3, 4
VERIFY_TOL = 1e-6


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        return np.linspace(float(lo), float(hi), int(steps))
    except ValueError:
        raise ContractError(f"grid must look like lo:hi:steps, got {text!r}") from None


# -- subcommands --------------------------------------------------------------


def cmd_solve(args) -> int:
    from ..engine import solve_satisficing
    from .modelio import load_model

    model = load_model(args.model)
    if args.tau is not None:
        model.target = {"tau": args.tau}
    elif args.lam is not None:
        model.target = {"lambda": args.lam}
    t0 = time.perf_counter()
    res = solve_satisficing(model)
    out = res.to_dict()
    out["status"] = res.status
    out["timing"] = {"total_s": time.perf_counter() - t0, **out.pop("stats")}
    _emit(out, args.out)
    return EXIT_OK


def cmd_empirical(args) -> int:
    from ..engine import empirical_optimum
    from .modelio import load_model

    model = load_model(args.model)
    Z0, x = empirical_optimum(model)
    _emit({"Z0": Z0, "x": x}, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from ..oracle import worst_case_grid
    from .modelio import load_model

    model = load_model(args.model, validate=False)
    sol = json.loads(Path(args.solution).read_text())
    x = np.asarray(sol["x"], dtype=float)
    k = float(sol["k"])
    ups = np.asarray(sol["upsilon"], dtype=float)
    tau = float(sol["tau"])
    worst = []
    for w, zhat in enumerate(model.samples):
        val, _ = worst_case_grid(model.eval, model.support, model.penalty, x, k, args.grid, zhat)
        worst.append(val)
    worst = np.asarray(worst)
    gap = float(np.max(worst - ups))
    budget = float(np.mean(ups) - tau)
    ok = gap <= VERIFY_TOL * (1 + np.max(np.abs(ups))) and budget <= VERIFY_TOL * (1 + abs(tau))
    _emit({"ok": bool(ok), "max_gap": gap, "budget_excess": budget, "grid_worst": worst}, args.out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _write_portfolio(rows, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    timing = [r.pop("seconds") for r in rows]
    payload = {"rows": rows, "timing": {"seconds": timing}}
    (out_dir / "portfolio.json").write_text(json.dumps(_jsonable(payload), indent=1, sort_keys=True) + "\n")
    cols = ["a", "gamma", "lambda", "Z0", "k", "k_direct", "ce_empirical", "ce_markowitz", "ce_satisficing", "error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r.get(c), float) else r.get(c, "") for c in cols])
    (out_dir / "portfolio.csv").write_text(buf.getvalue())


def cmd_portfolio(args) -> int:
    from .modelio import read_samples_csv, save_model, write_samples_csv
    from .portfolio import A_GRID, GAMMA_GRID, LAMBDA_GRID, PortfolioConfig, gen_two_point_samples, portfolio_model, run_portfolio

    cfg = PortfolioConfig(omega=args.omega, seed=args.seed)
    samples = read_samples_csv(args.samples) if args.samples else gen_two_point_samples(cfg)
    out_dir = Path(args.out_dir)
    if args.emit_model:
        a = args.a if args.a is not None else 1.0
        g = args.gamma if args.gamma is not None else 3
        lam = args.lam if args.lam is not None else 0.01
        out_dir.mkdir(parents=True, exist_ok=True)
        write_samples_csv(samples, out_dir / "samples.csv", [f"asset{i + 1}" for i in range(samples.shape[1])])
        save_model(portfolio_model(samples, a, g, lam, cfg.pad), out_dir / "model.json", "samples.csv")
        sys.stdout.write(f"{out_dir / 'model.json'}\n")
        return EXIT_OK
    rows = run_portfolio(
        cfg,
        (args.a,) if args.a is not None else A_GRID,
        (args.gamma,) if args.gamma is not None else GAMMA_GRID,
        (args.lam,) if args.lam is not None else LAMBDA_GRID,
        samples=samples,
        check_direct=not args.no_direct,
        jobs=args.jobs,
    )
    _write_portfolio(rows, out_dir)
    failed = [r for r in rows if "error" in r]
    sys.stdout.write(f"{len(rows)} cells, {len(failed)} failed, written to {out_dir}\n")
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_lotsizing(args) -> int:
    from .lotsizing import run_lotsizing

    res = run_lotsizing(args.nodes, args.seed, args.mode, args.method, r=args.r, tau=args.tau, time_limit=args.time_limit)
    out = res.to_dict()
    out["timing"] = out.pop("timings")
    _emit(out, args.out)
    return EXIT_OK if res.status == "optimal" else EXIT_SOLVER


def cmd_teststrict(args) -> int:
    from .teststrict import DEFAULT_TAUS, run_teststrict

    taus = _parse_grid(args.tau_grid) if args.tau_grid else DEFAULT_TAUS
    rows = run_teststrict(taus)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "k_primal", "k_dual"])
    for r in rows:
        w.writerow([repr(r["tau"]), repr(r["k_primal"]), repr(r["k_dual"])])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK if all(np.isfinite(r["k_dual"]) for r in rows) else EXIT_SOLVER


def cmd_mcbound(args) -> int:
    from ..oracle import mc_budget_bound

    p, bound, se = mc_budget_bound(args.n, args.c, args.dist, args.trials, args.seed)
    _emit({"n": args.n, "c": args.c, "dist": args.dist, "trials": args.trials, "p_hat": p, "bound": bound, "se": se, "holds": p <= bound + 3 * se}, args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robsat", description="Robust conic satisficing toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the satisficing problem of a model file")
    p.add_argument("model")
    t = p.add_mutually_exclusive_group()
    t.add_argument("--tau", type=float)
    t.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("empirical", help="empirical optimum of a model file")
    p.add_argument("model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_empirical)

    p = sub.add_parser("verify", help="grid check of a solution against its model")
    p.add_argument("model")
    p.add_argument("solution")
    p.add_argument("--grid", type=int, default=None, help="points per dimension (n_z <= 4)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("portfolio", help="portfolio study over the (a, gamma, lambda) grid")
    p.add_argument("--a", type=float)
    p.add_argument("--gamma", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--omega", type=int, default=100)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--samples")
    p.add_argument("--emit-model", action="store_true")
    p.add_argument("--no-direct", action="store_true", help="skip the direct cross-check")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default="portfolio_out")
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("lotsizing", help="affine lot-sizing formulations")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--mode", choices=("robust", "satisficing"), required=True)
    p.add_argument("--method", choices=("primal", "dual"), required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--r", type=float)
    g.add_argument("--tau", type=float)
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lotsizing)

    p = sub.add_parser("teststrict", help="primal versus dual rule on the fixed two-stage instance")
    p.add_argument("--tau-grid", help="lo:hi:steps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_teststrict)

    p = sub.add_parser("mcbound", help="Monte Carlo check of the budgeted-set probability bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--dist", choices=("uniform", "twopoint"), default="uniform")
    p.add_argument("--trials", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mcbound)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ContractError, ValidationError, TargetTooLowError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (CapabilityError, UnsupportedError) as exc:
        sys.stderr.write(f"unsupported: {exc}\n")
        return EXIT_CAPABILITY
    except (SolverError, InvariantViolation) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
