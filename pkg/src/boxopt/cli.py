"""Command-line entry point: ``boxopt solve``, ``boxopt bench`` and ``boxopt check``.

Results go to stdout (or ``--out``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .auglag import AuglagConfig, AuglagResult, ConstrainedProblem, Status, solve
from .checks import SUITES
from .io import FormatError, load_manifest
from .modeling import BindingError, ModelError, compile_model, parse
from .problems import (
    build_dual_svm,
    build_fair_logreg,
    build_joint_prob,
    build_nnls,
    gen_fairness,
    gen_joint_prob,
    gen_nnls,
    gen_svm_blobs,
)
from .problems.fairness import DEFAULT_LAMBDA as FAIR_LAMBDA
from .problems.jointprob import DEFAULT_LAMBDA as JOINT_LAMBDA
from .problems.svm import DEFAULT_C, DEFAULT_GAMMA
from .solver import SolverConfig

log = logging.getLogger("boxopt")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_SOLVER_FAILURE = 3
EXIT_CHECK_FAILED = 4

CSV_COLUMNS = (
    "experiment",
    "n",
    "m",
    "seed",
    "rep",
    "time_ms",
    "outer_iters",
    "inner_iters_total",
    "f",
    "violation_inf",
    "stationarity_inf",
    "status",
    "solver_tol",
    "feas_tol",
    "extra_params",
)

SUMMARY_COLUMNS = (
    "experiment",
    "size",
    "reps",
    "converged",
    "time_ms_mean",
    "time_ms_std",
    "f_mean",
    "f_std",
    "violation_inf_max",
)


class UsageError(Exception):
    pass


def _exit_code(status: Status) -> int:
    if status is Status.CONVERGED:
        return EXIT_OK
    if status in (Status.MAX_OUTER, Status.MAX_ITERS):
        return EXIT_NOT_CONVERGED
    return EXIT_SOLVER_FAILURE


def _auglag_config(args) -> AuglagConfig:
    inner = SolverConfig()
    overrides: dict[str, Any] = {}
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if args.memory is not None:
        overrides["memory_m"] = args.memory
    try:
        inner = replace(inner, **overrides)
        cfg = AuglagConfig(inner=inner)
        if args.feas_tol is not None:
            cfg = replace(cfg, feas_tol=args.feas_tol)
        if getattr(args, "max_outer", None) is not None:
            cfg = replace(cfg, max_outer=args.max_outer)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _write_output(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).write_text(text)


# solve


def _variable_report(values: np.ndarray, limit: int) -> Any:
    flat = values.reshape(-1, order="F")
    if flat.size <= limit:
        return values.tolist()
    return {
        "shape": list(values.shape),
        "min": float(flat.min()),
        "max": float(flat.max()),
        "norm2": float(np.linalg.norm(flat)),
    }


def cmd_solve(args) -> int:
    try:
        source = Path(args.model).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read model: {exc}") from None
    try:
        model = parse(source)
    except ModelError as exc:
        raise UsageError(f"{args.model}: {exc}") from None

    bindings: dict[str, Any] = {}
    if args.data is not None:
        try:
            bindings = load_manifest(args.data)
        except (OSError, ValueError, FormatError) as exc:
            raise UsageError(f"cannot load data manifest: {exc}") from None
    for decl in model.parameters:
        if decl.name not in bindings:
            raise UsageError(f"unbound parameter: {decl.name}")
    try:
        compiled, problem = compile_model(model, bindings, absorb_bounds=not args.no_absorb)
    except BindingError as exc:
        raise UsageError(f"{args.model}: {exc}") from None
    except ModelError as exc:
        raise UsageError(f"{args.model}: {exc}") from None

    cfg = _auglag_config(args)
    start = time.perf_counter()
    result = solve(problem, cfg)
    elapsed = (time.perf_counter() - start) * 1e3

    if args.format == "json":
        doc = {
            "status": result.status.value,
            "f": result.f,
            "violation": result.violation,
            "stationarity": result.stationarity,
            "outer_iterations": result.outer_iters,
            "inner_iterations": result.inner_iters,
            "time_ms": elapsed,
            "x": {
                name: _variable_report(
                    result.x[slot.offset:slot.stop].reshape(slot.shape, order="F")
                    if slot.shape[1] > 1
                    else result.x[slot.offset:slot.stop],
                    args.print_limit,
                )
                for name, slot in compiled.slots.items()
            },
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("variable", "index", "value"))
        for name, slot in compiled.slots.items():
            for i, v in enumerate(result.x[slot.offset:slot.stop]):
                w.writerow((name, i, repr(float(v))))
        text = buf.getvalue()
    _write_output(text, args.out)
    log.info("solve: %s after %d outer rounds", result.status.value, result.outer_iters)
    return _exit_code(result.status)


# bench


@dataclass(frozen=True)
class Experiment:
    default_sizes: tuple[float, ...]
    build: Callable[[float, int, argparse.Namespace], tuple[ConstrainedProblem, Callable, dict]]
    size_is_int: bool = True


def _nnls(kind: str):
    def build(size, seed, args):
        inst = gen_nnls(kind, size, seed)
        obj, box = build_nnls(inst)
        prob = ConstrainedProblem(n=len(box), objective=obj, bounds=box)
        rows, cols = inst.a.shape
        return prob, obj, {"kind": kind, "t": size, "rows": rows, "cols": cols}

    return build


def _svm(size, seed, args):
    pts, labels = gen_svm_blobs(int(size), seed)
    prob, inst = build_dual_svm(pts, labels, gamma=DEFAULT_GAMMA, c=DEFAULT_C)
    return prob, prob.objective, {"points": int(size), "gamma": inst.gamma, "c": inst.c}


def _joint(reg: str):
    def build(size, seed, args):
        inst = gen_joint_prob(int(size), args.dataset, seed, reg, JOINT_LAMBDA)
        prob = build_joint_prob(inst)
        rows, cols = inst.shape
        extra = {"regularizer": reg, "lambda": inst.lam, "dataset": args.dataset, "rows": rows, "cols": cols}
        return prob, prob.objective, extra

    return build


def _fair(loss: str):
    def build(size, seed, args):
        inst = gen_fairness(int(size), 20, seed, loss, FAIR_LAMBDA)
        prob = build_fair_logreg(inst)
        extra = {"samples": int(size), "features": 20, "constraint_loss": loss, "lambda": inst.lambda_reg}
        return prob, prob.objective, extra

    return build


EXPERIMENTS: dict[str, Experiment] = {
    "nnls-i": Experiment((0.05, 0.1, 0.2), _nnls("I"), size_is_int=False),
    "nnls-ii": Experiment((0.05, 0.1, 0.2), _nnls("II"), size_is_int=False),
    "dual-svm": Experiment((100, 200, 400), _svm),
    "joint-entropy": Experiment((10, 20, 30), _joint("entropy")),
    "joint-gaussian": Experiment((10, 20, 30), _joint("gaussian")),
    "fair-logistic": Experiment((500, 1000, 2000), _fair("logistic")),
    "fair-linear": Experiment((500, 1000, 2000), _fair("linear")),
}


def cell_seed(seed: int, size_index: int, rep: int) -> int:
    """Seed of one (size, rep) cell, derived only from the base seed."""
    return int(np.random.SeedSequence([seed, size_index, rep]).generate_state(1)[0])


def _parse_sizes(text: Optional[str], exp: Experiment) -> list[float]:
    if text is None:
        return list(exp.default_sizes)
    sizes = []
    for part in text.split(","):
        part = part.strip()
        try:
            value = float(part)
        except ValueError:
            raise UsageError(f"bad size {part!r}") from None
        if not value > 0:
            raise UsageError(f"sizes must be positive, got {part}")
        if exp.size_is_int:
            if value != int(value):
                raise UsageError(f"size must be an integer for this experiment, got {part}")
            value = int(value)
        sizes.append(value)
    return sizes


def run_cell(name: str, size, size_index: int, rep: int, args, cfg: AuglagConfig) -> dict:
    exp = EXPERIMENTS[name]
    seed = cell_seed(args.seed, size_index, rep)
    prob, objective, extra = exp.build(size, seed, args)
    start = time.perf_counter()
    result: AuglagResult = solve(prob, cfg)
    elapsed = (time.perf_counter() - start) * 1e3
    extra = dict(extra, memory=cfg.inner.memory_m, max_iters=cfg.inner.max_iters)
    return {
        "experiment": name,
        "n": prob.n,
        "m": prob.n_eq + prob.n_ineq,
        "seed": seed,
        "rep": rep,
        "time_ms": round(elapsed, 3),
        "outer_iters": result.outer_iters,
        "inner_iters_total": result.inner_iters,
        "f": float(result.f),
        "violation_inf": float(result.violation),
        "stationarity_inf": float(result.stationarity),
        "status": result.status.value,
        "solver_tol": cfg.inner.tol,
        "feas_tol": cfg.feas_tol,
        "extra_params": json.dumps(extra, sort_keys=True),
        "_size": size,
    }


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Mean and standard deviation of time and objective per (experiment, size)."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["_size"]), []).append(r)
    out = []
    for (name, size), grp in groups.items():
        t = np.array([r["time_ms"] for r in grp])
        f = np.array([r["f"] for r in grp])
        out.append(
            {
                "experiment": name,
                "size": size,
                "reps": len(grp),
                "converged": sum(r["status"] == Status.CONVERGED.value for r in grp),
                "time_ms_mean": round(float(t.mean()), 3),
                "time_ms_std": round(float(t.std(ddof=1)) if len(t) > 1 else 0.0, 3),
                "f_mean": float(f.mean()),
                "f_std": float(f.std(ddof=1)) if len(f) > 1 else 0.0,
                "violation_inf_max": max(r["violation_inf"] for r in grp),
            }
        )
    return out


def _table(rows: Sequence[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{c: r[c] for c in columns} for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def cmd_bench(args) -> int:
    if args.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    exp = EXPERIMENTS[args.experiment]
    sizes = _parse_sizes(args.sizes, exp)
    cfg = _auglag_config(args)
    cells = [(size, i, rep) for i, size in enumerate(sizes) for rep in range(args.reps)]

    def work(cell):
        size, i, rep = cell
        row = run_cell(args.experiment, size, i, rep, args, cfg)
        log.info("%s size=%s rep=%d: %s in %s ms", args.experiment, size, rep, row["status"], row["time_ms"])
        return row

    if args.jobs == 1:
        rows = [work(c) for c in cells]
    else:
        # results come back in submission order, so the sink sees a fixed row order
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(work, cells))

    _write_output(_table(rows, CSV_COLUMNS, args.format), args.out)
    if args.summary is not None:
        text = _table(summarize(rows), SUMMARY_COLUMNS, args.format)
        if args.summary == "-":
            sys.stdout.write(text)
        else:
            Path(args.summary).write_text(text)
    return EXIT_OK


# check


def cmd_check(args) -> int:
    suite = SUITES[args.target]
    results = suite(args.seed)
    if args.format == "json":
        doc = [{"case": r.name, "passed": r.passed, "observed": r.observed, "limit": r.expected} for r in results]
        _write_output(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        _write_output("\n".join(r.line() for r in results) + "\n", args.out)
    failed = [r for r in results if not r.passed]
    if failed:
        for r in failed:
            print(r.line(), file=sys.stderr)
        print(f"{len(failed)} of {len(results)} cases failed", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"all {len(results)} cases passed", file=sys.stderr)
    return EXIT_OK


# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, default_format: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed for all randomness")
    p.add_argument("--out", help="write results to this file instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)
    p.add_argument("--tol", type=float, help="inner stationarity tolerance")
    p.add_argument("--feas-tol", type=float, help="constraint violation tolerance")
    p.add_argument("--max-iters", type=int, help="inner iteration limit per round")
    p.add_argument("--memory", type=int, help="number of stored curvature pairs")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent runs")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boxopt", description="Box-constrained quasi-Newton and augmented Lagrangian solver")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a model file")
    _common(p, "json")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", help="JSON manifest mapping parameter names to data files")
    p.add_argument("--max-outer", type=int, help="augmented Lagrangian round limit")
    p.add_argument("--no-absorb", action="store_true", help="keep simple bound constraints as general constraints")
    p.add_argument("--print-limit", type=int, default=1000, help="summarize variables with more entries")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    _common(p, "csv")
    p.add_argument("--experiment", required=True, help=", ".join(EXPERIMENTS))
    p.add_argument("--sizes", help="comma-separated sizes (scale t for nnls, points/bins/samples otherwise)")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--max-outer", type=int, help="augmented Lagrangian round limit")
    p.add_argument("--dataset", type=int, choices=(1, 2), default=1, help="joint-probability data set")
    p.add_argument("--summary", help="also write per-size mean/stddev to this file ('-' for stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="run a verification suite")
    _common(p, "csv")
    p.add_argument("target", choices=tuple(SUITES))
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"boxopt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"boxopt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"boxopt: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
