"""
Batch front end for LV-HBA runs.

Subcommands:
- run <cfg>        one solver run; writes trace.csv, trace.json, metadata.json (+ convergence.svg)
- checkgrad <cfg>  validate_problem report plus grad_v against finite differences
- sweep <cfg>      grid over sweep.axis; writes sweep_summary.csv (+ sweep.svg)

Exit codes: 0 ok, 1 failed check, 2 configuration error, 3 solver abort.

Usage examples:
lvhba run config/merely_convex.properties --out out/mc --iters 20000
lvhba checkgrad config/checkgrad.properties
LVHBA_THREADS=4 lvhba sweep config/sweep_p.properties --no-svg
"""
import argparse
import logging
import math
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .bench import TARGET_REL_ERR, BenchmarkInstance, metric_extras, metrics
from .charts import create_sweep_chart, save_convergence_svg
from .checks import check_value_gradient, validate_problem
from .config import RunConfig, load_run_config, save_metadata
from .errors import ConfigError, LVHBAError
from .solver import run
from .trace import Trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_ABORTED = 3

SUMMARY_COLUMNS = [
    "axis", "value", "status", "iterations", "iters_to_target", "wall_seconds",
    "final_rel_x_err", "final_ll_err", "final_hyper", "final_gap", "final_residual", "error",
]


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def sweep_threads() -> int:
    raw = os.environ.get("LVHBA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("LVHBA_THREADS=%r is not an integer; using 1", raw)
        return 1


def _target_hook(instance: BenchmarkInstance, target: float = TARGET_REL_ERR):
    x_star = instance.known_x_star
    if x_star is None:
        return None
    scale = float(np.linalg.norm(x_star))
    return lambda k, state: float(np.linalg.norm(state.x - x_star)) / scale <= target


def _last_present(trace: Trace, column: str) -> float:
    if column not in trace.columns or not trace.records:
        return math.nan
    values = trace.column(column)
    values = values[~np.isnan(values)]
    return float(values[-1]) if values.size else math.nan


def execute(cfg: RunConfig, stop_at_target: bool = False):
    """Build, run and measure one configuration; returns (instance, solver config, trace, seconds)."""
    instance = cfg.build_instance()
    solver = cfg.solver_config(instance)
    init = cfg.make_init(instance)
    hooks = []
    if stop_at_target:
        hook = _target_hook(instance)
        if hook is not None:
            hooks.append(hook)
    started = time.perf_counter()
    trace = run(instance.problem, solver, init, hooks=hooks,
                record_extras=metric_extras(instance), seed=cfg.problem.seed)
    return instance, solver, trace, time.perf_counter() - started


def cmd_run(cfg: RunConfig) -> int:
    out_dir = cfg.output.dir
    if not os.path.isdir(out_dir):
        return _fail(f"output directory does not exist: {out_dir}", EXIT_CONFIG)
    try:
        instance, solver, trace, seconds = execute(cfg)
    except LVHBAError as e:
        return _fail(str(e), EXIT_CONFIG)

    final = metrics(instance, trace)
    trace.write_csv(os.path.join(out_dir, "trace.csv"), timing=cfg.output.timing)
    trace.write_json(os.path.join(out_dir, "trace.json"), timing=cfg.output.timing)
    save_metadata(
        os.path.join(out_dir, "metadata.json"), cfg.to_flat(solver),
        seed=cfg.problem.seed, wall_seconds=seconds, status=trace.status, error=trace.error,
        iterations=trace.metadata.get("iterations"), F_lower=trace.metadata.get("F_lower"),
        final_metrics={k: v for k, v in final.as_dict().items() if v is not None},
        omitted_metrics=list(final.omitted),
    )
    if cfg.output.svg:
        save_convergence_svg(trace, os.path.join(out_dir, "convergence.svg"))

    print(f"Problem={instance.problem.name}  status={trace.status}  iterations={trace.metadata.get('iterations')}"
          f"  seconds={seconds:.2f}")
    parts = [f"{k}={v:.6g}" for k, v in final.as_dict().items() if v is not None]
    if parts:
        print("Final  " + "  ".join(parts))
    if trace.aborted:
        return _fail(f"solver aborted: {trace.error}", EXIT_ABORTED)
    return EXIT_OK


def cmd_checkgrad(cfg: RunConfig) -> int:
    try:
        instance = cfg.build_instance()
        solver = cfg.solver_config(instance)
    except LVHBAError as e:
        return _fail(str(e), EXIT_CONFIG)

    spec = cfg.checkgrad
    report = validate_problem(instance.problem, samples=spec.samples, seed=spec.seed)
    for line in report.lines():
        print(line)
    try:
        grad = check_value_gradient(instance.problem, solver.gamma, solver.r, points=spec.points, seed=spec.seed,
                                    max_inner=solver.max_inner)
    except LVHBAError as e:
        print(f"[FAIL] grad_v: {e}")
        return EXIT_CHECK_FAILED
    print(grad.line())
    print(f"max relative error of grad_v: {grad.value:.3e}")
    return EXIT_OK if report.passed and grad.passed else EXIT_CHECK_FAILED


def cell_config(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    cell = cfg.model_copy(deep=True)
    if axis == "p_exp":
        cell.solver["p_exp"] = value
    elif axis == "n":
        cell.problem = cell.problem.model_copy(update={"n": int(value)})
    elif axis == "seed":
        cell.problem = cell.problem.model_copy(update={"seed": int(value)})
    elif axis == "step_scale":
        base = cfg.solver_config(cfg.build_instance())
        cell.solver["alpha"] = base.alpha.scaled(value).to_text()
        cell.solver["beta"] = base.beta.scaled(value).to_text()
    return cell


def run_cell(cfg: RunConfig, axis: str, value: float) -> Dict[str, Any]:
    row: Dict[str, Any] = {c: math.nan for c in SUMMARY_COLUMNS}
    row.update(axis=axis, value=value, status="failed", error="")
    try:
        instance, _, trace, seconds = execute(cell_config(cfg, axis, value), cfg.sweep.stop_at_target)
    except (LVHBAError, ValueError) as e:
        row["error"] = str(e)
        return row
    final = metrics(instance, trace)
    row.update(
        status=trace.status, iterations=trace.metadata.get("iterations"),
        iters_to_target=final.iters_to_target if final.iters_to_target is not None else math.nan,
        wall_seconds=seconds,
        final_rel_x_err=final.rel_x_err if final.rel_x_err is not None else math.nan,
        final_ll_err=final.ll_err if final.ll_err is not None else math.nan,
        final_hyper=final.hyper if final.hyper is not None else math.nan,
        final_gap=_last_present(trace, "gap"), final_residual=_last_present(trace, "residual"),
        error=trace.error or "",
    )
    logger.info("sweep cell %s=%g: %s after %s iterations", axis, value, row["status"], row["iterations"])
    return row


def cmd_sweep(cfg: RunConfig, threads: Optional[int] = None) -> int:
    spec = cfg.sweep
    if spec.axis is None or not spec.values:
        return _fail("sweep needs sweep.axis and a non-empty sweep.values", EXIT_CONFIG)
    out_dir = cfg.output.dir
    if not os.path.isdir(out_dir):
        return _fail(f"output directory does not exist: {out_dir}", EXIT_CONFIG)

    n_jobs = threads if threads is not None else sweep_threads()
    rows: List[Dict[str, Any]] = Parallel(n_jobs=n_jobs)(
        delayed(run_cell)(cfg, spec.axis, float(v)) for v in spec.values
    )
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    summary.to_csv(os.path.join(out_dir, "sweep_summary.csv"), index=False, float_format="%.17g")

    if cfg.output.svg:
        fig = create_sweep_chart(spec.axis, summary["value"].to_numpy(dtype=float),
                                 summary["iters_to_target"].to_numpy(dtype=float))
        if fig is not None:
            fig.savefig(os.path.join(out_dir, "sweep.svg"), format="svg")

    ok = summary["status"].isin(["completed", "stopped"])
    print(f"Cells={len(summary)}  succeeded={int(ok.sum())}  failed={int((~ok).sum())}")
    print(summary[["value", "status", "iterations", "iters_to_target", "final_rel_x_err"]].to_string(index=False))
    return EXIT_OK if ok.any() else EXIT_ABORTED


COMMANDS = {"run": cmd_run, "checkgrad": cmd_checkgrad, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lvhba", description="Single-loop Hessian-free bilevel solver")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="Run config (.properties or metadata.json)")
        p.add_argument("--out", default=None, help="Output directory (must exist)")
        p.add_argument("--iters", type=int, default=None, help="Override solver.max_iters")
        p.add_argument("--seed", type=int, default=None, help="Override problem.seed")
        p.add_argument("--svg", dest="svg", action="store_true", default=None, help="Write SVG charts")
        p.add_argument("--no-svg", dest="svg", action="store_false", help="Skip SVG charts")
        p.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_run_config(args.config).with_overrides(args.iters, args.seed, args.out, args.svg)
    except ConfigError as e:
        return _fail(str(e), EXIT_CONFIG)
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
