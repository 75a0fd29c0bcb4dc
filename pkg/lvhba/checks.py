"""
Validation hooks for user problems and the value-function gradient.

These report rather than raise: each check yields a CheckResult holding the
worst value seen and the witness point that produced it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .core import BilevelProblem, Gamma
from .sets import nonneg_box
from .valuefn import grad_v, saddle_oracle

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
FD_TOL = 1e-5
CONVEXITY_PAIRS = 64
CONVEXITY_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float = 0.0
    witness: Optional[Dict[str, Any]] = None
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        text = f"[{flag}] {self.name}: {self.value:.3e}"
        if self.detail:
            text += f" ({self.detail})"
        if not self.passed and self.witness:
            text += " witness=" + ", ".join(f"{k}={np.array2string(np.asarray(v), precision=4)}"
                                             for k, v in self.witness.items())
        return text


@dataclass
class ValidationReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self) -> List[str]:
        return [r.line() for r in self.results]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||analytic - numeric|| / max(||numeric||, 1); absolute error once the reference norm drops below 1."""
    return float(np.linalg.norm(analytic - numeric) / max(float(np.linalg.norm(numeric)), 1.0))


def central_difference(fn: Callable[[np.ndarray], Any], w: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar or vector function; columns index the coordinates of w."""
    cols = []
    for i in range(w.shape[0]):
        e = np.zeros_like(w)
        e[i] = h
        cols.append((np.asarray(fn(w + e), dtype=float) - np.asarray(fn(w - e), dtype=float)) / (2.0 * h))
    if not cols:
        return np.zeros((np.asarray(fn(w)).size, 0))
    return np.stack(cols, axis=-1)


class _Worst:
    """Tracks the largest value seen and where it happened."""

    def __init__(self):
        self.value = 0.0
        self.witness: Optional[Dict[str, Any]] = None

    def offer(self, value: float, **witness) -> None:
        if value > self.value or self.witness is None:
            self.value = value
            self.witness = witness


def _sample_point(problem: BilevelProblem, rng: np.random.Generator):
    return problem.set_X.sample(rng), problem.set_Y.sample(rng)


def validate_problem(problem: BilevelProblem, samples: int = 20, seed: int = 0,
                     h: float = FD_STEP, fd_tol: float = FD_TOL,
                     convexity_pairs: int = CONVEXITY_PAIRS,
                     convexity_tol: float = CONVEXITY_TOL) -> ValidationReport:
    """Check the first-order oracles and the convexity assumptions on random points."""
    rng = np.random.default_rng(seed)
    n = problem.dim_x
    report = ValidationReport()

    dims = _Worst()
    grads = {"grad_F": _Worst(), "grad_f": _Worst(), "jac_g": _Worst()}
    lower = _Worst()
    for _ in range(samples):
        x, y = _sample_point(problem, rng)
        w = np.concatenate([x, y])
        size = np.asarray(problem.eval_g(x, y)).size
        dims.offer(float(abs(size - problem.dim_g)), x=x, y=y)
        if size != problem.dim_g:
            continue

        for name, ev, gr in (("grad_F", problem.eval_F, problem.grad_F), ("grad_f", problem.eval_f, problem.grad_f)):
            gx, gy = gr(x, y)
            fd = central_difference(lambda v: ev(v[:n], v[n:]), w, h)
            grads[name].offer(relative_error(np.concatenate([gx, gy]), fd.reshape(-1)), x=x, y=y)

        if problem.dim_g:
            jx, jy = problem.constraint_jacobians(x, y)
            fd = central_difference(lambda v: problem.constraints(v[:n], v[n:]), w, h)
            grads["jac_g"].offer(relative_error(np.hstack([jx, jy]), fd), x=x, y=y)

        if problem.F_lower is not None:
            lower.offer(problem.F_lower - float(problem.eval_F(x, y)), x=x, y=y)

    report.results.append(CheckResult("g_dimension", dims.value == 0.0, dims.value, dims.witness,
                                      f"expected {problem.dim_g} outputs"))
    for name, worst in grads.items():
        report.results.append(CheckResult(name, worst.value <= fd_tol, worst.value, worst.witness,
                                          "max relative error vs central differences"))
    if problem.F_lower is None:
        report.results.append(CheckResult("F_lower", True, 0.0, detail="no F_lower supplied; skipped"))
    else:
        report.results.append(CheckResult("F_lower", lower.value <= 0.0, max(lower.value, 0.0), lower.witness,
                                          "largest F_lower - F"))

    report.results.extend(_convexity_checks(problem, rng, convexity_pairs, convexity_tol,
                                          check_g=dims.value == 0.0))
    for r in report.failures:
        logger.warning("validation failed: %s", r.line())
    return report


def _convexity_checks(problem: BilevelProblem, rng: np.random.Generator, pairs: int,
                      tol: float, check_g: bool = True) -> List[CheckResult]:
    """Midpoint convexity of f(x, .) and of each g_i(x, .) on Y."""
    worst_f = _Worst()
    worst_g = _Worst()
    for _ in range(pairs):
        x = problem.set_X.sample(rng)
        y1, y2 = problem.set_Y.sample(rng, 2.0), problem.set_Y.sample(rng, 2.0)
        mid = 0.5 * (y1 + y2)
        excess = float(problem.eval_f(x, mid)) - 0.5 * (float(problem.eval_f(x, y1)) + float(problem.eval_f(x, y2)))
        worst_f.offer(excess, x=x, y1=y1, y2=y2)
        if problem.dim_g and check_g:
            g_excess = problem.constraints(x, mid) - 0.5 * (problem.constraints(x, y1) + problem.constraints(x, y2))
            i = int(np.argmax(g_excess))
            worst_g.offer(float(g_excess[i]), x=x, y1=y1, y2=y2, row=i)
    results = [CheckResult("convexity_f", worst_f.value <= tol, max(worst_f.value, 0.0), worst_f.witness,
                           "largest midpoint excess")]
    if problem.dim_g and check_g:
        results.append(CheckResult("convexity_g", worst_g.value <= tol, max(worst_g.value, 0.0), worst_g.witness,
                                   "largest midpoint excess"))
    return results


def check_value_gradient(problem: BilevelProblem, gamma: Gamma, r: float, points: int = 20, seed: int = 0,
                         h: float = FD_STEP, saddle_tol: float = 1e-12, tol: float = FD_TOL,
                         max_inner: int = 100_000) -> CheckResult:
    """grad_v against central differences of v_{gamma,r} at random (x,y) in C, z in Z."""
    rng = np.random.default_rng(seed)
    set_Z = nonneg_box(problem.dim_g, r)
    n, m = problem.dim_x, problem.dim_y
    worst = _Worst()
    for _ in range(points):
        x, y = problem.split_xy(problem.feasible_set.sample(rng))
        z = set_Z.sample(rng)
        saddle = saddle_oracle(problem, x, y, z, gamma, r, saddle_tol, max_inner)
        analytic = np.concatenate(grad_v(problem, x, y, z, saddle, gamma))
        warm = (saddle.theta_star, saddle.lambda_star)

        def v(w):
            return saddle_oracle(problem, w[:n], w[n:n + m], w[n + m:], gamma, r, saddle_tol, max_inner,
                                 warm_start=warm).value

        fd = central_difference(v, np.concatenate([x, y, z]), h).reshape(-1)
        worst.offer(relative_error(analytic, fd), x=x, y=y, z=z)
    result = CheckResult("grad_v", worst.value <= tol, worst.value, worst.witness,
                         f"max relative error over {points} points")
    logger.info(result.line())
    return result
