"""
LV-HBA: the single-loop, Hessian-free iteration and its diagnostics.

One iteration (lv_hba_step):
  1. one projected GDA step on (theta, lambda) at the current (x, y, z)
  2. outer directions (d_x, d_y, d_z) evaluated at the new (theta, lambda)
  3. (x, y) <- Proj_C((x, y) - alpha_k (d_x, d_y)),  z <- Proj_Z(z - beta_k d_z)

The saddle oracle is only used by the diagnostics (gap, R_k, V_k), never by
the iteration itself.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, Optional

import numpy as np

from .core import BilevelProblem, Gamma, IterateState, SolverConfig, TheoryConstants, derive_constants
from .errors import PreconditionError
from .sets import ConvexSet, Product, nonneg_box
from .trace import STATUS_ABORTED, STATUS_COMPLETED, STATUS_STOPPED, Trace
from .valuefn import SaddlePoint, gda_step, grad_v, saddle_oracle

logger = logging.getLogger(__name__)

Hook = Callable[[int, IterateState], Optional[bool]]
RecordExtras = Callable[[IterateState], Dict[str, float]]


@dataclass(frozen=True, eq=False)
class OuterDirections:
    d_x: np.ndarray
    d_y: np.ndarray
    d_z: np.ndarray


@dataclass(frozen=True)
class StepSizes:
    alpha: float
    beta: float
    eta: float


def outer_directions(problem: BilevelProblem, state: IterateState, theta_next, lambda_next,
                     c_k: float, gamma: Gamma) -> OuterDirections:
    x, y, z = state.x, state.y, state.z
    Fx, Fy = problem.grad_F(x, y)
    fx, fy = problem.grad_f(x, y)
    fx_t, _ = problem.grad_f(x, theta_next)
    jx_t, _ = problem.constraint_jacobians(x, theta_next)
    d_x = np.asarray(Fx, dtype=float) / c_k + fx - fx_t - jx_t.T @ lambda_next
    d_y = np.asarray(Fy, dtype=float) / c_k + fy - (y - theta_next) / gamma.gamma1
    d_z = -(lambda_next - z) / gamma.gamma2
    return OuterDirections(d_x, np.asarray(d_y, dtype=float), d_z)


def step_sizes(config: SolverConfig, constants: TheoryConstants, k: int) -> StepSizes:
    if config.step_mode == "theory":
        eta = constants.oracle_step
        alpha, beta = constants.step_caps(eta, config.c(0))
        return StepSizes(alpha, beta, eta)
    return StepSizes(config.alpha(k), config.beta(k), config.eta(k))


def lv_hba_step(problem: BilevelProblem, state: IterateState, config: SolverConfig,
                constants: TheoryConstants) -> IterateState:
    k = state.k
    gamma = config.gamma
    steps = step_sizes(config, constants, k)
    set_Z = nonneg_box(problem.dim_g, config.r)
    # inner update sees the current (x, y, z); the outer update sees the new (theta, lambda)
    theta_next, lambda_next = gda_step(problem, state, steps.eta, gamma, problem.set_Y, set_Z,
                                       eta_guard=constants.eta_guard if k == 0 else None)
    d = outer_directions(problem, state, theta_next, lambda_next, config.c(k), gamma)
    xy = problem.feasible_set.project(state.xy - steps.alpha * np.concatenate([d.d_x, d.d_y]))
    z = set_Z.project(state.z - steps.beta * d.d_z)
    x, y = problem.split_xy(xy)
    return IterateState(x=x, y=y, z=z, theta=theta_next, lam=lambda_next, k=k + 1)


def residual_Rk(problem: BilevelProblem, x, y, z, c_k: float, gamma: Gamma, r: float,
                set_C: Optional[ConvexSet] = None, set_Z: Optional[ConvexSet] = None,
                saddle_tol: float = 1e-10, max_inner: int = 100_000,
                saddle: Optional[SaddlePoint] = None) -> float:
    """dist(0, grad psi_{c_k}(x,y,z) + N_{C x Z}(x,y,z)) via the tangent-cone projection."""
    set_C = set_C if set_C is not None else problem.feasible_set
    set_Z = set_Z if set_Z is not None else nonneg_box(problem.dim_g, r)
    if saddle is None:
        saddle = saddle_oracle(problem, x, y, z, gamma, r, saddle_tol, max_inner)
    gx, gy, gz = grad_v(problem, x, y, z, saddle, gamma)
    Fx, Fy = problem.grad_F(x, y)
    fx, fy = problem.grad_f(x, y)
    d = np.concatenate([
        np.asarray(Fx, dtype=float) + c_k * (np.asarray(fx, dtype=float) - gx),
        np.asarray(Fy, dtype=float) + c_k * (np.asarray(fy, dtype=float) - gy),
        -c_k * gz,
    ])
    w = np.concatenate([x, y, z])
    return Product([set_C, set_Z]).tangent_residual(w, d)


def merit_Vk(problem: BilevelProblem, state: IterateState, c_k: float, gamma: Gamma, r: float,
             constants: TheoryConstants, saddle_tol: float = 1e-10, max_inner: int = 100_000,
             F_lower: Optional[float] = None, saddle: Optional[SaddlePoint] = None) -> float:
    """V_k = (F - F_lower)/c_k + f - v_{gamma,r} + C_thetalambda ||(theta,lambda) - saddle||^2."""
    if F_lower is None:
        F_lower = problem.F_lower
    if F_lower is None:
        raise PreconditionError("merit needs a lower bound F_lower (config, problem or running minimum)")
    x, y, z = state.x, state.y, state.z
    if saddle is None:
        saddle = saddle_oracle(problem, x, y, z, gamma, r, saddle_tol, max_inner,
                               warm_start=(state.theta, state.lam))
    phi = (float(problem.eval_F(x, y)) - F_lower) / c_k + float(problem.eval_f(x, y)) - saddle.value
    return phi + constants.C_thetalambda * float(np.sum((state.inner - saddle.pair) ** 2))


def _or_default(v, default):
    if v is None or (len(v) == 0 and len(default) > 0):
        return default
    return v


def initial_state(problem: BilevelProblem, config: SolverConfig, init: IterateState) -> IterateState:
    """Project a user-supplied start onto C, Z and Y; lambda defaults to zero when empty."""
    xy = problem.feasible_set.project(init.xy)
    x, y = problem.split_xy(xy)
    set_Z = nonneg_box(problem.dim_g, config.r)
    z = set_Z.project(_or_default(init.z, np.zeros(problem.dim_g)))
    theta = problem.set_Y.project(_or_default(init.theta, y))
    lam = set_Z.project(_or_default(init.lam, np.zeros(problem.dim_g)))
    return IterateState(x=x, y=y, z=z, theta=theta, lam=lam, k=0)


class _Recorder:
    """Builds trace records; owns the running F_lower and the cadence logic."""

    def __init__(self, problem: BilevelProblem, config: SolverConfig, constants: TheoryConstants,
                 record_extras: Optional[RecordExtras]):
        self.problem = problem
        self.config = config
        self.constants = constants
        self.record_extras = record_extras
        self.F_lower = config.F_lower if config.F_lower is not None else problem.F_lower
        self._running_min = math.inf
        self._lower_frozen = self.F_lower is not None
        self._warned_nonfinite = False
        self.started = time.perf_counter()

    def cadenced(self, k: int) -> bool:
        return k % self.config.residual_every == 0

    def wanted(self, k: int) -> bool:
        return k % self.config.trace_every == 0 or self.cadenced(k)

    def record(self, state: IterateState, prev: Optional[IterateState]) -> Dict[str, float]:
        problem, config, k = self.problem, self.config, state.k
        c_k = config.c(k)
        c_prev = config.c(k - 1) if k > 0 else math.nan
        F = float(problem.eval_F(state.x, state.y))
        self._running_min = min(self._running_min, F)
        rec: Dict[str, Any] = {
            "k": k, "c_k": c_k, "F": F, "f": float(problem.eval_f(state.x, state.y)),
            "gap": math.nan, "residual": math.nan, "merit": math.nan,
            "dxy": math.nan, "dz": math.nan, "dtl": math.nan,
            "sec": time.perf_counter() - self.started, "c_prev": c_prev, "inner_err": math.nan,
        }
        if prev is not None:
            rec["dxy"] = float(np.linalg.norm(state.xy - prev.xy))
            rec["dz"] = float(np.linalg.norm(state.z - prev.z))
            rec["dtl"] = float(np.linalg.norm(state.inner - prev.inner))
        if self.cadenced(k):
            self._diagnose(state, rec, c_k, c_prev if k > 0 else c_k)
        if self.record_extras is not None:
            rec.update(self.record_extras(state))
        if not self._warned_nonfinite and not all(math.isfinite(rec[n]) for n in ("c_k", "F", "f")):
            logger.warning("non-finite value in trace record at k=%d", k)
            self._warned_nonfinite = True
        return rec

    def _diagnose(self, state: IterateState, rec: Dict[str, Any], c_k: float, c_res: float) -> None:
        problem, config = self.problem, self.config
        gamma = config.gamma
        saddle = saddle_oracle(problem, state.x, state.y, state.z, gamma, config.r,
                               config.saddle_oracle_tol, config.max_inner,
                               warm_start=(state.theta, state.lam))
        rec["gap"] = float(problem.eval_f(state.x, state.y)) - saddle.value
        rec["inner_err"] = float(np.linalg.norm(state.inner - saddle.pair))
        rec["residual"] = residual_Rk(problem, state.x, state.y, state.z, c_res, gamma, config.r,
                                      saddle=saddle)
        if config.record_merit:
            if not self._lower_frozen:
                self.F_lower = self._running_min
                self._lower_frozen = True
                logger.warning("F_lower not supplied; freezing the running minimum %.6g", self.F_lower)
            rec["merit"] = merit_Vk(problem, state, c_k, gamma, config.r, self.constants,
                                    F_lower=self.F_lower, saddle=saddle)
        logger.info("k=%d c_k=%.4g residual=%.3e gap=%.3e", state.k, c_k, rec["residual"], rec["gap"])

    def should_stop_early(self, rec: Dict[str, float]) -> bool:
        rtol, gtol = self.config.stop_rtol, self.config.stop_gtol
        if (rtol is None and gtol is None) or math.isnan(rec["residual"]):
            return False
        ok_r = rtol is None or rec["residual"] / rec["c_prev" if rec["k"] > 0 else "c_k"] <= rtol
        ok_g = gtol is None or rec["gap"] <= gtol
        return ok_r and ok_g


def run(problem: BilevelProblem, config: SolverConfig, init: IterateState,
        hooks: Iterable[Hook] = (), record_extras: Optional[RecordExtras] = None,
        seed: Optional[int] = None) -> Trace:
    """Execute up to config.max_iters LV-HBA iterations and return the trace.

    A step failure does not raise: the partial trace comes back with
    status "aborted" and the error message.
    """
    if not config.penalty_schedule.is_nondecreasing():
        raise PreconditionError("penalty schedule c_k must be nondecreasing")
    constants = derive_constants(problem, config)
    hooks = tuple(hooks)
    trace = Trace(metadata={"problem": problem.name, "seed": seed, "config": config.model_dump(mode="json")})
    recorder = _Recorder(problem, config, constants, record_extras)
    logger.info("LV-HBA on %s: max_iters=%d step_mode=%s", problem.name, config.max_iters, config.step_mode)

    state = prev = None
    try:
        state = initial_state(problem, config, init)
        trace.append(recorder.record(state, None))
        while state.k < config.max_iters:
            prev, state = state, lv_hba_step(problem, state, config, constants)
            stop = any(bool(hook(state.k, state)) for hook in hooks)
            final = stop or state.k == config.max_iters
            if final or recorder.wanted(state.k):
                rec = recorder.record(state, prev)
                trace.append(rec)
                stop = stop or recorder.should_stop_early(rec)
            if stop:
                trace.status = STATUS_STOPPED
                break
        else:
            trace.status = STATUS_COMPLETED
    except Exception as e:  # noqa: BLE001 - any step failure aborts the run
        k = state.k if state is not None else 0
        logger.error("run aborted at k=%d: %s", k, e)
        trace.status = STATUS_ABORTED
        trace.error = f"{type(e).__name__}: {e}"
    trace.final_state = state
    trace.metadata.update(
        status=trace.status, error=trace.error, iterations=state.k if state is not None else 0,
        F_lower=recorder.F_lower, wall_seconds=time.perf_counter() - recorder.started,
    )
    logger.info("LV-HBA finished: status=%s after %d iterations", trace.status, trace.metadata["iterations"])
    return trace
