"""
Truncated proximal Lagrangian value function

    v_{gamma,r}(x,y,z) = min_{theta in Y} max_{lambda in [0,r]^p}
        f(x,theta) + lambda^T g(x,theta) + ||theta - y||^2/(2 gamma1) - ||lambda - z||^2/(2 gamma2)

its saddle-point oracle (iterated projected GDA), exact gradient and the
feasibility gap f - v_{gamma,r}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import BilevelProblem, Gamma, IterateState, LipschitzModuli, theory_constants
from .errors import PreconditionError, SaddleOracleError
from .sets import ACT_TOL, ConvexSet, nonneg_box

logger = logging.getLogger(__name__)

SADDLE_TOL = 1e-10
MAX_INNER = 100_000
# stands in for r = infinity in the untruncated value function
R_BIG = 1e6


@dataclass(frozen=True, eq=False)
class SaddlePoint:
    theta_star: np.ndarray
    lambda_star: np.ndarray
    value: float
    iterations_used: int
    final_step_change: float

    @property
    def pair(self) -> np.ndarray:
        return np.concatenate([self.theta_star, self.lambda_star])


@dataclass(frozen=True, eq=False)
class InnerDirections:
    d_theta: np.ndarray
    d_lambda: np.ndarray


def eval_lagrangian(problem: BilevelProblem, x, y, z, theta, lam, gamma: Gamma) -> float:
    g = problem.constraints(x, theta)
    return float(
        problem.eval_f(x, theta)
        + lam @ g
        + np.sum((theta - y) ** 2) / (2.0 * gamma.gamma1)
        - np.sum((lam - z) ** 2) / (2.0 * gamma.gamma2)
    )


def _directions(problem: BilevelProblem, x, y, z, theta, lam, gamma: Gamma) -> Tuple[np.ndarray, np.ndarray]:
    _, fy = problem.grad_f(x, theta)
    _, jy = problem.constraint_jacobians(x, theta)
    d_theta = np.asarray(fy, dtype=float) + jy.T @ lam + (theta - y) / gamma.gamma1
    d_lambda = -problem.constraints(x, theta) + (lam - z) / gamma.gamma2
    return d_theta, d_lambda


def inner_directions(problem: BilevelProblem, state: IterateState, gamma: Gamma) -> InnerDirections:
    d_theta, d_lambda = _directions(problem, state.x, state.y, state.z, state.theta, state.lam, gamma)
    return InnerDirections(d_theta, d_lambda)


def gda_step(problem: BilevelProblem, state: IterateState, eta: float, gamma: Gamma,
             set_Y: ConvexSet, set_Z: ConvexSet,
             eta_guard: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """One projected gradient descent (theta) / ascent (lambda) step."""
    if eta_guard is not None and not 0.0 < eta < eta_guard:
        logger.warning("inner step %.4g outside the contraction interval (0, %.4g)", eta, eta_guard)
    d = inner_directions(problem, state, gamma)
    theta_next = set_Y.project(state.theta - eta * d.d_theta)
    lambda_next = set_Z.project(state.lam - eta * d.d_lambda)
    return theta_next, lambda_next


def saddle_oracle(problem: BilevelProblem, x, y, z, gamma: Gamma, r: float,
                  tol: float = SADDLE_TOL, max_inner: int = MAX_INNER,
                  warm_start: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                  moduli: Optional[LipschitzModuli] = None) -> SaddlePoint:
    """Iterate GDA with step 0.9 rho_T / L_B^2 until the step change drops to tol."""
    if tol <= 0:
        raise PreconditionError("saddle oracle tolerance must be positive")
    constants = theory_constants(problem.rho_f, gamma, r, problem.dim_g,
                                 moduli if moduli is not None else problem.moduli)
    eta = constants.oracle_step
    set_Y = problem.set_Y
    set_Z = nonneg_box(problem.dim_g, r)
    if warm_start is not None:
        theta, lam = set_Y.project(warm_start[0]), set_Z.project(warm_start[1])
    else:
        theta, lam = set_Y.project(y), set_Z.project(z)

    change = np.inf
    for it in range(1, max_inner + 1):
        d_theta, d_lambda = _directions(problem, x, y, z, theta, lam, gamma)
        theta_next = set_Y.project(theta - eta * d_theta)
        lambda_next = set_Z.project(lam - eta * d_lambda)
        change = float(np.sqrt(np.sum((theta_next - theta) ** 2) + np.sum((lambda_next - lam) ** 2)))
        theta, lam = theta_next, lambda_next
        if change <= tol:
            logger.debug("saddle oracle converged in %d steps (eta=%.3g)", it, eta)
            value = eval_lagrangian(problem, x, y, z, theta, lam, gamma)
            return SaddlePoint(theta, lam, value, it, change)
    raise SaddleOracleError(
        f"saddle oracle stalled after {max_inner} steps (last change {change:.3e}); "
        "check the Lipschitz moduli and rho_f",
        iterations=max_inner, last_change=change,
    )


def grad_v(problem: BilevelProblem, x, y, z, saddle: SaddlePoint,
           gamma: Gamma) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta, lam = saddle.theta_star, saddle.lambda_star
    fx, _ = problem.grad_f(x, theta)
    jx, _ = problem.constraint_jacobians(x, theta)
    gx = np.asarray(fx, dtype=float) + jx.T @ lam
    gy = (y - theta) / gamma.gamma1
    gz = (lam - z) / gamma.gamma2
    return gx, gy, gz


def value_v(problem: BilevelProblem, x, y, z, gamma: Gamma, r: float,
            tol: float = SADDLE_TOL, max_inner: int = MAX_INNER, **kwargs) -> float:
    return saddle_oracle(problem, x, y, z, gamma, r, tol, max_inner, **kwargs).value


def value_v_untruncated(problem: BilevelProblem, x, y, z, gamma: Gamma,
                        tol: float = SADDLE_TOL, max_inner: int = MAX_INNER, **kwargs) -> float:
    """v_gamma with the multiplier box widened to [0, R_BIG]^p (diagnostics only)."""
    return saddle_oracle(problem, x, y, z, gamma, R_BIG, tol, max_inner, **kwargs).value


def _require_feasible(problem: BilevelProblem, x, y, z, r: float, feas_tol: float) -> None:
    xy = problem.join_xy(x, y)
    ok, violation = problem.feasible_set.contains(xy, feas_tol * (1.0 + float(np.max(np.abs(xy)))))
    if not ok:
        raise PreconditionError(f"(x, y) is outside C by {violation:.3e}; the gap sign is unguaranteed")
    ok, violation = nonneg_box(problem.dim_g, r).contains(z, feas_tol)
    if not ok:
        raise PreconditionError(f"z is outside [0, r]^p by {violation:.3e}")


def feasibility_gap(problem: BilevelProblem, x, y, z, gamma: Gamma, r: float,
                    tol: float = SADDLE_TOL, max_inner: int = MAX_INNER,
                    feas_tol: float = ACT_TOL, **kwargs) -> float:
    """f(x,y) - v_{gamma,r}(x,y,z), nonnegative on C x Z up to the oracle tolerance."""
    _require_feasible(problem, x, y, z, r, feas_tol)
    saddle = saddle_oracle(problem, x, y, z, gamma, r, tol, max_inner, **kwargs)
    return float(problem.eval_f(x, y)) - saddle.value


def penalized_objective(problem: BilevelProblem, x, y, z, c_k: float, gamma: Gamma, r: float,
                        tol: float = SADDLE_TOL, max_inner: int = MAX_INNER, **kwargs) -> float:
    """psi_{c_k} = F + c_k (f - v_{gamma,r})."""
    v = value_v(problem, x, y, z, gamma, r, tol, max_inner, **kwargs)
    return float(problem.eval_F(x, y)) + c_k * (float(problem.eval_f(x, y)) - v)
