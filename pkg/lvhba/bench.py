"""
Synthetic benchmark problems with analytic references, and their metrics.

Provided:
- build_merely_convex(n)             coupled equality, non-unique LL solution set
- build_strongly_convex(n, seed)     LL = projection of x onto {y : Ay + Hx = 0}
- build_scalar_testbed(...)          1-D problem used throughout the tests
- metrics(), metric_extras()         rel_x_err, ll_err, hyper, time-to-threshold
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from .core import BilevelProblem, IterateState, LipschitzModuli, SolverConfig
from .errors import PreconditionError, ProjectionError
from .sets import AffineSubspace, Halfspace, Hyperplane, WholeSpace
from .trace import Trace

logger = logging.getLogger(__name__)

TARGET_REL_ERR = 1e-2
MAX_ATTEMPTS = 8
BENCHMARKS = ("merely_convex", "strongly_convex", "scalar")


def signed_equality(rows: np.ndarray) -> np.ndarray:
    """Encode h(x,y) = 0 as the inequality pair h <= 0, -h <= 0 (values or Jacobian rows)."""
    rows = np.asarray(rows, dtype=float)
    return np.concatenate([rows, -rows], axis=0)


@dataclass(frozen=True, eq=False)
class BenchmarkInstance:
    problem: BilevelProblem
    name: str
    default_config: SolverConfig
    moduli: LipschitzModuli
    known_x_star: Optional[np.ndarray] = None
    known_y_star: Optional[np.ndarray] = None
    known_multiplier: Optional[np.ndarray] = None
    ll_solution_map: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hyperobjective: Optional[Callable[[np.ndarray], float]] = None
    init_scale: float = 10.0
    params: Dict[str, Union[int, float, bool]] = field(default_factory=dict)

    def make_init(self, scale: Optional[float] = None) -> IterateState:
        """scale * ones for x and y, zero z; theta/lambda are filled in by the solver."""
        s = self.init_scale if scale is None else scale
        p = self.problem
        return IterateState(
            x=np.full(p.dim_x, s), y=np.full(p.dim_y, s), z=np.zeros(p.dim_g),
            theta=None, lam=None,
        )


# --- merely convex: coupled equality, y = (y1, y2) ---

def build_merely_convex(n: int) -> BenchmarkInstance:
    """
    F(x,y) = 1/2 ||x - y2||^2 + 1/2 ||y1 - 1||^2
    f(x,y) = 1/2 ||y1||^2 - x^T y1 + 1^T y2
    s.t.     1^T x + 1^T y1 + 1^T y2 = 0
    Solution x* = -0.3, y1* = 0.7, y2* = -0.4 (componentwise).
    """
    if n < 1:
        raise PreconditionError("merely convex benchmark needs n >= 1")
    ones = np.ones(n)
    jac_x = signed_equality(np.ones((1, n)))
    jac_y = signed_equality(np.ones((1, 2 * n)))

    def split(y):
        return y[:n], y[n:]

    def eval_F(x, y):
        y1, y2 = split(y)
        return 0.5 * float(np.sum((x - y2) ** 2)) + 0.5 * float(np.sum((y1 - 1.0) ** 2))

    def grad_F(x, y):
        y1, y2 = split(y)
        return x - y2, np.concatenate([y1 - 1.0, y2 - x])

    def eval_f(x, y):
        y1, y2 = split(y)
        return 0.5 * float(y1 @ y1) - float(x @ y1) + float(np.sum(y2))

    def grad_f(x, y):
        y1, _ = split(y)
        return -y1, np.concatenate([y1 - x, ones])

    def eval_g(x, y):
        return signed_equality(np.array([np.sum(x) + np.sum(y)]))

    # f is convex in y but only weakly convex jointly; its Hessian has eigenvalues (1 +- sqrt 5)/2
    rho_f = (math.sqrt(5.0) - 1.0) / 2.0
    moduli = LipschitzModuli(L_F=2.0, L_f=(1.0 + math.sqrt(5.0)) / 2.0, L_g=math.sqrt(6.0 * n))
    problem = BilevelProblem(
        dim_x=n, dim_y=2 * n, dim_g=2,
        eval_F=eval_F, grad_F=grad_F, eval_f=eval_f, grad_f=grad_f,
        eval_g=eval_g, jac_g_x=lambda x, y: jac_x, jac_g_y=lambda x, y: jac_y,
        set_X=WholeSpace(n), set_Y=WholeSpace(2 * n), rho_f=rho_f, moduli=moduli,
        F_lower=0.0, set_C=Hyperplane(np.ones(3 * n), 0.0), name=f"merely_convex(n={n})",
    )

    def hyperobjective(x):
        # optimistic value: y1 = x + 1, y2 = projection of x onto the remaining equality
        shift = 3.0 * float(np.mean(x)) + 1.0
        return 0.5 * n * shift ** 2 + 0.5 * float(x @ x)

    config = SolverConfig(gamma1=0.05, gamma2=0.05, r=10.0, alpha=0.002, beta=0.002, eta=0.03,
                          c_bar=1.0, p_exp=0.3)
    return BenchmarkInstance(
        problem=problem, name="merely_convex", default_config=config, moduli=moduli,
        known_x_star=np.full(n, -0.3), known_y_star=np.concatenate([np.full(n, 0.7), np.full(n, -0.4)]),
        known_multiplier=np.array([0.0, 1.0]), hyperobjective=hyperobjective,
        init_scale=10.0, params={"n": n},
    )


# --- strongly convex LL with seeded substitute data ---

def _draw_matrices(n: int, seed: int) -> Tuple[np.ndarray, ...]:
    k1 = max(1, n // 4)
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        A = rng.standard_normal((k1, n))
        B = rng.standard_normal((k1, n))
        H = rng.standard_normal((k1, n))
        c = rng.standard_normal(n)
        d = rng.standard_normal(n)
        if np.linalg.matrix_rank(A) < k1 or np.linalg.matrix_rank(B) < k1:
            logger.info("rank-deficient draw for seed %d, retrying", seed + attempt)
            continue
        q, _ = np.linalg.qr(A.T)
        A = q[:, :k1].T
        return A, B, H, c, d
    raise ProjectionError(f"no full-rank draw after {MAX_ATTEMPTS} attempts from seed {seed}")


def build_strongly_convex(n: int, seed: int = 0) -> BenchmarkInstance:
    """
    F(x,y) = sin(c^T x + d^T y) + ln(||x + y||^2 + 1)
    f(x,y) = 1/2 ||x - y||^2   s.t.  A y + H x = 0,   X = {x : B x = 0}
    y*(x) = x - A^T (A A^T)^{-1} (A + H) x
    """
    if n < 2:
        raise PreconditionError("strongly convex benchmark needs n >= 2")
    A, B, H, c, d = _draw_matrices(n, seed)
    k1 = A.shape[0]
    gram = A @ A.T
    jac_x = signed_equality(H)
    jac_y = signed_equality(A)

    def eval_F(x, y):
        s = x + y
        return math.sin(float(c @ x + d @ y)) + math.log(float(s @ s) + 1.0)

    def grad_F(x, y):
        s = x + y
        cos = math.cos(float(c @ x + d @ y))
        common = 2.0 * s / (float(s @ s) + 1.0)
        return cos * c + common, cos * d + common

    def eval_f(x, y):
        return 0.5 * float(np.sum((x - y) ** 2))

    def grad_f(x, y):
        return x - y, y - x

    def eval_g(x, y):
        return signed_equality(A @ y + H @ x)

    def ll_solution_map(x):
        return x - A.T @ np.linalg.solve(gram, A @ x + H @ x)

    def hyperobjective(x):
        return eval_F(x, ll_solution_map(x))

    M = np.block([[B, np.zeros((k1, n))], [H, A]])
    moduli = LipschitzModuli(
        L_F=float(c @ c + d @ d) + 4.0, L_f=2.0,
        L_g=math.sqrt(2.0) * float(np.linalg.norm(np.hstack([H, A]), 2)),
    )
    problem = BilevelProblem(
        dim_x=n, dim_y=n, dim_g=2 * k1,
        eval_F=eval_F, grad_F=grad_F, eval_f=eval_f, grad_f=grad_f,
        eval_g=eval_g, jac_g_x=lambda x, y: jac_x, jac_g_y=lambda x, y: jac_y,
        set_X=AffineSubspace(B, np.zeros(k1)), set_Y=WholeSpace(n), rho_f=0.0, moduli=moduli,
        F_lower=-1.0, set_C=AffineSubspace(M, np.zeros(2 * k1)),
        name=f"strongly_convex(n={n}, seed={seed})",
    )
    config = SolverConfig(gamma1=0.1, gamma2=0.1, r=1000.0, alpha=0.01, beta=0.01, eta=0.05,
                          c_bar=100.0, p_exp=0.3)
    return BenchmarkInstance(
        problem=problem, name="strongly_convex", default_config=config, moduli=moduli,
        ll_solution_map=ll_solution_map, hyperobjective=hyperobjective,
        init_scale=5.0, params={"n": n, "seed": seed},
    )


# --- scalar testbed ---

def build_scalar_testbed(coupled: bool = True, upper_weight: float = 0.0) -> BenchmarkInstance:
    """
    f(x,theta) = theta^2/2, g(x,theta) = theta - x (omitted when coupled=False),
    F(x,y) = (w/2)((x-1)^2 + (y-1)^2), C = {(x,y) : y - x <= 0}.
    y*(x) = min(x, 0) coupled, 0 otherwise; x* = 1 when w > 0.
    """
    w = float(upper_weight)
    if w < 0:
        raise PreconditionError("upper_weight must be nonnegative")
    p = 1 if coupled else 0

    def eval_F(x, y):
        return 0.5 * w * float((x[0] - 1.0) ** 2 + (y[0] - 1.0) ** 2)

    def grad_F(x, y):
        return w * (x - 1.0), w * (y - 1.0)

    def eval_f(x, y):
        return 0.5 * float(y[0] ** 2)

    def grad_f(x, y):
        return np.zeros(1), y.copy()

    def eval_g(x, y):
        return (y - x) if coupled else np.zeros(0)

    jac_x = -np.ones((p, 1))
    jac_y = np.ones((p, 1))

    def ll_solution_map(x):
        return np.minimum(x, 0.0) if coupled else np.zeros(1)

    def hyperobjective(x):
        return eval_F(x, ll_solution_map(x))

    moduli = LipschitzModuli(L_F=w, L_f=1.0, L_g=math.sqrt(2.0) if coupled else 0.0)
    problem = BilevelProblem(
        dim_x=1, dim_y=1, dim_g=p,
        eval_F=eval_F, grad_F=grad_F, eval_f=eval_f, grad_f=grad_f,
        eval_g=eval_g, jac_g_x=lambda x, y: jac_x, jac_g_y=lambda x, y: jac_y,
        set_X=WholeSpace(1), set_Y=WholeSpace(1), rho_f=0.0, moduli=moduli, F_lower=0.0,
        set_C=Halfspace(np.array([-1.0, 1.0]), 0.0) if coupled else None,
        name="scalar" if coupled else "scalar(uncoupled)",
    )
    config = SolverConfig(gamma1=1.0, gamma2=1.0, r=10.0, alpha=0.05, beta=0.05, eta=0.1,
                          c_bar=1.0, p_exp=0.3)
    return BenchmarkInstance(
        problem=problem, name="scalar", default_config=config, moduli=moduli,
        known_x_star=np.ones(1) if w > 0 else None, known_y_star=np.zeros(1) if w > 0 else None,
        ll_solution_map=ll_solution_map, hyperobjective=hyperobjective,
        init_scale=-1.0, params={"coupled": coupled, "upper_weight": w},
    )


def build_benchmark(name: str, n: Optional[int] = None, seed: int = 0) -> BenchmarkInstance:
    if name == "merely_convex":
        return build_merely_convex(100 if n is None else n)
    if name == "strongly_convex":
        return build_strongly_convex(100 if n is None else n, seed)
    if name == "scalar":
        return build_scalar_testbed()
    raise PreconditionError(f"unknown benchmark '{name}' (expected one of {', '.join(BENCHMARKS)})")


# --- metrics ---

@dataclass
class MetricRecord:
    rel_x_err: Optional[float] = None
    ll_err: Optional[float] = None
    hyper: Optional[float] = None
    iters_to_target: Optional[int] = None
    omitted: Tuple[str, ...] = ()

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {"rel_x_err": self.rel_x_err, "ll_err": self.ll_err, "hyper": self.hyper,
                "iters_to_target": self.iters_to_target}


def _state_metrics(instance: BenchmarkInstance, state: IterateState) -> Dict[str, float]:
    out = {}
    if instance.known_x_star is not None:
        out["rel_x_err"] = float(np.linalg.norm(state.x - instance.known_x_star)
                                 / np.linalg.norm(instance.known_x_star))
    if instance.ll_solution_map is not None:
        out["ll_err"] = float(np.linalg.norm(state.y - instance.ll_solution_map(state.x)))
    if instance.hyperobjective is not None:
        out["hyper"] = float(instance.hyperobjective(state.x))
    return out


def metric_extras(instance: BenchmarkInstance) -> Callable[[IterateState], Dict[str, float]]:
    """Per-record callback for solver.run(record_extras=...)."""
    return lambda state: _state_metrics(instance, state)


def metrics(instance: BenchmarkInstance, trace_or_state: Union[Trace, IterateState],
            threshold: float = TARGET_REL_ERR) -> MetricRecord:
    """Final metrics; references the instance lacks are listed in `omitted` instead of failing."""
    if isinstance(trace_or_state, Trace):
        trace, state = trace_or_state, trace_or_state.final_state
    else:
        trace, state = None, trace_or_state

    values: Dict[str, float] = {}
    if state is not None:
        values = _state_metrics(instance, state)
    elif trace is not None and trace.records:
        values = {k: trace.last[k] for k in ("rel_x_err", "ll_err", "hyper")
                  if k in trace.last and not math.isnan(trace.last[k])}

    iters = None
    if trace is not None and "rel_x_err" in trace.extra_columns:
        iters = trace.first_k_where("rel_x_err", threshold)

    omitted = tuple(k for k in ("rel_x_err", "ll_err", "hyper") if k not in values)
    if trace is None or "rel_x_err" not in trace.extra_columns:
        omitted += ("iters_to_target",)
    return MetricRecord(
        rel_x_err=values.get("rel_x_err"), ll_err=values.get("ll_err"), hyper=values.get("hyper"),
        iters_to_target=iters, omitted=omitted,
    )
