"""
Domain types for constrained bilevel problems and the LV-HBA solver.

    min_{(x,y) in C}  F(x, y)   s.t.  y in argmin_{y' in Y, g(x,y') <= 0} f(x, y')

Provided:
- Gamma, LipschitzModuli, BilevelProblem, IterateState
- Schedule, SolverConfig (frozen pydantic models)
- TheoryConstants, theory_constants(), derive_constants()
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from .errors import PreconditionError
from .sets import ConvexSet, Product

Vector = np.ndarray
ScalarFn = Callable[[Vector, Vector], float]
GradFn = Callable[[Vector, Vector], Tuple[Vector, Vector]]
VectorFn = Callable[[Vector, Vector], Vector]
JacFn = Callable[[Vector, Vector], np.ndarray]


class Gamma(NamedTuple):
    """Proximal parameters (gamma1 for theta, gamma2 for lambda)."""

    gamma1: float
    gamma2: float


@dataclass(frozen=True)
class LipschitzModuli:
    """User-supplied smoothness constants: L_F, L_f, L_g and the Lipschitz moduli of grad_x g, grad_y g."""

    L_F: float = 0.0
    L_f: float = 0.0
    L_g: float = 0.0
    L_g1: float = 0.0
    L_g2: float = 0.0

    def __post_init__(self):
        for name in ("L_F", "L_f", "L_g", "L_g1", "L_g2"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"Lipschitz modulus {name} must be nonnegative")


@dataclass(frozen=True, eq=False)
class BilevelProblem:
    """Problem data and first-order oracles. Oracles must be pure and reentrant.

    set_C is the joint feasible set {(x,y) in X x Y : g(x,y) <= 0} over real^{n+m};
    when omitted it defaults to X x Y, which is only right if g never cuts it.
    """

    dim_x: int
    dim_y: int
    dim_g: int
    eval_F: ScalarFn
    grad_F: GradFn
    eval_f: ScalarFn
    grad_f: GradFn
    eval_g: VectorFn
    jac_g_x: JacFn
    jac_g_y: JacFn
    set_X: ConvexSet
    set_Y: ConvexSet
    rho_f: float
    moduli: LipschitzModuli
    F_lower: Optional[float] = None
    set_C: Optional[ConvexSet] = None
    name: str = "problem"

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_y < 1 or self.dim_g < 0:
            raise PreconditionError("dim_x, dim_y must be positive and dim_g nonnegative")
        if self.set_X.dim != self.dim_x or self.set_Y.dim != self.dim_y:
            raise PreconditionError("set_X / set_Y dimensions do not match dim_x / dim_y")
        if self.set_C is not None and self.set_C.dim != self.dim_x + self.dim_y:
            raise PreconditionError("set_C must live in real^(dim_x + dim_y)")
        if self.rho_f < 0:
            raise PreconditionError("rho_f must be nonnegative")

    @property
    def feasible_set(self) -> ConvexSet:
        if self.set_C is not None:
            return self.set_C
        return Product([self.set_X, self.set_Y])

    def split_xy(self, w: Vector) -> Tuple[Vector, Vector]:
        return w[: self.dim_x], w[self.dim_x:]

    @staticmethod
    def join_xy(x: Vector, y: Vector) -> Vector:
        return np.concatenate([x, y])

    def constraints(self, x: Vector, y: Vector) -> Vector:
        return np.asarray(self.eval_g(x, y), dtype=float).reshape(self.dim_g)

    def constraint_jacobians(self, x: Vector, y: Vector) -> Tuple[np.ndarray, np.ndarray]:
        jx = np.asarray(self.jac_g_x(x, y), dtype=float).reshape(self.dim_g, self.dim_x)
        jy = np.asarray(self.jac_g_y(x, y), dtype=float).reshape(self.dim_g, self.dim_y)
        return jx, jy


@dataclass(frozen=True, eq=False)
class IterateState:
    """(x^k, y^k, z^k, theta^k, lambda^k) at iteration k."""

    x: Vector
    y: Vector
    z: Vector
    theta: Vector
    lam: Vector
    k: int = 0

    @property
    def xy(self) -> Vector:
        return np.concatenate([self.x, self.y])

    @property
    def inner(self) -> Vector:
        return np.concatenate([self.theta, self.lam])

    def replace(self, **changes) -> "IterateState":
        return replace(self, **changes)


# --- schedules and solver configuration ---

_FROZEN = ConfigDict(frozen=True, extra="forbid")


class Schedule(BaseModel):
    """Step/penalty schedule: constant(value) or polynomial scale*(k+1)^exponent."""

    model_config = _FROZEN

    kind: Literal["constant", "polynomial"] = "constant"
    scale: PositiveFloat = 1.0
    exponent: float = 0.0

    @model_validator(mode="after")
    def _constant_has_no_exponent(self):
        if self.kind == "constant" and self.exponent != 0.0:
            raise ValueError("constant schedules take no exponent")
        return self

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls(kind="constant", scale=value)

    @classmethod
    def polynomial(cls, scale: float, exponent: float) -> "Schedule":
        return cls(kind="polynomial", scale=scale, exponent=exponent)

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        """'0.01', 'constant:0.01' or 'poly:100,0.3'."""
        text = text.strip()
        head, _, rest = text.partition(":")
        if not rest:
            return cls.constant(float(head))
        head = head.strip().lower()
        if head in ("const", "constant"):
            return cls.constant(float(rest))
        if head in ("poly", "polynomial"):
            parts = [p for p in rest.split(",") if p.strip()]
            if len(parts) != 2:
                raise ValueError(f"polynomial schedule needs 'scale,exponent', got '{rest}'")
            return cls.polynomial(float(parts[0]), float(parts[1]))
        raise ValueError(f"unknown schedule kind '{head}'")

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.scale
        return self.scale * (k + 1) ** self.exponent

    def scaled(self, factor: float) -> "Schedule":
        return self.model_copy(update={"scale": self.scale * factor})

    def is_nondecreasing(self) -> bool:
        return self.kind == "constant" or self.exponent >= 0.0

    def to_text(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.scale!r}"
        return f"poly:{self.scale!r},{self.exponent!r}"


class SolverConfig(BaseModel):
    """Everything LV-HBA needs besides the problem itself."""

    model_config = _FROZEN

    gamma1: PositiveFloat = 1.0
    gamma2: PositiveFloat = 1.0
    r: PositiveFloat = 10.0
    alpha: Schedule = Schedule.constant(0.002)
    beta: Schedule = Schedule.constant(0.002)
    eta: Schedule = Schedule.constant(0.03)
    c_bar: PositiveFloat = 1.0
    p_exp: float = Field(0.3, gt=0.0, lt=0.5)
    penalty: Optional[Schedule] = None
    max_iters: int = Field(1000, ge=0)
    saddle_oracle_tol: PositiveFloat = 1e-10
    max_inner: PositiveInt = 100_000
    residual_every: PositiveInt = 100
    trace_every: PositiveInt = 1
    record_merit: bool = False
    step_mode: Literal["practice", "theory"] = "practice"
    stop_rtol: Optional[PositiveFloat] = None
    stop_gtol: Optional[PositiveFloat] = None
    F_lower: Optional[float] = None

    @field_validator("alpha", "beta", "eta", "penalty", mode="before")
    @classmethod
    def _coerce_schedule(cls, v):
        if isinstance(v, str):
            return Schedule.parse(v)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return Schedule.constant(float(v))
        return v

    @property
    def gamma(self) -> Gamma:
        return Gamma(self.gamma1, self.gamma2)

    @property
    def penalty_schedule(self) -> Schedule:
        if self.penalty is not None:
            return self.penalty
        return Schedule.polynomial(self.c_bar, self.p_exp)

    def c(self, k: int) -> float:
        return self.penalty_schedule(k)


# --- theory-derived constants ---

@dataclass(frozen=True)
class TheoryConstants:
    rho_T: float
    L_B: float
    C_Z: float
    L_vz: float
    C_thetalambda: float
    L_thetalambda: float
    rho_v: float
    gamma: Gamma
    moduli: LipschitzModuli = field(default_factory=LipschitzModuli)

    @property
    def eta_guard(self) -> float:
        """Upper end of the admissible inner step interval (0, rho_T / L_B^2)."""
        return self.rho_T / self.L_B ** 2

    @property
    def oracle_step(self) -> float:
        return 0.9 * self.eta_guard

    def L_phi(self, c_k: float) -> float:
        return self.moduli.L_F / c_k + self.moduli.L_f + self.rho_v

    def _theta_lambda_term(self, eta: float) -> float:
        return (1.0 + 2.0 / (eta * self.rho_T)) * self.L_thetalambda ** 2 * self.C_thetalambda

    def C_alpha(self, eta: float, c0: float) -> float:
        g2 = self.gamma.gamma2
        return (
            self.L_phi(c0) / 2.0
            + eta * self.rho_T * self.L_thetalambda ** 2 / (4.0 * g2 ** 2)
            + self._theta_lambda_term(eta)
        )

    def C_beta(self, eta: float) -> float:
        return self.L_vz / 2.0 + self._theta_lambda_term(eta)

    def step_caps(self, eta: float, c0: float) -> Tuple[float, float]:
        """(c_alpha, c_beta) guaranteeing sufficient descent of the merit function."""
        base = eta * self.rho_T / 4.0
        return min(base, 1.0 / (4.0 * self.C_alpha(eta, c0))), min(base, 1.0 / (4.0 * self.C_beta(eta)))


def theory_constants(rho_f: float, gamma: Gamma, r: float, dim_g: int,
                     moduli: LipschitzModuli) -> TheoryConstants:
    gamma1, gamma2 = gamma
    if gamma1 <= 0:
        raise PreconditionError("gamma1 must be positive")
    if gamma2 <= 0:
        raise PreconditionError("gamma2 must be positive")
    if rho_f > 0 and gamma1 >= 1.0 / rho_f:
        raise PreconditionError(
            f"gamma1={gamma1} must be < 1/rho_f={1.0 / rho_f}: value function differentiability fails"
        )
    m = moduli
    C_Z = r * math.sqrt(dim_g)
    rho_T = min(1.0 / gamma1 - rho_f, 1.0 / gamma2)
    L_B = max(m.L_f + m.L_g + C_Z * m.L_g2 + 1.0 / gamma1, m.L_g + 1.0 / gamma2)
    L_vz = (gamma2 * rho_T + 1.0) / (gamma2 ** 2 * rho_T)
    C_tl = max((m.L_f + C_Z * m.L_g1) ** 2 + 1.0 / (2.0 * gamma1 ** 2) + m.L_g ** 2, 1.0 / gamma2 ** 2)
    L_tl = math.sqrt(3.0) * max(m.L_f + C_Z * m.L_g2 + m.L_g, 1.0 / gamma1, 1.0 / gamma2) / rho_T
    rho_v = rho_f / (1.0 - gamma1 * rho_f)
    return TheoryConstants(
        rho_T=rho_T, L_B=L_B, C_Z=C_Z, L_vz=L_vz, C_thetalambda=C_tl,
        L_thetalambda=L_tl, rho_v=rho_v, gamma=Gamma(gamma1, gamma2), moduli=m,
    )


def derive_constants(problem: BilevelProblem, config: SolverConfig,
                     moduli: Optional[LipschitzModuli] = None) -> TheoryConstants:
    return theory_constants(problem.rho_f, config.gamma, config.r, problem.dim_g,
                            moduli if moduli is not None else problem.moduli)
