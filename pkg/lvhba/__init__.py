# Makes 'lvhba' a package; the names below are the public API.
from .bench import (BenchmarkInstance, build_merely_convex, build_scalar_testbed, build_strongly_convex,
                    metric_extras, metrics, signed_equality)
from .checks import check_value_gradient, validate_problem
from .core import (BilevelProblem, Gamma, IterateState, LipschitzModuli, Schedule, SolverConfig, TheoryConstants,
                   derive_constants, theory_constants)
from .errors import (ConfigError, LVHBAError, PreconditionError, ProjectionError, SaddleOracleError,
                     UnsupportedSetError)
from .solver import lv_hba_step, merit_Vk, outer_directions, residual_Rk, run
from .trace import Trace
from .valuefn import (SaddlePoint, eval_lagrangian, feasibility_gap, gda_step, grad_v, inner_directions,
                      penalized_objective, saddle_oracle, value_v, value_v_untruncated)

__version__ = "0.1.0"
