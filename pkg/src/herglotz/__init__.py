"""Contact (Herglotz) Lagrangian mechanics with nonholonomic and vakonomic constraints.

The usual path is scenario -> system -> cached partials -> field -> trajectory::

    from herglotz import builtin, build_cache, integrate
    sc = builtin("rolling_disk")
    traj = integrate(sc.system, build_cache(sc.system), None, sc.initial, sc.config)
"""
from .checks import CheckResult, run_checks
from .densela import SingularMatrixError, solve
from .integrate import (
    AdmissibilityError, IntegratorConfig, StepFailure, Trajectory, integrate, step_rk4,
)
from .mechanics import (
    CacheValidationError, Constraint, DegenerateMultiplier, DomainFailure, FieldEval,
    PhaseState, PhysicsError, RankDeficientConstraints, RegularityFailure, SystemSpec,
    build_cache, diagnostics, energy, field_for, herglotz_field, nonholonomic_field,
    vakonomic_field, validate_cache,
)
from .scenarios import BUILTIN_NAMES, Scenario, builtin, dumps, load, loads, save
from .symexpr import differentiate, evaluate, parse_expr, simplify, to_text

__version__ = "0.1.0"
