"""Dynamical vector fields of action-dependent Lagrangians.

A Lagrangian ``L(q, v, s)`` is read as a degenerate Lagrangian on the tangent
bundle of ``Q x R`` with the extra constraint ``v_s - L = 0``. That constraint
is eliminated analytically: ``s' = L``, the dissipative multiplier is
``dL/ds`` and the ``v_s`` component ``G`` comes from tangency. What is left
to solve per state is a small linear system for the accelerations ``B``
(plus constraint multipliers):

Herglotz (no extra constraints)::

    W B = r,   r_i = L_qi + L_s L_vi - v^h L_{q^h v^i} - L L_{s v^i}

nonholonomic constraints ``phi^a(q, v, s)``::

    [ W        phi_v^T ] [B  ]   [ r                         ]
    [ phi_v    0       ] [lam] = [ -phi_q . v - phi_s L       ]

vakonomic constraints ``psi^b(q, v, s)`` in the reduced multiplier form
(Herglotz equation of ``L - nu_b psi^b`` with time-dependent ``nu``)::

    [ W - nu.psi_vv   -psi_v^T ] [B  ]   [ R(nu)                ]
    [ psi_v            0       ] [nu'] = [ -psi_q . v - psi_s L ]

with ``W = d2L/dv dv`` and ``R(nu)`` the right-hand side of the reduced
equation after expanding every total derivative with ``s' = L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from . import densela
from .symexpr import (
    EvalDomainError, Expr, compile_exprs, differentiate, free_vars, parse_expr, simplify,
)

__all__ = [
    "KINDS", "PhysicsError", "RegularityFailure", "RankDeficientConstraints",
    "DegenerateMultiplier", "DomainFailure", "CacheValidationError",
    "Constraint", "SystemSpec", "PhaseState", "PartialCache", "Partials",
    "DiagnosticsRecord", "FieldEval",
    "build_cache", "validate_cache", "cache_fd_error", "herglotz_field", "nonholonomic_field",
    "vakonomic_field", "field_for", "energy", "diagnostics", "assemble",
    "tangency_residuals",
    "velocity_name",
]

KINDS = ("none", "nonholonomic", "vakonomic")
RESERVED = ("s", "vs")
RANK_TOL = 1e-9
MU_FLOOR = 1e-12


def velocity_name(coordinate: str) -> str:
    return "v" + coordinate


# ---------------------------------------------------------------------------
# errors


class PhysicsError(RuntimeError):
    """Base for failures tied to a particular phase state."""

    def __init__(self, message: str, state: "PhaseState | None" = None):
        if state is not None:
            message = f"{message} at t={state.t!r}, state={state.describe()}"
        super().__init__(message)
        self.state = state


class RegularityFailure(PhysicsError):
    """The (augmented) velocity Hessian is singular at this state."""


class RankDeficientConstraints(PhysicsError):
    """The constraint velocity Jacobian lost rank at this state."""


class DegenerateMultiplier(PhysicsError):
    """The reconstructed vakonomic multiplier reached ``mu = -1``."""


class DomainFailure(PhysicsError):
    """A partial of ``L`` or of a constraint left its domain (``ln`` of a negative, ...)."""


class CacheValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# system description


@dataclass(frozen=True)
class Constraint:
    name: str
    expr: Expr


@dataclass(frozen=True)
class SystemSpec:
    """An action-dependent Lagrangian with optional velocity constraints.

    Velocities are named ``"v" + coordinate``; ``s`` is the action variable.
    Parameters stay symbolic in the expressions and are bound at evaluation.
    """

    coordinates: tuple
    lagrangian: Expr
    params: Mapping[str, float] = field(default_factory=dict)
    constraints: tuple = ()
    kind: str = "none"

    def __post_init__(self):
        coords = tuple(self.coordinates)
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "params", dict(self.params))
        if not coords:
            raise ValueError("at least one coordinate is required")
        if len(set(coords)) != len(coords):
            raise ValueError("duplicate coordinate names")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        names = list(coords) + list(self.velocities)
        for name in names + list(self.params):
            if name in RESERVED:
                raise ValueError(f"identifier {name!r} is reserved")
        everything = names + ["s"] + list(self.params)
        if len(set(everything)) != len(everything):
            raise ValueError("coordinate, velocity and parameter names must be distinct")
        declared = set(everything)
        for label, e in [("lagrangian", self.lagrangian)] + [(c.name, c.expr) for c in self.constraints]:
            unknown = free_vars(e) - declared
            if unknown:
                raise ValueError(f"{label} references undeclared variable {sorted(unknown)[0]!r}")
        cnames = [c.name for c in self.constraints]
        if len(set(cnames)) != len(cnames):
            raise ValueError("duplicate constraint names")
        if self.kind == "none" and self.constraints:
            raise ValueError("kind 'none' cannot carry constraints")
        if len(self.constraints) >= len(coords):
            raise ValueError("need fewer constraints than coordinates")

    @classmethod
    def from_text(cls, coordinates: Sequence[str], lagrangian: str,
                  params: Mapping[str, float] | None = None,
                  constraints: Sequence[tuple[str, str]] = (),
                  kind: str | None = None) -> "SystemSpec":
        """Build a system from expression source strings."""
        params = dict(params or {})
        coordinates = tuple(coordinates)
        declared = set(coordinates) | {velocity_name(c) for c in coordinates} | {"s"} | set(params)
        declared -= {"vs"}
        lag = parse_expr(lagrangian, declared)
        cons = tuple(Constraint(name, parse_expr(text, declared)) for name, text in constraints)
        if kind is None:
            kind = "nonholonomic" if cons else "none"
        return cls(coordinates, lag, params, cons, kind)

    @property
    def n(self) -> int:
        return len(self.coordinates)

    @property
    def velocities(self) -> tuple:
        return tuple(velocity_name(c) for c in self.coordinates)

    @property
    def constraint_names(self) -> tuple:
        return tuple(c.name for c in self.constraints)

    def with_kind(self, kind: str) -> "SystemSpec":
        return replace(self, kind=kind)

    def without_constraints(self) -> "SystemSpec":
        return replace(self, constraints=(), kind="none")


@dataclass(frozen=True)
class PhaseState:
    """A point ``(q, v, s)`` at time ``t``; ``nu`` and ``mu`` only for vakonomic runs.

    ``v_s`` is not stored: on the constraint manifold it equals ``L``.
    """

    t: float
    q: tuple
    v: tuple
    s: float
    nu: tuple | None = None
    mu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        object.__setattr__(self, "v", tuple(float(x) for x in self.v))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "s", float(self.s))
        if self.nu is not None:
            object.__setattr__(self, "nu", tuple(float(x) for x in self.nu))
        if self.mu is not None:
            object.__setattr__(self, "mu", float(self.mu))
        if len(self.q) != len(self.v):
            raise ValueError("q and v must have the same length")
        values = self.q + self.v + (self.t, self.s) + (self.nu or ()) + ((self.mu,) if self.mu is not None else ())
        if not all(math.isfinite(x) for x in values):
            raise ValueError("phase state entries must be finite")

    def describe(self) -> str:
        parts = [f"q={list(self.q)}", f"v={list(self.v)}", f"s={self.s!r}"]
        if self.nu is not None:
            parts.append(f"nu={list(self.nu)}")
        if self.mu is not None:
            parts.append(f"mu={self.mu!r}")
        return "(" + ", ".join(parts) + ")"


# ---------------------------------------------------------------------------
# partials


class Partials:
    """Numeric values of the cached partials at one state.

    Mixed second partials are indexed ``[j][i]`` for ``d/dq^j (d/dv^i)``.
    """

    __slots__ = ("value", "q", "v", "s", "qv", "vv", "sv")

    def __init__(self, flat: Sequence[float], n: int):
        it = iter(flat)
        self.value = next(it)
        self.q = [next(it) for _ in range(n)]
        self.v = [next(it) for _ in range(n)]
        self.s = next(it)
        self.qv = [[next(it) for _ in range(n)] for _ in range(n)]
        self.vv = [[next(it) for _ in range(n)] for _ in range(n)]
        self.sv = [next(it) for _ in range(n)]


def _block_size(n: int) -> int:
    return 2 + 3 * n + 2 * n * n


@dataclass(frozen=True)
class PartialCache:
    """Simplified symbolic partials of ``L`` and of each constraint.

    ``exprs[name]`` maps a label such as ``"L_v"`` or ``"phi1_qv"`` to the
    corresponding nested tuple of expressions. Everything is flattened into
    one compiled function of ``(q, v, s, params)``.
    """

    system: SystemSpec
    exprs: dict
    compiled: object
    argnames: tuple

    def _args(self, q, v, s) -> list:
        return [*q, *v, s, *self.system.params.values()]

    def evaluate(self, q: Sequence[float], v: Sequence[float], s: float):
        """Return ``(L partials, [constraint partials, ...])`` at a state."""
        flat = self.compiled(self._args(q, v, s))
        n = self.system.n
        size = _block_size(n)
        lag = Partials(flat[:size], n)
        cons = [Partials(flat[size * (k + 1): size * (k + 2)], n) for k in range(len(self.system.constraints))]
        return lag, cons

    def at(self, st: PhaseState):
        try:
            return self.evaluate(st.q, st.v, st.s)
        except EvalDomainError as exc:
            raise DomainFailure(str(exc), st) from exc


def _partials_of(e: Expr, coords, vels) -> dict:
    e = simplify(e)
    dq = tuple(differentiate(e, c) for c in coords)
    dv = tuple(differentiate(e, w) for w in vels)
    ds = differentiate(e, "s")
    return {
        "": e,
        "_q": dq,
        "_v": dv,
        "_s": ds,
        "_qv": tuple(tuple(differentiate(dv[i], c) for i in range(len(vels))) for c in coords),
        "_vv": tuple(tuple(differentiate(dv[i], w) for i in range(len(vels))) for w in vels),
        "_sv": tuple(differentiate(dv[i], "s") for i in range(len(vels))),
    }


def _flatten(block: dict) -> list:
    out = [block[""], *block["_q"], *block["_v"], block["_s"]]
    for row in block["_qv"]:
        out.extend(row)
    for row in block["_vv"]:
        out.extend(row)
    out.extend(block["_sv"])
    return out


def build_cache(sys: SystemSpec) -> PartialCache:
    """Differentiate, simplify and compile every partial the fields need."""
    coords, vels = sys.coordinates, sys.velocities
    exprs = {}
    flat: list = []
    for label, e in [("L", sys.lagrangian)] + [(c.name, c.expr) for c in sys.constraints]:
        block = _partials_of(e, coords, vels)
        for suffix, value in block.items():
            exprs[label + suffix] = value
        flat.extend(_flatten(block))
    argnames = tuple(coords) + tuple(vels) + ("s",) + tuple(sys.params)
    return PartialCache(sys, exprs, compile_exprs(flat, argnames), argnames)


def validate_cache(cache: PartialCache, st: PhaseState, rtol: float = 1e-5, step: float = 1e-6) -> float:
    """Compare every cached partial with a centered difference of its parent.

    Returns the largest relative mismatch ``|d - fd| / max(1, |d|)``; raises
    :class:`CacheValidationError` naming the first partial beyond ``rtol``.
    """
    worst, first_failure = cache_fd_error(cache, st, rtol, step)
    if first_failure is not None:
        raise CacheValidationError(first_failure)
    return worst


def cache_fd_error(cache: PartialCache, st: PhaseState, rtol: float = 1e-5, step: float = 1e-6):
    """``(worst relative mismatch, description of first failure or None)``."""
    sys = cache.system
    base = cache._args(st.q, st.v, st.s)
    names = list(cache.argnames)

    def shifted(fn_exprs, var, h):
        binding = dict(zip(names, base))
        binding[var] += h
        return compile_exprs(fn_exprs, names)([binding[a] for a in names])

    worst = 0.0
    first_failure = None
    labels = ["L"] + [c.name for c in sys.constraints]
    for label in labels:
        parent0 = [cache.exprs[label]]
        dv = list(cache.exprs[label + "_v"])
        checks = [(parent0, var, [cache.exprs[label + "_q"][j]]) for j, var in enumerate(sys.coordinates)]
        checks += [(parent0, var, [dv[j]]) for j, var in enumerate(sys.velocities)]
        checks.append((parent0, "s", [cache.exprs[label + "_s"]]))
        checks += [(dv, var, list(cache.exprs[label + "_qv"][j])) for j, var in enumerate(sys.coordinates)]
        checks += [(dv, var, list(cache.exprs[label + "_vv"][j])) for j, var in enumerate(sys.velocities)]
        checks.append((dv, "s", list(cache.exprs[label + "_sv"])))
        for parents, var, derivs in checks:
            x0 = dict(zip(names, base))[var]
            h = step * max(1.0, abs(x0))
            plus = shifted(parents, var, h)
            minus = shifted(parents, var, -h)
            exact = compile_exprs(derivs, names)(base)
            for p, m, d in zip(plus, minus, exact):
                fd = (p - m) / (2 * h)
                err = abs(d - fd) / max(1.0, abs(d))
                worst = max(worst, err)
                if err > rtol and first_failure is None:
                    first_failure = f"partial of {label} w.r.t. {var}: symbolic {d!r} vs finite difference {fd!r}"
    return worst, first_failure


# ---------------------------------------------------------------------------
# field evaluation


@dataclass(frozen=True)
class DiagnosticsRecord:
    energy: float
    energy_rate_actual: float
    energy_rate_predicted: float | None
    pairing_residual: float
    constraint_residuals: tuple


@dataclass(frozen=True)
class FieldEval:
    """One evaluation of a dynamical vector field.

    ``multipliers`` holds the constraint multipliers ``lambda_a`` for
    nonholonomic systems and the multiplier rates ``nu_b'`` for vakonomic
    ones. ``dissipative_multiplier`` is ``dL/ds``.
    """

    kind: str
    qdot: tuple
    vdot: tuple
    sdot: float
    vsdot: float
    dissipative_multiplier: float
    multipliers: tuple
    mudot: float | None
    energy: float
    energy_rate_actual: float
    energy_rate_predicted: float | None
    pairing_residual: float
    constraint_residuals: tuple

    @property
    def diagnostics(self) -> DiagnosticsRecord:
        return DiagnosticsRecord(self.energy, self.energy_rate_actual, self.energy_rate_predicted,
                                 self.pairing_residual, self.constraint_residuals)


def _dot(a, b) -> float:
    return sum(x * y for x, y in zip(a, b))


def _herglotz_rhs(P: Partials, v) -> list[float]:
    n = len(v)
    L = P.value
    return [P.q[i] + P.s * P.v[i] - sum(v[h] * P.qv[h][i] for h in range(n)) - L * P.sv[i]
            for i in range(n)]


def _tangency_row(C: Partials, v, L: float):
    return list(C.v), -(_dot(C.q, v) + C.s * L)


def assemble(kind: str, cache: PartialCache, st: PhaseState, parts=None):
    """Assemble the linear system ``(M, rhs)`` whose solution is ``(B, multipliers)``."""
    lag, cons = parts if parts is not None else cache.at(st)
    n = cache.system.n
    v = st.v
    L = lag.value
    if kind == "none":
        return [list(row) for row in lag.vv], _herglotz_rhs(lag, v)
    k = len(cons)
    if kind == "nonholonomic":
        M = [list(lag.vv[i]) + [cons[a].v[i] for a in range(k)] for i in range(n)]
        rhs = _herglotz_rhs(lag, v)
    elif kind == "vakonomic":
        nu = st.nu if st.nu is not None else (0.0,) * k
        if len(nu) != k:
            raise ValueError(f"state carries {len(nu)} multipliers, system has {k} constraints")
        eff_s = lag.s - sum(nu[b] * cons[b].s for b in range(k))
        M, rhs = [], []
        for i in range(n):
            row = [lag.vv[i][j] - sum(nu[b] * cons[b].vv[i][j] for b in range(k)) for j in range(n)]
            row += [-cons[b].v[i] for b in range(k)]
            M.append(row)
            r = (lag.q[i] - sum(nu[b] * cons[b].q[i] for b in range(k))
                 - sum(v[j] * (lag.qv[j][i] - sum(nu[b] * cons[b].qv[j][i] for b in range(k))) for j in range(n))
                 - L * (lag.sv[i] - sum(nu[b] * cons[b].sv[i] for b in range(k)))
                 + eff_s * (lag.v[i] - sum(nu[b] * cons[b].v[i] for b in range(k))))
            rhs.append(r)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    for C in cons:
        row, r = _tangency_row(C, v, L)
        M.append(row + [0.0] * k)
        rhs.append(r)
    return M, rhs


def _check_rank(cons, st, n):
    if not cons:
        return
    J = [C.v for C in cons]
    if densela.rank_estimate(J, RANK_TOL) < len(cons):
        raise RankDeficientConstraints("constraint velocity Jacobian is rank deficient", st)


def _solve(M, rhs, st):
    try:
        return densela.solve(M, rhs)
    except densela.SingularMatrixError as exc:
        raise RegularityFailure(f"singular dynamics matrix ({exc})", st) from None
    except ValueError as exc:
        raise RegularityFailure(f"cannot solve dynamics ({exc})", st) from None


def _energy_terms(lag: Partials, v):
    """Energy and its partials expressed through the Lagrangian partials."""
    n = len(v)
    E = _dot(v, lag.v) - lag.value
    dE_q = [sum(v[h] * lag.qv[i][h] for h in range(n)) - lag.q[i] for i in range(n)]
    dE_v = [sum(v[h] * lag.vv[i][h] for h in range(n)) for i in range(n)]
    dE_s = sum(v[h] * lag.sv[h] for h in range(n)) - lag.s
    return E, dE_q, dE_v, dE_s


def _finish(kind, st, lag, cons, B, mults, mudot, predicted_from_mults):
    v = st.v
    L = lag.value
    G = _dot(v, lag.q) + _dot(B, lag.v) + L * lag.s
    E, dE_q, dE_v, dE_s = _energy_terms(lag, v)
    actual = _dot(v, dE_q) + _dot(B, dE_v) + L * dE_s
    if kind == "vakonomic" and cons:
        predicted = None
    else:
        predicted = lag.s * E
        if predicted_from_mults:
            predicted -= sum(lam * _dot(v, C.v) for lam, C in zip(mults, cons))
    pairing = (L - _dot(lag.v, v)) + E
    return FieldEval(
        kind=kind, qdot=tuple(v), vdot=tuple(B), sdot=L, vsdot=G,
        dissipative_multiplier=lag.s, multipliers=tuple(mults), mudot=mudot,
        energy=E, energy_rate_actual=actual, energy_rate_predicted=predicted,
        pairing_residual=pairing, constraint_residuals=tuple(C.value for C in cons),
    )


def herglotz_field(sys: SystemSpec, cache: PartialCache, st: PhaseState) -> FieldEval:
    """Herglotz field: solve ``W B = r`` and complete with ``s' = L`` and tangency ``G``."""
    if sys.constraints:
        raise ValueError("herglotz_field takes an unconstrained system")
    lag, cons = cache.at(st)
    M, rhs = assemble("none", cache, st, (lag, cons))
    B = _solve(M, rhs, st)
    return _finish("none", st, lag, [], B, (), None, False)


def nonholonomic_field(sys: SystemSpec, cache: PartialCache, st: PhaseState) -> FieldEval:
    """Nonholonomic field with constraint multipliers from the augmented system."""
    lag, cons = cache.at(st)
    n = sys.n
    _check_rank(cons, st, n)
    M, rhs = assemble("nonholonomic", cache, st, (lag, cons))
    sol = _solve(M, rhs, st)
    return _finish("nonholonomic", st, lag, cons, sol[:n], sol[n:], None, True)


def vakonomic_field(sys: SystemSpec, cache: PartialCache, st: PhaseState) -> FieldEval:
    """Reduced vakonomic field; also returns ``mu'`` for the reconstruction multiplier.

    ``mu' = (1 + mu) dL/ds + mu_b dpsi^b/ds`` with ``mu_b = (1 + mu) nu_b``.
    """
    lag, cons = cache.at(st)
    n, k = sys.n, len(cons)
    mu = 0.0 if st.mu is None else st.mu
    if abs(1.0 + mu) <= MU_FLOOR:
        raise DegenerateMultiplier("1 + mu vanished", st)
    nu = st.nu if st.nu is not None else (0.0,) * k
    _check_rank(cons, st, n)
    M, rhs = assemble("vakonomic", cache, st, (lag, cons))
    sol = _solve(M, rhs, st)
    mudot = (1.0 + mu) * lag.s + sum((1.0 + mu) * nu[b] * cons[b].s for b in range(k))
    return _finish("vakonomic", st, lag, cons, sol[:n], sol[n:], mudot, False)


_FIELDS = {"none": herglotz_field, "nonholonomic": nonholonomic_field, "vakonomic": vakonomic_field}


def field_for(kind: str):
    try:
        return _FIELDS[kind]
    except KeyError:
        raise ValueError(f"unknown kind {kind!r}") from None


def energy(cache: PartialCache, st: PhaseState) -> float:
    """Lagrangian energy ``v^i dL/dv^i - L``."""
    lag, _ = cache.at(st)
    return _dot(st.v, lag.v) - lag.value


def diagnostics(sys: SystemSpec, cache: PartialCache, st: PhaseState, fe: FieldEval) -> DiagnosticsRecord:
    """Recompute energy rate, contact pairing and constraint residuals for ``(st, fe)``.

    The actual rate is ``<dE, X>`` with ``dE`` expanded through the cached
    partials. The prediction is ``(dL/ds) E`` without constraints and
    ``(dL/ds) E - lambda_a v^i dphi^a/dv^i`` for nonholonomic ones; there is
    none for constrained vakonomic systems.
    """
    lag, cons = cache.at(st)
    v = st.v
    E, dE_q, dE_v, dE_s = _energy_terms(lag, v)
    actual = _dot(fe.qdot, dE_q) + _dot(fe.vdot, dE_v) + fe.sdot * dE_s
    if fe.kind == "vakonomic" and cons:
        predicted = None
    elif fe.kind == "nonholonomic":
        predicted = lag.s * E - sum(lam * _dot(v, C.v) for lam, C in zip(fe.multipliers, cons))
    else:
        predicted = lag.s * E
    pairing = (fe.sdot - _dot(lag.v, fe.qdot)) + E
    return DiagnosticsRecord(E, actual, predicted, pairing, tuple(C.value for C in cons))


def tangency_residuals(cache: PartialCache, st: PhaseState, fe: FieldEval) -> tuple:
    """``<d phi^a, X>`` for each constraint, evaluated algebraically."""
    _, cons = cache.at(st)
    return tuple(_dot(C.q, fe.qdot) + _dot(C.v, fe.vdot) + C.s * fe.sdot for C in cons)
