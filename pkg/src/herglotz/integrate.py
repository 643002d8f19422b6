"""Time stepping of the dynamical fields.

Phase states are advanced as flat vectors ``(q, v, s[, nu, mu])`` whose
derivative is ``(v, B, L[, nu', mu'])``. Two schemes are provided: classical
fixed-step RK4 and the Dormand-Prince 5(4) embedded pair with the usual
step-size controller. Constraint drift is measured, not corrected, unless
``IntegratorConfig.project`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

from . import densela
from .mechanics import (
    FieldEval, PartialCache, PhaseState, PhysicsError, SystemSpec, field_for,
)

__all__ = [
    "IntegratorConfig", "Sample", "TrajectorySummary", "Trajectory",
    "StepFailure", "AdmissibilityError",
    "bind_field", "step_rk4", "integrate", "pack", "unpack",
]

Field = Callable[[PhaseState], FieldEval]


class StepFailure(PhysicsError):
    """The adaptive scheme could not meet its tolerance at ``dt_min``."""


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    record_every: int = 10
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    dt_min: float = 1e-12
    dt_max: float = math.inf
    admissibility_tol: float = 1e-9
    project: bool = False

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"method must be 'rk4' or 'rk45', got {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be an integer >= 1")


@dataclass(frozen=True)
class Sample:
    t: float
    state: PhaseState
    field: FieldEval

    @property
    def energy(self) -> float:
        return self.field.energy

    @property
    def residual_max(self) -> float:
        return max((abs(r) for r in self.field.constraint_residuals), default=0.0)


@dataclass
class TrajectorySummary:
    max_constraint_drift: float = 0.0
    max_energy_rate_mismatch: float = 0.0
    max_pairing_residual: float = 0.0
    steps: int = 0
    rejected_steps: int = 0


@dataclass
class Trajectory:
    kind: str
    samples: list = field(default_factory=list)
    summary: TrajectorySummary = field(default_factory=TrajectorySummary)

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    @property
    def times(self) -> list:
        return [smp.t for smp in self.samples]


def pack(st: PhaseState) -> list[float]:
    y = [*st.q, *st.v, st.s]
    if st.nu is not None:
        y.extend(st.nu)
    if st.mu is not None:
        y.append(st.mu)
    return y


def unpack(y, t: float, like: PhaseState) -> PhaseState:
    n = len(like.q)
    k = 0 if like.nu is None else len(like.nu)
    nu = tuple(y[2 * n + 1: 2 * n + 1 + k]) if like.nu is not None else None
    mu = y[2 * n + 1 + k] if like.mu is not None else None
    return PhaseState(t, y[:n], y[n:2 * n], y[2 * n], nu, mu)


def _rate(st: PhaseState, fe: FieldEval) -> list[float]:
    dy = [*fe.qdot, *fe.vdot, fe.sdot]
    if st.nu is not None:
        dy.extend(fe.multipliers)
    if st.mu is not None:
        dy.append(fe.mudot)
    return dy


def _axpy(y, h, *terms):
    """``y + h * sum(c_i * k_i)`` for ``terms = ((c_1, k_1), ...)``."""
    out = list(y)
    for c, k in terms:
        if c == 0.0:
            continue
        hc = h * c
        for i, ki in enumerate(k):
            out[i] += hc * ki
    return out


def bind_field(sys: SystemSpec, cache: PartialCache, kind: str | None = None) -> Field:
    """Return ``state -> FieldEval`` for the given system and kind."""
    return partial(field_for(kind or sys.kind), sys, cache)


def _rk4_increment(fld: Field, st: PhaseState, dt: float, fe0: FieldEval | None = None) -> list[float]:
    y = pack(st)
    k1 = _rate(st, fe0 if fe0 is not None else fld(st))
    k2 = _rate(st, fld(unpack(_axpy(y, dt / 2, (1.0, k1)), st.t + dt / 2, st)))
    k3 = _rate(st, fld(unpack(_axpy(y, dt / 2, (1.0, k2)), st.t + dt / 2, st)))
    k4 = _rate(st, fld(unpack(_axpy(y, dt, (1.0, k3)), st.t + dt, st)))
    # summing the stages before scaling keeps linear flows exact
    return [dt * (a + 2.0 * b + 2.0 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4)]


def step_rk4(fld: Field, st: PhaseState, dt: float, fe0: FieldEval | None = None) -> PhaseState:
    """One classical RK4 step. ``fe0`` reuses a field evaluation at ``st``."""
    inc = _rk4_increment(fld, st, dt, fe0)
    return unpack([yi + di for yi, di in zip(pack(st), inc)], st.t + dt, st)


# Dormand-Prince 5(4)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_DP_E = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))


def _dp_step(fld: Field, st: PhaseState, fe0: FieldEval, dt: float):
    y = pack(st)
    ks = [_rate(st, fe0)]
    for i in range(1, 7):
        yi = _axpy(y, dt, *zip(_DP_A[i], ks))
        ks.append(_rate(st, fld(unpack(yi, st.t + _DP_C[i] * dt, st))))
    y5 = _axpy(y, dt, *zip(_DP_B5, ks))
    err = _axpy([0.0] * len(y), dt, *zip(_DP_E, ks))
    return y, y5, err


def _project(cache: PartialCache, st: PhaseState, iterations: int = 3) -> PhaseState:
    """Minimum-norm velocity correction onto the constraint set."""
    for _ in range(iterations):
        _, cons = cache.at(st)
        if not cons:
            return st
        phi = [C.value for C in cons]
        if max(abs(x) for x in phi) == 0.0:
            return st
        J = [C.v for C in cons]
        JJt = [[sum(a * b for a, b in zip(ri, rj)) for rj in J] for ri in J]
        w = densela.solve(JJt, phi)
        v = [vi - sum(J[a][i] * w[a] for a in range(len(J))) for i, vi in enumerate(st.v)]
        st = PhaseState(st.t, st.q, v, st.s, st.nu, st.mu)
    return st


class _Monitor:
    def __init__(self, traj: Trajectory):
        self.summary = traj.summary

    def observe(self, fe: FieldEval):
        s = self.summary
        drift = max((abs(r) for r in fe.constraint_residuals), default=0.0)
        s.max_constraint_drift = max(s.max_constraint_drift, drift)
        if fe.energy_rate_predicted is not None:
            mismatch = abs(fe.energy_rate_actual - fe.energy_rate_predicted) / (1.0 + abs(fe.energy))
            s.max_energy_rate_mismatch = max(s.max_energy_rate_mismatch, mismatch)
        s.max_pairing_residual = max(s.max_pairing_residual, abs(fe.pairing_residual))


def _prepare_initial(sys: SystemSpec, kind: str, st0: PhaseState) -> PhaseState:
    if len(st0.q) != sys.n:
        raise ValueError(f"state has {len(st0.q)} coordinates, system has {sys.n}")
    if kind == "vakonomic":
        k = len(sys.constraints)
        nu = st0.nu if st0.nu is not None else (0.0,) * k
        if len(nu) != k:
            raise ValueError(f"initial state has {len(nu)} multipliers, expected {k}")
        mu = 0.0 if st0.mu is None else st0.mu
        return PhaseState(st0.t, st0.q, st0.v, st0.s, nu, mu)
    return PhaseState(st0.t, st0.q, st0.v, st0.s)


def integrate(sys: SystemSpec, cache: PartialCache, field_kind: str | None,
              st0: PhaseState, cfg: IntegratorConfig) -> Trajectory:
    """Integrate from ``st0`` to ``cfg.t_end``.

    Samples are kept every ``cfg.record_every`` accepted steps plus the final
    state. Drift, energy-law mismatch and pairing residuals are monitored at
    every accepted state.

    Raises
    ------
    AdmissibilityError
        If ``st0`` violates a constraint by more than ``cfg.admissibility_tol``.
    StepFailure
        If the adaptive scheme cannot meet its tolerance at ``cfg.dt_min``.
    PhysicsError
        Regularity and rank failures from the field, with the stage state.
    """
    kind = field_kind or sys.kind
    if cfg.t_end < st0.t:
        raise ValueError("t_end must not precede the initial time")
    st = _prepare_initial(sys, kind, st0)
    _, cons = cache.at(st)
    for c, C in zip(sys.constraints, cons):
        if abs(C.value) > cfg.admissibility_tol:
            raise AdmissibilityError(
                f"initial state violates constraint {c.name!r} by {C.value:.3e} "
                f"(tolerance {cfg.admissibility_tol:.1e})")

    fld = bind_field(sys, cache, kind)
    traj = Trajectory(kind)
    monitor = _Monitor(traj)
    fe = fld(st)
    monitor.observe(fe)
    traj.samples.append(Sample(st.t, st, fe))

    if cfg.method == "rk4":
        span = cfg.t_end - st.t
        nsteps = int(round(span / cfg.dt))
        if nsteps * cfg.dt < span * (1 - 1e-12):
            nsteps += 1
        # compensated summation of the increments keeps round-off from
        # swamping the O(dt^4) error on long fine-step runs
        carry = [0.0] * len(pack(st))
        for i in range(1, nsteps + 1):
            t_next = st0.t + i * cfg.dt if i < nsteps else cfg.t_end
            y = pack(st)
            y_new = []
            for j, d in enumerate(_rk4_increment(fld, st, t_next - st.t, fe)):
                d -= carry[j]
                total = y[j] + d
                carry[j] = (total - y[j]) - d
                y_new.append(total)
            st = _finish_step(unpack(y_new, t_next, st), t_next, cfg, cache)
            if cfg.project:
                carry = [0.0] * len(carry)
            fe = fld(st)
            monitor.observe(fe)
            traj.summary.steps += 1
            if i % cfg.record_every == 0 or i == nsteps:
                traj.samples.append(Sample(st.t, st, fe))
        return traj

    dt = min(cfg.dt, cfg.dt_max)
    accepted = 0
    while st.t < cfg.t_end:
        remaining = cfg.t_end - st.t
        last = dt >= remaining
        h = remaining if last else dt
        y, y5, err = _dp_step(fld, st, fe, h)
        scale = [cfg.abs_tol + cfg.rel_tol * max(abs(a), abs(b)) for a, b in zip(y, y5)]
        enorm = math.sqrt(sum((e / sc) ** 2 for e, sc in zip(err, scale)) / len(y))
        if not math.isfinite(enorm):
            enorm = math.inf
        if enorm <= 1.0:
            t_next = cfg.t_end if last else st.t + h
            st = _finish_step(unpack(y5, t_next, st), t_next, cfg, cache)
            fe = fld(st)
            monitor.observe(fe)
            accepted += 1
            traj.summary.steps += 1
            if accepted % cfg.record_every == 0 or st.t >= cfg.t_end:
                traj.samples.append(Sample(st.t, st, fe))
            factor = 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
            dt = min(cfg.dt_max, max(cfg.dt_min, h * factor))
        else:
            traj.summary.rejected_steps += 1
            if h <= cfg.dt_min:
                raise StepFailure(f"error norm {enorm:.3e} at minimum step {cfg.dt_min:.1e}", st)
            factor = max(0.2, 0.9 * enorm ** -0.2) if math.isfinite(enorm) else 0.2
            dt = max(cfg.dt_min, h * factor)
    if traj.samples[-1].t != st.t:
        traj.samples.append(Sample(st.t, st, fe))
    return traj


def _finish_step(st: PhaseState, t_next: float, cfg: IntegratorConfig, cache: PartialCache) -> PhaseState:
    if st.t != t_next:
        st = PhaseState(t_next, st.q, st.v, st.s, st.nu, st.mu)
    if cfg.project:
        st = _project(cache, st)
    return st
