"""Invariant and oracle checks run against a scenario.

Every check measures one number and compares it with the tolerance stored in
``Scenario.checks``. Most are generic (energy law, pairing, tangency, drift,
equivalence of the three formulations); a few are closed-form oracles tied
to a built-in system and only run when the scenario's system is that
built-in's.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.integrate import simpson

from .integrate import IntegratorConfig, integrate
from .mechanics import (
    PhaseState, PhysicsError, build_cache, cache_fd_error, herglotz_field,
    nonholonomic_field, tangency_residuals, vakonomic_field,
)
from .scenarios import Scenario, builtin
from .symexpr import EvalDomainError

__all__ = ["CheckResult", "CheckContext", "run_checks", "CHECKS", "oscillator_exact"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: object
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        tol = (f"[{self.tolerance[0]:g}, {self.tolerance[1]:g}]" if isinstance(self.tolerance, tuple)
               else f"<= {self.tolerance:.1e}")
        text = f"{verdict}  {self.name:<26} {self.value:.3e}  {tol}"
        return text + (f"  ({self.detail})" if self.detail else "")


class CheckContext:
    """Lazily built artefacts shared by the checks of one scenario."""

    def __init__(self, sc: Scenario):
        self.sc = sc

    @cached_property
    def cache(self):
        return build_cache(self.sc.system)

    @cached_property
    def trajectory(self):
        cfg = replace(self.sc.config, record_every=1, project=False)
        return integrate(self.sc.system, self.cache, None, self.sc.initial, cfg)

    def is_builtin(self, name: str) -> bool:
        ref = builtin(name)
        return ref.system == self.sc.system


def oscillator_exact(t: float, gamma: float, q0: float = 1.0) -> tuple[float, float]:
    """Closed form of ``q'' + gamma q' + q = 0`` with ``q(0) = q0``, ``q'(0) = 0``."""
    a = gamma / 2
    w = math.sqrt(1 - a * a)
    decay = math.exp(-a * t)
    return q0 * decay * (math.cos(w * t) + a / w * math.sin(w * t)), -q0 * decay * math.sin(w * t) / w


def _max_abs(values) -> float:
    return max((abs(x) for x in values), default=0.0)


def check_cache_fd(ctx, tol):
    worst, failure = cache_fd_error(ctx.cache, ctx.sc.initial, rtol=tol)
    return worst, failure or ""


def check_pairing(ctx, tol):
    return ctx.trajectory.summary.max_pairing_residual, ""


def check_energy_law(ctx, tol):
    return ctx.trajectory.summary.max_energy_rate_mismatch, "relative to 1+|E|"


def check_constraint_drift(ctx, tol):
    return ctx.trajectory.summary.max_constraint_drift, ""


def check_tangency(ctx, tol):
    worst = 0.0
    for smp in ctx.trajectory.samples:
        worst = max(worst, _max_abs(tangency_residuals(ctx.cache, smp.state, smp.field)))
    return worst, ""


def _random_states(sc: Scenario, count: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    st = sc.initial
    n = len(st.q)
    for _ in range(count):
        q = np.asarray(st.q) + rng.uniform(-1, 1, n)
        v = np.asarray(st.v) + rng.uniform(-1, 1, n)
        yield PhaseState(0.0, q, v, st.s + rng.uniform(-1, 1), (), 0.0)


def check_equivalence_fields(ctx, tol):
    sys = ctx.sc.system
    worst, used = 0.0, 0
    for st in _random_states(ctx.sc, 100):
        try:
            fields = [f(sys, ctx.cache, st) for f in (herglotz_field, nonholonomic_field, vakonomic_field)]
        except (PhysicsError, EvalDomainError):
            continue
        used += 1
        ref = fields[0]
        for fe in fields[1:]:
            worst = max(worst, _max_abs(np.subtract(fe.vdot, ref.vdot)),
                        abs(fe.sdot - ref.sdot), abs(fe.vsdot - ref.vsdot))
    if used == 0:
        return math.inf, "no regular random state found"
    return worst, f"{used} states"


def check_equivalence_trajectories(ctx, tol):
    sc = ctx.sc
    # fixed steps: adaptive control would pick different grids per kind
    cfg = replace(sc.config, method="rk4", record_every=1)
    runs = [integrate(sc.system, ctx.cache, kind, sc.initial, cfg) for kind in ("none", "nonholonomic", "vakonomic")]
    worst = 0.0
    for other in runs[1:]:
        for a, b in zip(runs[0].samples, other.samples):
            sa, sb = a.state, b.state
            worst = max(worst, _max_abs(np.subtract(sa.q, sb.q)), _max_abs(np.subtract(sa.v, sb.v)),
                        abs(sa.s - sb.s))
    return worst, ""


def check_mu_closed_form(ctx, tol):
    """``1 + mu(T) = (1 + mu(0)) exp(int g)``, ``g = dL/ds + nu_b dpsi^b/ds`` by Simpson quadrature."""
    samples = ctx.trajectory.samples
    ts, g = [], []
    for smp in samples:
        lag, cons = ctx.cache.at(smp.state)
        nu = smp.state.nu or ()
        ts.append(smp.t)
        g.append(lag.s + sum(n * C.s for n, C in zip(nu, cons)))
    integral = simpson(g, x=ts) if len(ts) > 1 else 0.0
    first, last = samples[0].state, samples[-1].state
    expected = (1.0 + first.mu) * math.exp(integral)
    return abs((1.0 + last.mu) - expected), f"1+mu(T)={1.0 + last.mu:.12f}"


def check_oscillator_closed_form(ctx, tol):
    if not ctx.is_builtin("damped_oscillator"):
        return math.inf, "system differs from the built-in damped oscillator"
    gamma = ctx.sc.system.params["gamma"]
    st = ctx.trajectory.final.state
    q, v = oscillator_exact(st.t, gamma, ctx.sc.initial.q[0])
    if ctx.sc.initial.v[0] != 0.0:
        return math.inf, "closed form assumes zero initial velocity"
    return max(abs(st.q[0] - q), abs(st.v[0] - v)), ""


def check_disk_multipliers(ctx, tol):
    if not ctx.is_builtin("rolling_disk"):
        return math.inf, "system differs from the built-in rolling disk"
    worst = 0.0
    for smp in ctx.trajectory.samples:
        st, (lam1, lam2) = smp.state, smp.field.multipliers
        phi, vtheta, vphi = st.q[3], st.v[2], st.v[3]
        worst = max(worst, abs(lam1 - vtheta * vphi * math.sin(phi)), abs(lam2 + vtheta * vphi * math.cos(phi)))
    return worst, ""


def check_disk_theta_rate(ctx, tol):
    if not ctx.is_builtin("rolling_disk"):
        return math.inf, "system differs from the built-in rolling disk"
    delta = ctx.sc.system.params["delta"]
    final = ctx.trajectory.final.state
    expected = ctx.sc.initial.v[2] * math.exp(delta * (final.t - ctx.sc.initial.t))
    return abs(final.v[2] - expected) / abs(expected), f"vtheta(T)={final.v[2]:.12f}"


def _endpoint(ctx, dt: float, t_end: float):
    cfg = IntegratorConfig(method="rk4", dt=dt, t_end=t_end, record_every=10 ** 9)
    st = integrate(ctx.sc.system, ctx.cache, None, ctx.sc.initial, cfg).final.state
    return np.array(st.q + st.v)


def check_order(ctx, tol):
    """Ratio of RK4 endpoint errors when the step halves (4th order gives 16)."""
    t_end = ctx.sc.initial.t + 1.0
    if ctx.is_builtin("damped_oscillator"):
        dts = (2e-3, 1e-3)
        q, v = oscillator_exact(1.0, ctx.sc.system.params["gamma"], ctx.sc.initial.q[0])
        exact = np.array([q, v])
    else:
        dts = (0.04, 0.02)
        exact = _endpoint(ctx, 0.0025, t_end)
    errs = [float(np.max(np.abs(_endpoint(ctx, dt, t_end) - exact))) for dt in dts]
    if errs[1] == 0.0:
        return math.inf, "finer run hit the reference exactly"
    return errs[0] / errs[1], f"errors {errs[0]:.3e} -> {errs[1]:.3e}"


CHECKS = {
    "cache_fd": check_cache_fd,
    "pairing": check_pairing,
    "energy_law": check_energy_law,
    "constraint_drift": check_constraint_drift,
    "tangency": check_tangency,
    "equivalence_fields": check_equivalence_fields,
    "equivalence_trajectories": check_equivalence_trajectories,
    "mu_closed_form": check_mu_closed_form,
    "oscillator_closed_form": check_oscillator_closed_form,
    "disk_multipliers": check_disk_multipliers,
    "disk_theta_rate": check_disk_theta_rate,
    "order": check_order,
}


def _passes(value: float, tol) -> bool:
    if isinstance(tol, tuple):
        return tol[0] <= value <= tol[1]
    return value <= tol


def run_checks(sc: Scenario, ctx: CheckContext | None = None) -> list[CheckResult]:
    """Run every check listed in ``sc.checks``, in order.

    Physics failures inside a check mark that check failed; they do not stop
    the others.
    """
    ctx = ctx or CheckContext(sc)
    results = []
    for name, tol in sc.checks:
        try:
            value, detail = CHECKS[name](ctx, tol)
        except (PhysicsError, EvalDomainError) as exc:
            value, detail = math.inf, str(exc)
        results.append(CheckResult(name, float(value), tol, _passes(value, tol), detail))
    return results
