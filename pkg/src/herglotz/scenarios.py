"""Scenario files and the built-in example systems.

A scenario file is line oriented, UTF-8, with ``#`` comments::

    [system]
    coordinates = x, y, theta, phi
    lagrangian = 0.5*(vx^2 + vy^2 + vtheta^2 + vphi^2) + delta*s

    [params]
    delta = 0.1

    [constraints]
    kind = nonholonomic
    phi1 = vx - vtheta*cos(phi)
    phi2 = vy - vtheta*sin(phi)

    [initial]
    x = 0, y = 0, theta = 0, phi = 0
    vx = 1, vy = 0, vtheta = 1, vphi = 1
    s = 0

    [integration]
    method = rk4
    dt = 1e-3
    t_end = 1

Unknown sections and keys are errors. The built-in scenarios are stored in
this same format and go through :func:`loads`.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .integrate import IntegratorConfig
from .mechanics import KINDS, Constraint, PhaseState, SystemSpec, velocity_name
from .symexpr import ExprSyntaxError, UndeclaredIdentifierError, evaluate, parse_expr, to_text

__all__ = [
    "Scenario", "ScenarioParseError", "ScenarioSemanticError",
    "BUILTIN_NAMES", "builtin", "builtin_text", "load", "loads", "save", "dumps",
    "default_checks",
]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_SECTIONS = ("system", "params", "constraints", "initial", "integration")
ADMISSIBILITY_TOL = IntegratorConfig().admissibility_tol
_INTEGRATION_KEYS = ("method", "dt", "t_end", "abs_tol", "rel_tol", "record_every", "dt_min", "dt_max")


class ScenarioParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScenarioSemanticError(ValueError):
    def __init__(self, message: str, key: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Scenario:
    """A system, its initial state, integrator settings and the checks it must pass.

    ``checks`` is a tuple of ``(check name, tolerance)`` pairs understood by
    :mod:`herglotz.checks`.
    """

    name: str
    system: SystemSpec
    initial: PhaseState
    config: IntegratorConfig
    checks: tuple = field(default=())


# ---------------------------------------------------------------------------
# parsing


def _number(text: str, key: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ScenarioParseError(f"{key}: expected a number, got {text!r}", line) from None
    if not math.isfinite(value):
        raise ScenarioParseError(f"{key}: number must be finite", line)
    return value


def _split_sections(text: str) -> dict:
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError(f"malformed section header {line!r}", lineno)
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ScenarioSemanticError("unknown section", f"[{name}]")
            if name in sections:
                raise ScenarioSemanticError("duplicate section", f"[{name}]")
            sections[name] = []
            current = name
            continue
        if current is None:
            raise ScenarioParseError("content before the first section", lineno)
        sections[current].append((lineno, line))
    return sections


def _pairs(lines, section: str, split_commas: bool = False):
    """Yield ``(lineno, key, value)``; rejects duplicate keys."""
    seen = set()
    for lineno, line in lines:
        chunks = [c for c in line.split(",")] if split_commas else [line]
        for chunk in chunks:
            chunk = chunk.strip()
            if not chunk:
                raise ScenarioParseError("empty entry", lineno)
            if "=" not in chunk:
                raise ScenarioParseError(f"expected 'key = value', got {chunk!r}", lineno)
            key, value = (part.strip() for part in chunk.split("=", 1))
            if not _IDENT.match(key):
                raise ScenarioParseError(f"bad key {key!r}", lineno)
            if key in seen:
                raise ScenarioSemanticError(f"duplicate key in [{section}]", key)
            seen.add(key)
            yield lineno, key, value


def loads(text: str, name: str = "scenario") -> Scenario:
    """Parse scenario text. Defaults: kind none, rk4, dt 1e-3, t_end 1, record_every 10, nu 0, mu 0."""
    sections = _split_sections(text)
    if "system" not in sections:
        raise ScenarioSemanticError("missing section", "[system]")

    sysvals = {}
    for lineno, key, value in _pairs(sections["system"], "system"):
        if key not in ("coordinates", "lagrangian"):
            raise ScenarioSemanticError("unknown key in [system]", key)
        sysvals[key] = (lineno, value)
    for key in ("coordinates", "lagrangian"):
        if key not in sysvals:
            raise ScenarioSemanticError("missing key in [system]", key)
    lineno, coord_text = sysvals["coordinates"]
    coords = tuple(c.strip() for c in coord_text.split(","))
    for c in coords:
        if not _IDENT.match(c):
            raise ScenarioParseError(f"bad coordinate name {c!r}", lineno)
        if c == "s" or velocity_name(c) == "vs":
            raise ScenarioSemanticError("coordinate name is reserved", c)
    if len(set(coords)) != len(coords):
        raise ScenarioSemanticError("duplicate coordinate", "coordinates")

    params = {}
    for lineno, key, value in _pairs(sections.get("params", []), "params"):
        params[key] = _number(value, key, lineno)

    declared = set(coords) | {velocity_name(c) for c in coords} | {"s"} | set(params)
    for p in params:
        if p in set(coords) | {velocity_name(c) for c in coords} | {"s", "vs"}:
            raise ScenarioSemanticError("parameter name clashes with a variable", p)

    def expr(key, value, lineno):
        try:
            return parse_expr(value, declared)
        except UndeclaredIdentifierError as exc:
            raise ScenarioSemanticError(f"unknown variable {exc.name!r}", key) from None
        except ExprSyntaxError as exc:
            raise ScenarioParseError(f"{key}: {exc}", lineno) from None

    lineno, lag_text = sysvals["lagrangian"]
    lagrangian = expr("lagrangian", lag_text, lineno)

    kind = None
    constraints = []
    for lineno, key, value in _pairs(sections.get("constraints", []), "constraints"):
        if key == "kind":
            if value not in KINDS:
                raise ScenarioSemanticError(f"must be one of {', '.join(KINDS)}, got {value!r}", "kind")
            kind = value
        else:
            constraints.append(Constraint(key, expr(key, value, lineno)))
    kind = kind or "none"
    if kind == "none" and constraints:
        raise ScenarioSemanticError("constraints listed but kind is none", "kind")
    try:
        system = SystemSpec(coords, lagrangian, params, tuple(constraints), kind)
    except ValueError as exc:
        raise ScenarioSemanticError(str(exc), "system") from None

    init = {}
    for lineno, key, value in _pairs(sections.get("initial", []), "initial", split_commas=True):
        init[key] = (lineno, _number(value, key, lineno))
    allowed = set(coords) | set(system.velocities) | {"s", "mu"} | {f"nu_{c}" for c in system.constraint_names}
    for key in init:
        if key not in allowed:
            raise ScenarioSemanticError("unknown key in [initial]", key)
    for var in list(coords) + list(system.velocities):
        if var not in init:
            raise ScenarioSemanticError("missing initial value", var)
    if kind != "vakonomic":
        for key in init:
            if key == "mu" or key.startswith("nu_"):
                raise ScenarioSemanticError("multiplier initial values need kind vakonomic", key)
    value = lambda key, default=0.0: init[key][1] if key in init else default  # noqa: E731
    nu = mu = None
    if kind == "vakonomic":
        nu = tuple(value(f"nu_{c}") for c in system.constraint_names)
        mu = value("mu")
    initial = PhaseState(0.0, [value(c) for c in coords], [value(w) for w in system.velocities],
                         value("s"), nu, mu)
    binding = dict(zip(coords, initial.q)) | dict(zip(system.velocities, initial.v)) | {"s": initial.s} | params
    for c in system.constraints:
        try:
            residual = evaluate(c.expr, binding)
        except ArithmeticError as exc:
            raise ScenarioSemanticError(f"cannot evaluate at the initial state ({exc})", c.name) from None
        if abs(residual) > ADMISSIBILITY_TOL:
            raise ScenarioSemanticError(
                f"initial state violates the constraint by {residual:.3e} (tolerance {ADMISSIBILITY_TOL:.0e})", c.name)

    cfg = {}
    for lineno, key, val in _pairs(sections.get("integration", []), "integration"):
        if key not in _INTEGRATION_KEYS:
            raise ScenarioSemanticError("unknown key in [integration]", key)
        if key == "method":
            if val not in ("rk4", "rk45"):
                raise ScenarioSemanticError(f"must be rk4 or rk45, got {val!r}", "method")
            cfg[key] = val
        elif key == "record_every":
            number = _number(val, key, lineno)
            if number != int(number) or number < 1:
                raise ScenarioSemanticError("must be an integer >= 1", key)
            cfg[key] = int(number)
        else:
            cfg[key] = _number(val, key, lineno)
    cfg.setdefault("t_end", 1.0)
    try:
        config = IntegratorConfig(**cfg)
    except ValueError as exc:
        raise ScenarioSemanticError(str(exc), "integration") from None
    if config.t_end < initial.t:
        raise ScenarioSemanticError("must not precede the initial time", "t_end")

    scenario = Scenario(name, system, initial, config)
    return Scenario(name, system, initial, config, default_checks(scenario))


def load(path) -> Scenario:
    """Load a scenario file; the scenario is named after the file stem."""
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), name=path.stem)


# ---------------------------------------------------------------------------
# writing


def _num(x: float) -> str:
    return format(float(x), ".17g")


def dumps(sc: Scenario) -> str:
    """Canonical text of a scenario: fixed section order, sorted params, 17-digit numbers."""
    sys = sc.system
    out = ["[system]", f"coordinates = {', '.join(sys.coordinates)}", f"lagrangian = {to_text(sys.lagrangian)}"]
    if sys.params:
        out += ["", "[params]"] + [f"{k} = {_num(sys.params[k])}" for k in sorted(sys.params)]
    if sys.kind != "none" or sys.constraints:
        out += ["", "[constraints]", f"kind = {sys.kind}"]
        out += [f"{c.name} = {to_text(c.expr)}" for c in sys.constraints]
    st = sc.initial
    out += ["", "[initial]"]
    out.append(", ".join(f"{c} = {_num(x)}" for c, x in zip(sys.coordinates, st.q)))
    out.append(", ".join(f"{w} = {_num(x)}" for w, x in zip(sys.velocities, st.v)))
    out.append(f"s = {_num(st.s)}")
    if st.nu is not None and st.nu:
        out.append(", ".join(f"nu_{c} = {_num(x)}" for c, x in zip(sys.constraint_names, st.nu)))
    if st.mu is not None:
        out.append(f"mu = {_num(st.mu)}")
    cfg = sc.config
    out += ["", "[integration]", f"method = {cfg.method}", f"dt = {_num(cfg.dt)}", f"t_end = {_num(cfg.t_end)}",
            f"record_every = {cfg.record_every}"]
    if cfg.method == "rk45":
        out += [f"abs_tol = {_num(cfg.abs_tol)}", f"rel_tol = {_num(cfg.rel_tol)}"]
        defaults = IntegratorConfig()
        if cfg.dt_min != defaults.dt_min:
            out.append(f"dt_min = {_num(cfg.dt_min)}")
        if cfg.dt_max != defaults.dt_max:
            out.append(f"dt_max = {_num(cfg.dt_max)}")
    return "\n".join(out) + "\n"


def save(sc: Scenario, path) -> None:
    Path(path).write_text(dumps(sc), encoding="utf-8")


# ---------------------------------------------------------------------------
# checks attached to scenarios


def default_checks(sc: Scenario) -> tuple:
    """Generic invariant checks with their tolerances, chosen by kind."""
    sys = sc.system
    checks = [("cache_fd", 1e-5), ("pairing", 1e-12)]
    if not sys.constraints:
        checks += [("equivalence_fields", 1e-12), ("equivalence_trajectories", 1e-10)]
    if sys.kind in ("none", "nonholonomic") or not sys.constraints:
        checks.append(("energy_law", 1e-9))
    if sys.constraints:
        checks += [("tangency", 1e-10), ("constraint_drift", 1e-7)]
    if sys.kind == "vakonomic":
        checks.append(("mu_closed_form", 1e-8))
    checks.append(("order", (12.0, 20.0)))
    return tuple(checks)


# ---------------------------------------------------------------------------
# built-ins

_BUILTIN_TEXT = {
    "damped_oscillator": """\
# Linear oscillator with the Herglotz friction term -gamma*s.
[system]
coordinates = q
lagrangian = 0.5*vq^2 - 0.5*q^2 - gamma*s

[params]
gamma = 0.2

[initial]
q = 1, vq = 0, s = 0

[integration]
method = rk4
dt = 1e-3
t_end = 1
""",
    "rolling_disk": """\
# Vertical rolling disk without sliding, with the dissipation term delta*s.
[system]
coordinates = x, y, theta, phi
lagrangian = 0.5*(vx^2 + vy^2 + vtheta^2 + vphi^2) + delta*s

[params]
delta = 0.1

[constraints]
kind = nonholonomic
phi1 = vx - vtheta*cos(phi)
phi2 = vy - vtheta*sin(phi)

[initial]
x = 0, y = 0, theta = 0, phi = 0
vx = 1, vy = 0, vtheta = 1, vphi = 1
s = 0

[integration]
method = rk4
dt = 1e-3
t_end = 1
""",
    "chaplygin_sleigh": """\
# Chaplygin sleigh with friction gamma*s; the blade at (x, y) may only slide along its direction.
[system]
coordinates = x, y, theta
lagrangian = 0.5*((alpha*cos(theta) - beta*sin(theta))*vtheta + vy)^2 + 0.5*((beta*cos(theta) + alpha*sin(theta))*vtheta - vx)^2 + vtheta^2 + gamma*s

[params]
alpha = 0.1
beta = 0.1
gamma = 0.3

[constraints]
kind = nonholonomic
blade = vx*sin(theta) - vy*cos(theta)

[initial]
x = 0, y = 0, theta = 0
vx = 1, vy = 0, vtheta = 1
s = 0

[integration]
method = rk4
dt = 1e-3
t_end = 1
""",
}
_BUILTIN_TEXT["rolling_disk_vakonomic"] = (
    _BUILTIN_TEXT["rolling_disk"]
    .replace("kind = nonholonomic", "kind = vakonomic")
    .replace("s = 0\n", "s = 0\nnu_phi1 = 0, nu_phi2 = 0, mu = 0\n")
)

_EXTRA_CHECKS = {
    "damped_oscillator": (("oscillator_closed_form", 1e-10),),
    "rolling_disk": (("disk_multipliers", 1e-9), ("disk_theta_rate", 1e-8)),
    "chaplygin_sleigh": (),
    "rolling_disk_vakonomic": (),
}

BUILTIN_NAMES = tuple(_BUILTIN_TEXT)


def builtin_text(name: str) -> str:
    try:
        return _BUILTIN_TEXT[name]
    except KeyError:
        raise KeyError(f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None


def builtin(name: str) -> Scenario:
    """One of ``damped_oscillator``, ``rolling_disk``, ``chaplygin_sleigh``, ``rolling_disk_vakonomic``."""
    sc = loads(builtin_text(name), name=name)
    return Scenario(sc.name, sc.system, sc.initial, sc.config, sc.checks + _EXTRA_CHECKS[name])
