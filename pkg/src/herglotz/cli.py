"""Command line front end: ``run``, ``check``, ``compare`` and ``list``.

Exit codes are 0 on success, 1 for usage or I/O problems, 2 when the
dynamics break down (singular velocity Hessian, dependent constraints,
domain errors, failed adaptive steps) and 3 when ``check`` finds a failing
invariant.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .checks import CheckContext, CheckResult, run_checks
from .integrate import AdmissibilityError, Trajectory, integrate
from .mechanics import KINDS, PhysicsError, build_cache
from .scenarios import (
    BUILTIN_NAMES, Scenario, ScenarioParseError, ScenarioSemanticError,
    builtin, default_checks, load,
)
from .symexpr import EvalDomainError

EXIT_OK, EXIT_USAGE, EXIT_PHYSICS, EXIT_CHECK = 0, 1, 2, 3

# checks that a plain run can judge from its own monitor
_RUN_CHECKS = ("pairing", "energy_law", "constraint_drift")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunReport:
    scenario: str
    kind: str
    steps: int
    wall_time: float
    final: object
    max_constraint_drift: float
    max_energy_law_residual: float | None
    checks: list = field(default_factory=list)

    def render(self) -> str:
        lines = [
            f"scenario     {self.scenario}",
            f"kind         {self.kind}",
            f"steps        {self.steps}",
            f"wall time    {self.wall_time:.3f} s",
            f"final state  t={self.final.t:.17g} {self.final.describe()}",
            f"max drift    {self.max_constraint_drift:.3e}",
            "energy law   " + ("n/a" if self.max_energy_law_residual is None
                                else f"{self.max_energy_law_residual:.3e}"),
        ]
        lines += [r.line() for r in self.checks]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# scenario selection


def _scenario(args) -> Scenario:
    if args.builtin:
        try:
            sc = builtin(args.builtin)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    else:
        try:
            sc = load(args.scenario)
        except FileNotFoundError:
            raise UsageError(f"scenario file not found: {args.scenario}") from None
        except OSError as exc:
            raise UsageError(f"cannot read scenario {args.scenario}: {exc.strerror}") from None
        except (ScenarioParseError, ScenarioSemanticError) as exc:
            raise UsageError(f"{args.scenario}: {exc}") from None
    return sc


def _apply_overrides(sc: Scenario, args) -> Scenario:
    system, initial = sc.system, sc.initial
    kind = getattr(args, "kind", None)
    if kind == "none":
        system = system.without_constraints()
        initial = replace(initial, nu=None, mu=None)
    elif kind is not None:
        system = system.with_kind(kind)
        if kind != "vakonomic":
            initial = replace(initial, nu=None, mu=None)
    changes = {}
    for opt, key in (("t_end", "t_end"), ("dt", "dt"), ("method", "method")):
        value = getattr(args, opt, None)
        if value is not None:
            changes[key] = value
    try:
        config = replace(sc.config, **changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Scenario(sc.name, system, initial, config)
    extra = tuple(c for c in sc.checks if c not in default_checks(sc))
    checks = default_checks(out) + (extra if system == sc.system else ())
    return replace(out, checks=checks)


# ---------------------------------------------------------------------------
# CSV output


def csv_header(sc: Scenario, kind: str) -> list[str]:
    sys_ = sc.system
    cols = ["t", *sys_.coordinates, *sys_.velocities, "s"]
    if kind == "vakonomic":
        cols.append("mu")
    prefix = "nu_" if kind == "vakonomic" else "lambda_"
    if kind != "none":
        cols += [prefix + c for c in sys_.constraint_names]
    cols += ["E", "energy_rate_actual", "energy_rate_predicted"]
    cols += ["residual_" + c for c in sys_.constraint_names]
    return cols


def _fmt(x) -> str:
    # adding 0.0 turns -0.0 into 0.0
    return "" if x is None else format(float(x) + 0.0, ".17g")


def csv_rows(traj: Trajectory):
    for smp in traj.samples:
        st, fe = smp.state, smp.field
        row = [st.t, *st.q, *st.v, st.s]
        if traj.kind == "vakonomic":
            row.append(st.mu)
            row += list(st.nu)
        elif traj.kind == "nonholonomic":
            row += list(fe.multipliers)
        row += [fe.energy, fe.energy_rate_actual, fe.energy_rate_predicted]
        row += list(fe.constraint_residuals)
        yield [_fmt(x) for x in row]


def write_csv(path, header, rows) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        if isinstance(exc, OSError):
            raise UsageError(f"cannot write {path}: {exc.strerror}") from None
        raise


# ---------------------------------------------------------------------------
# commands


def _simulate(sc: Scenario, kind: str | None = None, config=None) -> tuple[Trajectory, float]:
    t0 = time.perf_counter()
    cache = build_cache(sc.system)
    try:
        traj = integrate(sc.system, cache, kind, sc.initial, config or sc.config)
    except AdmissibilityError as exc:
        raise UsageError(str(exc)) from None
    return traj, time.perf_counter() - t0


def _report(sc: Scenario, traj: Trajectory, wall: float) -> RunReport:
    summ = traj.summary
    measured = {
        "pairing": summ.max_pairing_residual,
        "energy_law": summ.max_energy_rate_mismatch,
        "constraint_drift": summ.max_constraint_drift,
    }
    results = [CheckResult(name, measured[name], tol, measured[name] <= tol)
               for name, tol in sc.checks if name in _RUN_CHECKS]
    law_applies = traj.kind != "vakonomic" or not sc.system.constraints
    return RunReport(sc.name, traj.kind, summ.steps, wall, traj.final.state, summ.max_constraint_drift,
                     summ.max_energy_rate_mismatch if law_applies else None, results)


def cmd_run(args) -> int:
    sc = _apply_overrides(_scenario(args), args)
    traj, wall = _simulate(sc)
    if args.out:
        write_csv(args.out, csv_header(sc, traj.kind), csv_rows(traj))
    print(_report(sc, traj, wall).render())
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _scenario(args)
    results = run_checks(sc, CheckContext(sc))
    print(f"scenario     {sc.name}")
    print(f"kind         {sc.system.kind}")
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"check failed: {failed[0].name}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _apply_overrides(_scenario(args), args)
    if not sc.system.constraints:
        raise UsageError(f"scenario {sc.name!r} has no constraints; nothing to compare")
    config = replace(sc.config, method="rk4")
    runs = {}
    for kind in ("nonholonomic", "vakonomic"):
        runs[kind], _ = _simulate(sc, kind, config)
    prefix = args.out or sc.name
    for kind, traj in runs.items():
        write_csv(f"{prefix}_{kind}.csv", csv_header(sc, kind), csv_rows(traj))
    rows = []
    for a, b in zip(runs["nonholonomic"].samples, runs["vakonomic"].samples):
        sa, sb = a.state, b.state
        dq = max(abs(x - y) for x, y in zip(sa.q, sb.q))
        dv = max(abs(x - y) for x, y in zip(sa.v, sb.v))
        rows.append([_fmt(sa.t), _fmt(dq), _fmt(dv), _fmt(sb.s - sa.s)])
    write_csv(f"{prefix}_divergence.csv", ["t", "dq_inf", "dv_inf", "ds"], rows)
    last = rows[-1]
    print(f"scenario     {sc.name}")
    print(f"final        t={last[0]} dq_inf={last[1]} dv_inf={last[2]} ds={last[3]}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in BUILTIN_NAMES:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="herglotz", description="Integrate and verify contact Lagrangian systems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--builtin", metavar="NAME", help="one of: " + ", ".join(BUILTIN_NAMES))
        g.add_argument("--scenario", metavar="PATH", help="scenario file")

    def overrides(sp):
        sp.add_argument("--t-end", type=float, dest="t_end")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--kind", choices=KINDS, help="'none' drops the constraints")

    run = sub.add_parser("run", help="integrate a scenario and write a CSV")
    source(run)
    run.add_argument("--out", metavar="CSV")
    overrides(run)
    run.add_argument("--method", choices=("rk4", "rk45"))
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="run the invariant suite")
    source(check)
    check.set_defaults(func=cmd_check)

    compare = sub.add_parser("compare", help="nonholonomic vs vakonomic trajectories")
    source(compare)
    compare.add_argument("--out", metavar="PREFIX")
    compare.add_argument("--t-end", type=float, dest="t_end")
    compare.add_argument("--dt", type=float)
    compare.set_defaults(func=cmd_compare)

    lst = sub.add_parser("list", help="print the built-in scenario names")
    lst.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"herglotz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PhysicsError, EvalDomainError) as exc:
        print(f"herglotz: physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
