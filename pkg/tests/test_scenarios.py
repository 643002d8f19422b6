from pathlib import Path

import pytest

from herglotz.mechanics import build_cache, nonholonomic_field
from herglotz.scenarios import (
    BUILTIN_NAMES, ScenarioParseError, ScenarioSemanticError, builtin, builtin_text,
    default_checks, dumps, load, loads, save,
)
from herglotz.symexpr import parse_expr

DEMO_SCENARIOS = sorted((Path(__file__).parents[1] / "demos" / "scenarios").glob("*.txt"))

MINIMAL = """\
[system]
coordinates = q
lagrangian = 0.5*vq^2 - 0.5*q^2
[initial]
q = 1, vq = 0
"""


def test_builtin_names():
    assert BUILTIN_NAMES == ("damped_oscillator", "rolling_disk", "chaplygin_sleigh", "rolling_disk_vakonomic")
    with pytest.raises(KeyError, match="unknown builtin"):
        builtin("pendulum")


def test_rolling_disk_contents():
    sc = builtin("rolling_disk")
    sys = sc.system
    assert sys.kind == "nonholonomic"
    assert [c.expr for c in sys.constraints] == [parse_expr("vx - vtheta*cos(phi)"), parse_expr("vy - vtheta*sin(phi)")]
    assert sys.params == {"delta": 0.1}
    assert sc.initial.q == (0, 0, 0, 0) and sc.initial.v == (1, 0, 1, 1) and sc.initial.s == 0
    assert sc.config.method == "rk4" and sc.config.dt == 1e-3 and sc.config.t_end == 1.0


def test_sleigh_contents():
    sys = builtin("chaplygin_sleigh").system
    assert sys.constraints[0].expr == parse_expr("vx*sin(theta) - vy*cos(theta)")
    assert sys.params == {"alpha": 0.1, "beta": 0.1, "gamma": 0.3}


def test_oscillator_contents():
    sys = builtin("damped_oscillator").system
    assert sys.lagrangian == parse_expr("0.5*vq^2 - 0.5*q^2 - gamma*s")
    assert sys.params == {"gamma": 0.2}


def test_vakonomic_builtin_starts_with_zero_multipliers():
    sc = builtin("rolling_disk_vakonomic")
    assert sc.system.kind == "vakonomic"
    assert sc.initial.nu == (0.0, 0.0) and sc.initial.mu == 0.0
    assert ("mu_closed_form", 1e-8) in sc.checks


def test_defaults():
    sc = loads(MINIMAL)
    assert sc.system.kind == "none"
    assert sc.initial.s == 0.0 and sc.initial.nu is None
    cfg = sc.config
    assert (cfg.method, cfg.dt, cfg.t_end, cfg.record_every) == ("rk4", 1e-3, 1.0, 10)
    assert sc.checks == default_checks(sc)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_round_trip_builtins(name):
    sc = builtin(name)
    text = dumps(sc)
    again = loads(text, name)
    assert dumps(again) == text
    assert (again.system, again.initial, again.config) == (sc.system, sc.initial, sc.config)


@pytest.mark.parametrize("path", DEMO_SCENARIOS, ids=lambda p: p.stem)
def test_round_trip_demo_files(path, tmp_path):
    sc = load(path)
    out = tmp_path / path.name
    save(sc, out)
    assert dumps(load(out)) == out.read_text()
    assert load(out).system == sc.system


def test_canonical_form():
    messy = """\
# comment line
[integration]
t_end = 2
dt = 2e-3            # trailing comment
[initial]
vq = 0.1, q = 0.30000000000000004
[params]
k = 4
gamma = 0.2
[system]
lagrangian = 0.5*vq^2 - 0.5*k*q^2 - gamma*s
coordinates = q
"""
    assert dumps(loads(messy)) == """\
[system]
coordinates = q
lagrangian = 0.5*vq^2 - 0.5*k*q^2 - gamma*s

[params]
gamma = 0.20000000000000001
k = 4

[initial]
q = 0.30000000000000004
vq = 0.10000000000000001
s = 0

[integration]
method = rk4
dt = 0.002
t_end = 2
record_every = 10
"""


def test_file_matching_builtin_gives_identical_field(tmp_path):
    path = tmp_path / "disk.txt"
    path.write_text(builtin_text("rolling_disk"))
    a, b = load(path), builtin("rolling_disk")
    fa = nonholonomic_field(a.system, build_cache(a.system), a.initial)
    fb = nonholonomic_field(b.system, build_cache(b.system), b.initial)
    assert fa == fb
    assert a.name == "disk"


def replace_line(text, old, new):
    assert old in text
    return text.replace(old, new)


DISK = builtin_text("rolling_disk")


@pytest.mark.parametrize("text, key", [
    (replace_line(DISK, "kind = nonholonomic", "kind = holonomic"), "kind"),
    (replace_line(DISK, "vx = 1, vy = 0, vtheta = 1, vphi = 1", "vx = 1, vtheta = 1, vphi = 1"), "vy"),
    (replace_line(DISK, "delta*s", "delta*s + w"), "lagrangian"),
    (replace_line(DISK, "phi2 = vy - vtheta*sin(phi)", "phi2 = vy - vtheta*sin(psi)"), "phi2"),
    (DISK + "\n[params]\nk = 1\n", "[params]"),
    (replace_line(DISK, "[params]", "[parameters]"), "[parameters]"),
    (replace_line(DISK, "delta = 0.1", "delta = 0.1\ndelta = 0.2"), "delta"),
    (replace_line(DISK, "method = rk4", "method = euler"), "method"),
    (replace_line(DISK, "t_end = 1", "t_end = 1\nsteps = 10"), "steps"),
    (replace_line(DISK, "s = 0\n", "s = 0\nmu = 0\n"), "mu"),
    (replace_line(DISK, "vx = 1, vy = 0", "vx = 1, vy = 0.5"), "phi2"),
    (replace_line(DISK, "coordinates = x, y", "coordinates = s, y"), "s"),
    (replace_line(DISK, "kind = nonholonomic", "kind = none"), "kind"),
    (replace_line(DISK, "t_end = 1", "t_end = -1"), "t_end"),
    (replace_line(DISK, "dt = 1e-3", "dt = 0"), "integration"),
    (replace_line(DISK, "delta = 0.1", "vx = 0.1"), "vx"),
    (replace_line(DISK, "[system]", "[system]\nmass = 1"), "mass"),
    ("[params]\nk = 1\n", "[system]"),
])
def test_semantic_errors_name_the_key(text, key):
    with pytest.raises(ScenarioSemanticError) as info:
        loads(text)
    assert info.value.key == key


@pytest.mark.parametrize("text, line", [
    ("coordinates = q\n", 1),
    ("[system\n", 1),
    (MINIMAL.replace("q = 1, vq = 0", "q = 1, vq = zero"), 5),
    (MINIMAL.replace("q = 1, vq = 0", "q = 1,, vq = 0"), 5),
    (MINIMAL.replace("lagrangian = 0.5*vq^2 - 0.5*q^2", "lagrangian = 0.5*vq^2 -* q"), 3),
    (MINIMAL.replace("q = 1, vq = 0", "q 1"), 5),
    (MINIMAL + "[integration]\ndt = inf\n", 7),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioParseError) as info:
        loads(text)
    assert info.value.line == line


def test_vakonomic_initial_multipliers_are_read():
    text = replace_line(builtin_text("rolling_disk_vakonomic"), "nu_phi1 = 0", "nu_phi1 = 0.25")
    assert loads(text).initial.nu == (0.25, 0.0)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load(tmp_path / "missing.txt")


def test_default_checks_by_kind():
    names = lambda sc: [n for n, _ in default_checks(sc)]  # noqa: E731
    assert "equivalence_fields" in names(builtin("damped_oscillator"))
    assert "tangency" in names(builtin("rolling_disk"))
    assert "energy_law" not in names(builtin("rolling_disk_vakonomic"))
    assert "mu_closed_form" in names(builtin("rolling_disk_vakonomic"))
    assert all(names(builtin(n))[-1] == "order" for n in BUILTIN_NAMES)
