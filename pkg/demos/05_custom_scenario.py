# coding: utf-8

# # Writing your own scenario file
#
# A scenario is a short sectioned text file. Here a skate on a plane whose
# blade direction turns with the action s, so the constraint depends on s.

# %%
import os
import tempfile
from pathlib import Path

from herglotz import dumps, load, loads, run_checks
from herglotz.cli import main

here = Path(__file__).resolve().parent
text = (here / "scenarios" / "skate_s_dependent.txt").read_text()
print(text)

# %%
sc = loads(text, "skate")
print(sc.system.kind, sc.system.constraint_names, sc.system.params)
for r in run_checks(sc):
    print(r.line())

# %% [markdown]
# Files round-trip through a canonical form: sorted keys and numbers written
# with 17 significant digits.

# %%
print(dumps(sc))

# %% [markdown]
# Mistakes are reported with the offending key or line.

# %%
for bad in (text.replace("kind = nonholonomic", "kind = holonomic"), text.replace("vy = 0", "vy = 0.5")):
    try:
        loads(bad)
    except ValueError as exc:
        print(type(exc).__name__, "->", exc)

# %% [markdown]
# The CLI takes the same files. Exit code 0 means every check passed.

# %%
with tempfile.TemporaryDirectory() as tmp:
    out = os.path.join(tmp, "skate.csv")
    code = main(["run", "--scenario", str(here / "scenarios" / "skate_s_dependent.txt"), "--out", out])
    print("exit code", code)
    print(Path(out).read_text().splitlines()[0])
    print(len(load(here / "scenarios" / "skate_s_dependent.txt").system.constraints), "constraint(s)")
