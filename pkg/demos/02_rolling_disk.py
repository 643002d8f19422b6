# coding: utf-8

# # A vertical rolling disk with a dissipative term
#
# Coordinates (x, y) of the contact point, rolling angle theta and heading phi.
# The disk rolls without slipping, which gives two velocity constraints.
# The term delta*s makes the rolling speed grow like exp(delta t).

# %%
import math

import numpy as np

from herglotz import build_cache, builtin, integrate
from herglotz.scenarios import builtin_text

print(builtin_text("rolling_disk"))

# %%
sc = builtin("rolling_disk")
cache = build_cache(sc.system)
traj = integrate(sc.system, cache, None, sc.initial, sc.config)

final = traj.final.state
print("theta'(1)     =", final.v[2])
print("exp(delta)    =", math.exp(sc.system.params["delta"]))
print("max |phi_a|   =", traj.summary.max_constraint_drift)

# %% [markdown]
# The constraint forces can be found by hand: with phi' constant, the
# multipliers are lambda_1 = theta' phi' sin(phi) and lambda_2 = -theta' phi' cos(phi).

# %%
lam = np.array([smp.field.multipliers for smp in traj.samples])
st = [smp.state for smp in traj.samples]
hand = np.array([[s.v[2] * s.v[3] * math.sin(s.q[3]), -s.v[2] * s.v[3] * math.cos(s.q[3])] for s in st])
print("largest multiplier mismatch:", np.abs(lam - hand).max())

# %%
xy = np.array([s.q[:2] for s in st])
print("path of the contact point (every 20th sample):")
print(np.round(xy[::20], 4))
